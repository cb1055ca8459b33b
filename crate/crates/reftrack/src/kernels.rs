//! Prior mean and covariance families.
//!
//! Two stationary kernels are provided: the squared-exponential
//! `k(t,t') = th1^2 exp(-(t-t')^2 / (2 th2^2))` and the periodic
//! `k(t,t') = th1^2 exp(-(2/th2^2) sin^2(pi (t-t') / th3))`. Both expose
//! analytic first and second time derivatives and the structural
//! properties the trainers rely on: monotone decay of the covariance and
//! of its derivative magnitude beyond a lag threshold for the
//! squared-exponential, exact periodicity for the periodic family.

use crate::error::{Error, Result};

/// Kernel hyperparameters plus the measurement-noise variance.
///
/// `values` is ordered: output scale th1 first, then the length/roughness
/// scale th2, then (periodic only) the period th3. All are strictly
/// positive; `noise_variance` is sigma_n^2 >= 0 in squared output units.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub values: Vec<f64>,
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(values: Vec<f64>, noise_variance: f64) -> Self {
        Self { values, noise_variance }
    }
}

/// Covariance function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    Periodic,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelFamily::SquaredExponential => write!(f, "squared_exponential"),
            KernelFamily::Periodic => write!(f, "periodic"),
        }
    }
}

impl KernelFamily {
    pub fn n_params(&self) -> usize {
        match self {
            KernelFamily::SquaredExponential => 2,
            KernelFamily::Periodic => 3,
        }
    }

    pub fn validate(&self, hp: &Hyperparameters) -> Result<()> {
        if hp.values.len() != self.n_params() {
            return Err(Error::Config(format!(
                "{self} kernel takes {} hyperparameters, got {}",
                self.n_params(),
                hp.values.len()
            )));
        }
        if let Some(v) = hp.values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!(
                "{self} kernel scale parameters must be strictly positive and finite, got {v}"
            )));
        }
        if !(hp.noise_variance >= 0.0) || !hp.noise_variance.is_finite() {
            return Err(Error::Config(format!(
                "noise variance must be finite and >= 0, got {}",
                hp.noise_variance
            )));
        }
        Ok(())
    }

    /// The period th3 when the family has one.
    pub fn period(&self, hp: &Hyperparameters) -> Option<f64> {
        match self {
            KernelFamily::SquaredExponential => None,
            KernelFamily::Periodic => hp.values.get(2).copied(),
        }
    }

    /// k(t, t').
    pub fn eval(&self, hp: &Hyperparameters, t: f64, t_other: f64) -> Result<f64> {
        self.validate(hp)?;
        Ok(self.eval_lag(hp, t - t_other))
    }

    /// d/dt k(t_i, t), evaluated analytically.
    pub fn eval_dt(&self, hp: &Hyperparameters, t_i: f64, t: f64) -> Result<f64> {
        self.validate(hp)?;
        Ok(self.eval_dt_lag(hp, t - t_i))
    }

    /// d^2/dt^2 k(t_i, t), evaluated analytically.
    pub fn eval_dtt(&self, hp: &Hyperparameters, t_i: f64, t: f64) -> Result<f64> {
        self.validate(hp)?;
        Ok(self.eval_dtt_lag(hp, t - t_i))
    }

    /// Lag threshold zeta(theta) beyond which |dk/dt| decreases strictly
    /// monotonously in the lag. Defined for the squared-exponential family
    /// only, where it equals th2.
    pub fn monotonicity_threshold(&self, hp: &Hyperparameters) -> Result<f64> {
        self.validate(hp)?;
        match self {
            KernelFamily::SquaredExponential => Ok(hp.values[1]),
            KernelFamily::Periodic => Err(Error::Unsupported(
                "monotonicity threshold zeta is undefined for the periodic kernel".into(),
            )),
        }
    }

    /// Stationary form: k as a function of the lag d = t - t'.
    pub(crate) fn eval_lag(&self, hp: &Hyperparameters, d: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => {
                let (th1, th2) = (hp.values[0], hp.values[1]);
                th1 * th1 * (-d * d / (2.0 * th2 * th2)).exp()
            }
            KernelFamily::Periodic => {
                let (th1, th2, th3) = (hp.values[0], hp.values[1], hp.values[2]);
                let s = (std::f64::consts::PI * d / th3).sin();
                th1 * th1 * (-2.0 * s * s / (th2 * th2)).exp()
            }
        }
    }

    /// d/dt k(t_i, t) as a function of the lag d = t - t_i.
    pub(crate) fn eval_dt_lag(&self, hp: &Hyperparameters, d: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => {
                let th2 = hp.values[1];
                -self.eval_lag(hp, d) * d / (th2 * th2)
            }
            KernelFamily::Periodic => {
                let (th2, th3) = (hp.values[1], hp.values[2]);
                let two_phi = 2.0 * std::f64::consts::PI * d / th3;
                let rate = 2.0 * std::f64::consts::PI / (th2 * th2 * th3);
                -self.eval_lag(hp, d) * rate * two_phi.sin()
            }
        }
    }

    /// d^2/dt^2 k(t_i, t) as a function of the lag d = t - t_i.
    pub(crate) fn eval_dtt_lag(&self, hp: &Hyperparameters, d: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => {
                let th2 = hp.values[1];
                let th2_sq = th2 * th2;
                self.eval_lag(hp, d) * (d * d - th2_sq) / (th2_sq * th2_sq)
            }
            KernelFamily::Periodic => {
                let (th2, th3) = (hp.values[1], hp.values[2]);
                let two_phi = 2.0 * std::f64::consts::PI * d / th3;
                let rate = 2.0 * std::f64::consts::PI / (th2 * th2 * th3);
                let curv = 2.0 * std::f64::consts::PI / th3;
                self.eval_lag(hp, d)
                    * (rate * rate * two_phi.sin() * two_phi.sin() - rate * curv * two_phi.cos())
            }
        }
    }

    /// Upper bound on |d/dt k(t_i, t)| for t - t_i ranging over
    /// `[lag_lo, lag_hi]`. Exact for the squared-exponential (the magnitude
    /// is unimodal in |lag| with its peak at th2); a global bound for the
    /// periodic family.
    pub(crate) fn sup_abs_dt_lag(&self, hp: &Hyperparameters, lag_lo: f64, lag_hi: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => {
                let th2 = hp.values[1];
                let (a_lo, a_hi) = abs_lag_range(lag_lo, lag_hi);
                let mut sup: f64 = 0.0;
                for a in [a_lo, a_hi, th2] {
                    if a >= a_lo && a <= a_hi {
                        sup = sup.max(self.eval_dt_lag(hp, a).abs());
                    }
                }
                sup
            }
            KernelFamily::Periodic => {
                let (th1, th2, th3) = (hp.values[0], hp.values[1], hp.values[2]);
                2.0 * std::f64::consts::PI * th1 * th1 / (th2 * th2 * th3)
            }
        }
    }

    /// Upper bound on |d^2/dt^2 k(t_i, t)| for t - t_i in `[lag_lo, lag_hi]`.
    pub(crate) fn sup_abs_dtt_lag(&self, hp: &Hyperparameters, lag_lo: f64, lag_hi: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => {
                let th2 = hp.values[1];
                let (a_lo, a_hi) = abs_lag_range(lag_lo, lag_hi);
                // |g''| has interior critical points at 0 and sqrt(3) th2.
                let mut sup: f64 = 0.0;
                for a in [a_lo, a_hi, 0.0, 3.0_f64.sqrt() * th2] {
                    if a >= a_lo && a <= a_hi {
                        sup = sup.max(self.eval_dtt_lag(hp, a).abs());
                    }
                }
                sup
            }
            KernelFamily::Periodic => {
                let (th1, th2, th3) = (hp.values[0], hp.values[1], hp.values[2]);
                let rate = 2.0 * std::f64::consts::PI / (th2 * th2 * th3);
                let curv = 2.0 * std::f64::consts::PI / th3;
                th1 * th1 * (rate * rate + rate * curv)
            }
        }
    }
}

fn abs_lag_range(lag_lo: f64, lag_hi: f64) -> (f64, f64) {
    debug_assert!(lag_lo <= lag_hi);
    if lag_lo <= 0.0 && lag_hi >= 0.0 {
        (0.0, lag_lo.abs().max(lag_hi.abs()))
    } else {
        (
            lag_lo.abs().min(lag_hi.abs()),
            lag_lo.abs().max(lag_hi.abs()),
        )
    }
}

/// Constant prior mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSpec {
    pub constant: f64,
}

impl MeanSpec {
    pub fn new(constant: f64) -> Self {
        Self { constant }
    }

    pub fn eval(&self, _t: f64) -> f64 {
        self.constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn se(th1: f64, th2: f64) -> (KernelFamily, Hyperparameters) {
        (
            KernelFamily::SquaredExponential,
            Hyperparameters::new(vec![th1, th2], 0.0),
        )
    }

    fn periodic(th1: f64, th2: f64, th3: f64) -> (KernelFamily, Hyperparameters) {
        (
            KernelFamily::Periodic,
            Hyperparameters::new(vec![th1, th2, th3], 0.0),
        )
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn se_zero_lag_is_output_variance() {
        let (k, hp) = se(1.0, 1.0);
        assert_eq!(k.eval(&hp, 3.0, 3.0).unwrap(), 1.0);
        let (k, hp) = se(0.7, 0.2);
        assert_relative_eq!(k.eval(&hp, 1.0, 1.0).unwrap(), 0.49, max_relative = 1e-15);
    }

    #[test]
    fn se_unit_lag_value() {
        let (k, hp) = se(1.0, 1.0);
        assert_relative_eq!(
            k.eval(&hp, 0.0, 1.0).unwrap(),
            (-0.5_f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn periodic_full_period_lag_equals_zero_lag() {
        let (k, hp) = periodic(1.3, 0.8, 2.0);
        let zero = k.eval(&hp, 0.0, 0.0).unwrap();
        for n in 1..=5 {
            let v = k.eval(&hp, 0.0, 2.0 * n as f64).unwrap();
            assert_relative_eq!(v, zero, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_vanishes_at_zero_lag() {
        let (k, hp) = se(1.4, 0.3);
        assert_eq!(k.eval_dt(&hp, 2.0, 2.0).unwrap(), 0.0);
        let (k, hp) = periodic(1.0, 1.0, 3.0);
        assert_eq!(k.eval_dt(&hp, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn se_unit_lag_derivative() {
        let (k, hp) = se(1.0, 1.0);
        assert_relative_eq!(
            k.eval_dt(&hp, 0.0, 1.0).unwrap(),
            -(-0.5_f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn periodic_half_period_derivative_is_zero() {
        let (k, hp) = periodic(1.0, 0.5, 2.0);
        let v = k.eval_dt(&hp, 0.0, 1.0).unwrap();
        assert!(v.abs() < 1e-14, "got {v}");
    }

    #[test]
    fn se_second_derivative_at_zero_lag() {
        let (k, hp) = se(1.0, 1.0);
        assert_relative_eq!(k.eval_dtt(&hp, 0.0, 0.0).unwrap(), -1.0, max_relative = 1e-15);
        let (k, hp) = se(2.0, 0.5);
        assert_relative_eq!(
            k.eval_dtt(&hp, 0.0, 0.0).unwrap(),
            -4.0 / 0.25,
            max_relative = 1e-15
        );
    }

    #[test]
    fn se_second_derivative_decays() {
        let (k, hp) = se(1.0, 1.0);
        assert!(k.eval_dtt(&hp, 0.0, 50.0).unwrap().abs() < 1e-300);
    }

    #[test]
    fn periodic_second_derivative_is_periodic() {
        let (k, hp) = periodic(1.1, 0.6, 1.7);
        let at_zero = k.eval_dtt(&hp, 0.0, 0.0).unwrap();
        let at_period = k.eval_dtt(&hp, 0.0, 1.7).unwrap();
        assert_relative_eq!(at_zero, at_period, epsilon = 1e-12);
    }

    #[test]
    fn monotonicity_threshold_is_length_scale_for_se() {
        let (k, hp) = se(1.0, 0.22);
        assert_eq!(k.monotonicity_threshold(&hp).unwrap(), 0.22);
        let (k, hp) = se(1.0, 1.0);
        assert_eq!(k.monotonicity_threshold(&hp).unwrap(), 1.0);
    }

    #[test]
    fn monotonicity_threshold_unsupported_for_periodic() {
        let (k, hp) = periodic(1.0, 1.0, 1.0);
        assert!(matches!(
            k.monotonicity_threshold(&hp),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let k = KernelFamily::Periodic;
        let hp = Hyperparameters::new(vec![1.0, 1.0], 0.0);
        assert!(matches!(k.eval(&hp, 0.0, 1.0), Err(Error::Config(_))));
        let k = KernelFamily::SquaredExponential;
        let hp = Hyperparameters::new(vec![1.0, -1.0], 0.0);
        assert!(matches!(k.eval(&hp, 0.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn symmetry_and_stationarity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let th1 = rng.gen_range(0.1..3.0);
            let th2 = rng.gen_range(0.05..2.0);
            let th3 = rng.gen_range(0.3..4.0);
            let t = rng.gen_range(-5.0..5.0);
            let t2 = rng.gen_range(-5.0..5.0);
            let shift = rng.gen_range(-10.0..10.0);
            for (k, hp) in [se(th1, th2), periodic(th1, th2, th3)] {
                let a = k.eval(&hp, t, t2).unwrap();
                let b = k.eval(&hp, t2, t).unwrap();
                assert_eq!(a, b, "symmetry must be exact");
                let c = k.eval(&hp, t + shift, t2 + shift).unwrap();
                assert_relative_eq!(a, c, epsilon = 1e-12);
                // Positive in exact arithmetic; huge lag/scale ratios can
                // underflow to zero in f64.
                assert!(a >= 0.0 && a <= th1 * th1 + 1e-12);
                if (t - t2).abs() < 20.0 * th2 {
                    assert!(a > 0.0);
                }
            }
        }
    }

    #[test]
    fn se_assumption_monotone_covariance_and_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let th1 = rng.gen_range(0.2..2.0);
            let th2 = rng.gen_range(0.05..1.5);
            let (k, hp) = se(th1, th2);
            // Keep lag/scale ratios inside the range where exp() stays
            // normal, so strict inequalities are meaningful in f64.
            let d1: f64 = rng.gen_range(0.01..6.0_f64.min(25.0 * th2));
            let d2 = d1 * rng.gen_range(0.1..0.999);
            assert!(
                k.eval_lag(&hp, d1) < k.eval_lag(&hp, d2),
                "covariance must decay with lag"
            );
            // Derivative magnitude decays beyond zeta = th2.
            let e2 = th2 + rng.gen_range(1e-6..2.0 * th2);
            let e1 = e2 * rng.gen_range(1.001..3.0_f64.min(20.0 * th2 / e2).max(1.002));
            assert!(
                k.eval_dt_lag(&hp, e1).abs() < k.eval_dt_lag(&hp, e2).abs(),
                "derivative magnitude must decay beyond zeta"
            );
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let th1 = rng.gen_range(0.3..2.0);
            let th2 = rng.gen_range(0.2..2.0);
            let th3 = rng.gen_range(0.5..4.0);
            let t_i = rng.gen_range(-2.0..2.0);
            let t = t_i + rng.gen_range(-3.0..3.0);
            for (k, hp) in [se(th1, th2), periodic(th1, th2, th3)] {
                let h = 1e-5;
                let fd1 = central_diff(|x| k.eval(&hp, t_i, x).unwrap(), t, h);
                let an1 = k.eval_dt(&hp, t_i, t).unwrap();
                let scale1 = an1.abs().max(1e-3);
                assert!(
                    (fd1 - an1).abs() / scale1 <= 1e-6,
                    "first derivative mismatch: fd={fd1} analytic={an1}"
                );
                let fd2 = central_diff(|x| k.eval_dt(&hp, t_i, x).unwrap(), t, h);
                let an2 = k.eval_dtt(&hp, t_i, t).unwrap();
                let scale2 = an2.abs().max(1e-2);
                assert!(
                    (fd2 - an2).abs() / scale2 <= 1e-5,
                    "second derivative mismatch: fd={fd2} analytic={an2}"
                );
            }
        }
    }

    #[test]
    fn derivative_sup_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let th1 = rng.gen_range(0.3..2.0);
            let th2 = rng.gen_range(0.1..1.5);
            let th3 = rng.gen_range(0.5..3.0);
            let lo = rng.gen_range(-4.0..3.9);
            let hi = lo + rng.gen_range(1e-3..4.0);
            for (k, hp) in [se(th1, th2), periodic(th1, th2, th3)] {
                let sup1 = k.sup_abs_dt_lag(&hp, lo, hi);
                let sup2 = k.sup_abs_dtt_lag(&hp, lo, hi);
                for j in 0..=200 {
                    let d = lo + (hi - lo) * j as f64 / 200.0;
                    assert!(k.eval_dt_lag(&hp, d).abs() <= sup1 * (1.0 + 1e-12) + 1e-15);
                    assert!(k.eval_dtt_lag(&hp, d).abs() <= sup2 * (1.0 + 1e-12) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn constant_mean() {
        let m = MeanSpec::new(-0.05);
        assert_eq!(m.eval(0.0), -0.05);
        assert_eq!(m.eval(5.0), m.eval(-17.3));
        assert_eq!(MeanSpec::new(0.0).eval(5.0), 0.0);
    }
}
