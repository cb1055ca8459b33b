//! Gaussian-process posterior inference.
//!
//! A [`GPPosterior`] caches the Cholesky factor of the regularized Gram
//! matrix `K + sigma_n^2 I` together with the coefficient vector `c`
//! solving `(K + sigma_n^2 I) c = y - m(t)`. The posterior mean is then
//! the weighted sum `m(t*) + sum_i c_i k(t_i, t*)`, its time derivative
//! replaces `k` by `dk/dt`, and the triangle-inequality envelopes
//! `m_bar(t*) = sum_i |c_i| k(t_i, t*)` and
//! `mdot_bar(t*) = sum_i |c_i| |dk/dt(t_i, t*)|` bound the deviation of
//! the mean from the prior and the derivative magnitude.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{Hyperparameters, KernelFamily, MeanSpec};
use crate::linalg::CholeskyFactor;
use nalgebra::{DMatrix, DVector};

/// Relative jitter (times th1^2) added to the Gram diagonal after a first
/// factorization failure, before giving up.
const GRAM_JITTER_REL: f64 = 1e-10;

/// Negative posterior variances up to this magnitude are treated as
/// round-off and clamped to zero.
const VARIANCE_CLAMP: f64 = 1e-10;

/// Posterior of a GP conditioned on a dataset, with the Gram factorization
/// and coefficient vector cached.
#[derive(Debug, Clone)]
pub struct GPPosterior {
    spec: KernelFamily,
    mean: MeanSpec,
    hp: Hyperparameters,
    data: Dataset,
    coefficients: Vec<f64>,
    factor: CholeskyFactor,
    residual_vector: DVector<f64>,
    jitter: f64,
}

/// Point prediction with both envelopes attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    pub mean_bound: f64,
    pub derivative_bound: f64,
}

fn factor_gram(
    spec: KernelFamily,
    hp: &Hyperparameters,
    times: &[f64],
) -> Result<(CholeskyFactor, f64)> {
    let n = times.len();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        let k = spec.eval_lag(hp, times[i] - times[j]);
        if i == j {
            k + hp.noise_variance
        } else {
            k
        }
    });
    match CholeskyFactor::new(&gram) {
        Ok(f) => Ok((f, 0.0)),
        Err(_) => {
            let jitter = GRAM_JITTER_REL * hp.values[0] * hp.values[0];
            let regularized = &gram + DMatrix::identity(n, n) * jitter;
            let f = CholeskyFactor::new(&regularized)?;
            Ok((f, jitter))
        }
    }
}

/// Condition the GP on `data`, caching the Gram factorization and the
/// coefficient vector of the weighted-sum form.
pub fn build_posterior(
    spec: KernelFamily,
    mean: MeanSpec,
    hp: &Hyperparameters,
    data: &Dataset,
) -> Result<GPPosterior> {
    spec.validate(hp)?;
    let times: Vec<f64> = data.times().collect();
    let (factor, jitter) = factor_gram(spec, hp, &times)?;
    let residual = DVector::from_iterator(
        data.len(),
        data.points().iter().map(|&(t, y)| y - mean.eval(t)),
    );
    let coefficients = factor.solve(&residual);
    Ok(GPPosterior {
        spec,
        mean,
        hp: hp.clone(),
        data: data.clone(),
        coefficients: coefficients.iter().copied().collect(),
        factor,
        residual_vector: residual,
        jitter,
    })
}

impl GPPosterior {
    pub fn spec(&self) -> KernelFamily {
        self.spec
    }

    pub fn mean_spec(&self) -> MeanSpec {
        self.mean
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Jitter added to the Gram diagonal, zero unless the first
    /// factorization attempt failed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean via the weighted-sum form.
    pub fn posterior_mean(&self, t_star: f64) -> f64 {
        let mut acc = self.mean.eval(t_star);
        for (&(t_i, _), &c) in self.data.points().iter().zip(&self.coefficients) {
            acc += c * self.spec.eval_lag(&self.hp, t_star - t_i);
        }
        acc
    }

    /// Posterior mean via the matrix form: cross-covariance against the
    /// cached Gram solve. Algebraically identical to [`posterior_mean`];
    /// kept as the second route for consistency checks.
    ///
    /// [`posterior_mean`]: GPPosterior::posterior_mean
    pub fn posterior_mean_matrix_form(&self, t_star: f64) -> f64 {
        let cross = self.cross_covariance(t_star);
        self.mean.eval(t_star) + self.factor.solve(&cross).dot(&self.residual_vector)
    }

    /// Posterior variance at `t_star`, clamped to zero when round-off drives
    /// it marginally negative.
    pub fn posterior_variance(&self, t_star: f64) -> Result<f64> {
        let cross = self.cross_covariance(t_star);
        let prior = self.spec.eval_lag(&self.hp, 0.0);
        let value = prior - cross.dot(&self.factor.solve(&cross));
        if value < -VARIANCE_CLAMP {
            return Err(Error::Numerical(format!(
                "posterior variance {value:.6e} negative beyond round-off at t={t_star}"
            )));
        }
        Ok(value.max(0.0))
    }

    /// Time derivative of the posterior mean (constant prior mean).
    pub fn posterior_mean_dt(&self, t_star: f64) -> f64 {
        let mut acc = 0.0;
        for (&(t_i, _), &c) in self.data.points().iter().zip(&self.coefficients) {
            acc += c * self.spec.eval_dt_lag(&self.hp, t_star - t_i);
        }
        acc
    }

    /// Envelope m_bar(t*) >= |m+(t*) - m(t*)|.
    pub fn mean_bound(&self, t_star: f64) -> f64 {
        let mut acc = 0.0;
        for (&(t_i, _), &c) in self.data.points().iter().zip(&self.coefficients) {
            acc += c.abs() * self.spec.eval_lag(&self.hp, t_star - t_i);
        }
        acc
    }

    /// Envelope mdot_bar(t*) >= |d/dt m+(t*)|.
    pub fn mean_dt_bound(&self, t_star: f64) -> f64 {
        let mut acc = 0.0;
        for (&(t_i, _), &c) in self.data.points().iter().zip(&self.coefficients) {
            acc += c.abs() * self.spec.eval_dt_lag(&self.hp, t_star - t_i).abs();
        }
        acc
    }

    /// Negative log marginal likelihood of the conditioning dataset under
    /// the cached factorization:
    /// `ln|K + sigma_n^2 I| + r^T (K + sigma_n^2 I)^{-1} r + n ln(2 pi)`
    /// with `r = y - m(t)`.
    pub fn nlml(&self) -> f64 {
        let fit: f64 = self
            .residual_vector
            .iter()
            .zip(&self.coefficients)
            .map(|(r, c)| r * c)
            .sum();
        self.factor.log_determinant()
            + fit
            + self.data.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Mean, variance, and both envelopes at one query time.
    pub fn predict(&self, t_star: f64) -> Result<PredictionRecord> {
        Ok(PredictionRecord {
            t: t_star,
            mean: self.posterior_mean(t_star),
            variance: self.posterior_variance(t_star)?,
            mean_bound: self.mean_bound(t_star),
            derivative_bound: self.mean_dt_bound(t_star),
        })
    }

    /// Mean sampled on the controller grid `t = ts * k`, `k = 0..=steps`.
    pub fn sample_mean(&self, ts: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|k| self.posterior_mean(ts * k as f64)).collect()
    }

    fn cross_covariance(&self, t_star: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data
                .points()
                .iter()
                .map(|&(t_i, _)| self.spec.eval_lag(&self.hp, t_star - t_i)),
        )
    }
}

/// NLML as a standalone cost for hyperparameter optimization; builds the
/// Gram factorization (with the same jitter policy as [`build_posterior`]).
pub fn nlml(
    spec: KernelFamily,
    mean: MeanSpec,
    hp: &Hyperparameters,
    data: &Dataset,
) -> Result<f64> {
    Ok(build_posterior(spec, mean, hp, data)?.nlml())
}
