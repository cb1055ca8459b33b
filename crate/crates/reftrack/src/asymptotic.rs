//! Iterative constrained training for asymptotically constant references.
//!
//! The constrained fit guarantees trackability only on the sampled horizon
//! `k <= k_bar`. For references that settle to a constant, the horizon is
//! grown until three checks hold at `t_bar = T_s k_bar`:
//!
//! 1. every data time is farther than the monotonicity threshold
//!    `zeta(theta)` from `t_bar`, so both envelopes decay monotonically
//!    beyond it;
//! 2. the mean envelope `[m+ - m_bar, m+ + m_bar]` fits inside the state
//!    box;
//! 3. the derivative envelope `mdot+ +- mdot_bar` fits inside the signed
//!    tube growth rates computed over the mean envelope.
//!
//! Together these extend the finite-horizon certificate to all times.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{self, GPPosterior};
use crate::hyperopt::{
    minimize_nlml_constrained_with_starts, ConstraintSet, OptimizerConfig,
};
use crate::kernels::{Hyperparameters, KernelFamily, MeanSpec};
use crate::reachability::{
    check_trackable, Interval, LinearSystem1D, RateSource, TrackabilityReport, TubeGrowth,
    BOX_TOL,
};

/// Horizon-growth loop knobs.
#[derive(Debug, Clone)]
pub struct AsymptoticTrainConfig {
    /// Starting horizon; must exceed the data's transient (all data times
    /// below `T_s * k_bar_init`).
    pub k_bar_init: usize,
    /// Safety cap on the horizon growth.
    pub k_bar_max: usize,
    /// Horizon increment per iteration. The plain scheme steps by one;
    /// larger strides trade fidelity for speed.
    pub k_bar_stride: usize,
    /// Multistart width used after the first horizon, where the previous
    /// optimum warm-starts the solve.
    pub warm_multistart_count: usize,
    /// Exact scalar tube rates, or a user-supplied rate table.
    pub rate_source: RateSource,
    pub optimizer: OptimizerConfig,
}

impl AsymptoticTrainConfig {
    pub fn new(k_bar_init: usize, k_bar_max: usize, optimizer: OptimizerConfig) -> Self {
        Self {
            k_bar_init,
            k_bar_max,
            k_bar_stride: 1,
            warm_multistart_count: 2,
            rate_source: RateSource::Exact,
            optimizer,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k_bar_init < 1 {
            return Err(Error::Config("k_bar_init must be >= 1".into()));
        }
        if self.k_bar_max < self.k_bar_init {
            return Err(Error::Config("k_bar_max must be >= k_bar_init".into()));
        }
        if self.k_bar_stride < 1 {
            return Err(Error::Config("k_bar_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the horizon-growth trace: the fitted hyperparameters, the
/// envelopes and tube rates at `t_bar`, and the three check flags.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k_bar: usize,
    pub theta: Vec<f64>,
    pub noise_variance: f64,
    pub nlml: f64,
    pub m_plus: f64,
    pub m_bound: f64,
    pub mdot_plus: f64,
    pub mdot_bound: f64,
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub line5: bool,
    pub line7: bool,
    pub line9: bool,
}

/// Proof-carrying outcome of the horizon-growth loop.
#[derive(Debug, Clone)]
pub struct AsymptoticCertificate {
    pub k_bar_final: usize,
    pub theta: Hyperparameters,
    pub nlml: f64,
    pub m_plus_final: f64,
    pub m_bound_final: f64,
    pub mdot_plus_final: f64,
    pub mdot_bound_final: f64,
    pub tube: TubeGrowth,
    /// Check flags (envelope-decay threshold, state-box envelope, tube
    /// envelope) at termination; all true by construction.
    pub checks_passed: [bool; 3],
}

/// Certificate plus the full iteration trace behind it.
#[derive(Debug, Clone)]
pub struct AsymptoticRun {
    pub certificate: AsymptoticCertificate,
    pub trace: Vec<IterationRecord>,
}

/// Grow the constraint horizon until the envelope checks certify
/// trackability for all times.
///
/// Requires the squared-exponential kernel (the only family with a defined
/// monotonicity threshold) and data confined to the transient, i.e. every
/// observation time below `T_s * k_bar_init`.
pub fn train_asymptotic(
    sys: &LinearSystem1D,
    mean: MeanSpec,
    data: &Dataset,
    cfg: &AsymptoticTrainConfig,
) -> Result<AsymptoticRun> {
    cfg.validate()?;
    let spec = KernelFamily::SquaredExponential;
    let ts = sys.sampling_time;
    let horizon_start = ts * cfg.k_bar_init as f64;
    if let Some(t_late) = data.times().find(|&t| t >= horizon_start) {
        return Err(Error::Precondition(format!(
            "data time {t_late} is not inside the transient horizon T_s*k_bar_init = {horizon_start}"
        )));
    }

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut warm: Vec<Hyperparameters> = Vec::new();
    let mut k_bar = cfg.k_bar_init;
    loop {
        if k_bar > cfg.k_bar_max {
            return Err(Error::NonTermination { k_bar_max: cfg.k_bar_max, trace });
        }
        let mut optimizer = cfg.optimizer.clone();
        if !warm.is_empty() {
            optimizer.multistart_count = cfg.warm_multistart_count;
        }
        let constraints = ConstraintSet { k_bar, sys: *sys };
        let outcome = minimize_nlml_constrained_with_starts(
            spec, mean, data, &constraints, &optimizer, &warm,
        )?;
        if !outcome.feasible {
            return Err(Error::Infeasible { k_bar, max_violation: outcome.max_violation });
        }
        let theta = outcome.theta.clone();
        warm = vec![theta.clone()];

        let zeta = spec.monotonicity_threshold(&theta)?;
        let t_bar = ts * k_bar as f64;
        let line5 = data.times().all(|t_i| (t_i - t_bar).abs() > zeta);

        let posterior = gp::build_posterior(spec, mean, &theta, data)?;
        let m_plus = posterior.posterior_mean(t_bar);
        let m_bound = posterior.mean_bound(t_bar);
        let mdot_plus = posterior.posterior_mean_dt(t_bar);
        let mdot_bound = posterior.mean_dt_bound(t_bar);

        let envelope = Interval::new(m_plus - m_bound, m_plus + m_bound);
        let line7 = sys.state_box.contains_interval(&envelope, BOX_TOL);
        // Rates are traced for every iteration, even while the envelope
        // still sticks out of the state box; the certificate tube is only
        // built once line 7 holds.
        let (tau_lower, tau_upper) = growth_rates(sys, &envelope);
        let line9 = tau_lower <= tau_upper
            && mdot_plus - mdot_bound >= tau_lower
            && mdot_plus + mdot_bound <= tau_upper;

        trace.push(IterationRecord {
            k_bar,
            theta: theta.values.clone(),
            noise_variance: theta.noise_variance,
            nlml: outcome.nlml,
            m_plus,
            m_bound,
            mdot_plus,
            mdot_bound,
            tau_lower,
            tau_upper,
            line5,
            line7,
            line9,
        });

        if line5 && line7 && line9 {
            let tube = tube_growth_bounds(sys, envelope)?;
            let certificate = AsymptoticCertificate {
                k_bar_final: k_bar,
                theta,
                nlml: outcome.nlml,
                m_plus_final: m_plus,
                m_bound_final: m_bound,
                mdot_plus_final: mdot_plus,
                mdot_bound_final: mdot_bound,
                tube,
                checks_passed: [line5, line7, line9],
            };
            return Ok(AsymptoticRun { certificate, trace });
        }
        k_bar += cfg.k_bar_stride;
    }
}

/// Empirical replay of the all-time guarantee: sample the certified mean
/// on the controller grid over `horizon_steps` steps (at least ten final
/// horizons for a meaningful check) and run the trackability test. A sound
/// certificate always passes; a failure pinpoints the offending step.
pub fn certify_all_time(
    certificate: &AsymptoticCertificate,
    sys: &LinearSystem1D,
    posterior: &GPPosterior,
    horizon_steps: usize,
) -> Result<TrackabilityReport> {
    if horizon_steps < certificate.k_bar_final {
        return Err(Error::Precondition(format!(
            "replay horizon {horizon_steps} is shorter than the certified horizon {}",
            certificate.k_bar_final
        )));
    }
    let xs = posterior.sample_mean(sys.sampling_time, horizon_steps);
    check_trackable(sys, &xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetRole;
    use crate::hyperopt::NoiseModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example1_system() -> LinearSystem1D {
        LinearSystem1D::new(
            0.9,
            0.5,
            Interval::new(-2.0, 0.05),
            Interval::new(-0.5, 0.5),
            0.01,
        )
        .unwrap()
    }

    fn transient_dataset() -> Dataset {
        // Smooth decaying transient toward a constant just below the upper
        // state bound, n=20 over [0, 0.6].
        let points: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.6 / 19.0;
                (t, 0.04 - 1.04 * (-6.0 * t).exp())
            })
            .collect();
        Dataset::new(points, DatasetRole::HyperparameterTraining).unwrap()
    }

    fn quick_optimizer(seed: u64) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::default_for(KernelFamily::SquaredExponential);
        cfg.multistart_count = 4;
        cfg.max_inner_evaluations = 300;
        cfg.theta_bounds = vec![(1e-2, 10.0), (2e-2, 2.0)];
        cfg.noise = NoiseModel::Fixed(1e-4);
        cfg.rng_seed = seed;
        cfg
    }

    #[test]
    fn example1_style_run_terminates_and_certifies() {
        let sys = example1_system();
        let data = transient_dataset();
        let cfg = AsymptoticTrainConfig::new(70, 400, quick_optimizer(1));
        let run = train_asymptotic(&sys, MeanSpec::new(0.0), &data, &cfg).unwrap();
        let cert = &run.certificate;
        assert!(cert.k_bar_final >= 70 && cert.k_bar_final <= 400);
        assert!(cert.checks_passed.iter().all(|&c| c));
        assert!(cert.m_bound_final <= 0.05, "m_bound {}", cert.m_bound_final);
        // Independent replay over ten final horizons.
        let posterior = gp::build_posterior(
            KernelFamily::SquaredExponential,
            MeanSpec::new(0.0),
            &cert.theta,
            &data,
        )
        .unwrap();
        let report =
            certify_all_time(cert, &sys, &posterior, 10 * cert.k_bar_final).unwrap();
        assert!(report.trackable, "violation at {:?}", report.first_violation_index);
    }

    #[test]
    fn equilibrium_point_terminates_when_threshold_clears() {
        let sys = example1_system();
        let data = Dataset::new(vec![(0.0, 0.0)], DatasetRole::default()).unwrap();
        let mut optimizer = quick_optimizer(3);
        optimizer.theta_bounds = vec![(1e-2, 1.0), (1e-2, 0.2)];
        let cfg = AsymptoticTrainConfig::new(1, 60, optimizer);
        let run = train_asymptotic(&sys, MeanSpec::new(0.0), &data, &cfg).unwrap();
        // Zero data means zero coefficients: both envelopes vanish, so
        // lines 7 and 9 hold from the start and termination happens at the
        // first horizon where the threshold check clears.
        for rec in &run.trace {
            assert_eq!(rec.m_bound, 0.0);
            assert_eq!(rec.mdot_bound, 0.0);
            assert!(rec.line7 && rec.line9);
        }
        let last = run.trace.last().unwrap();
        assert!(last.line5);
        for rec in &run.trace[..run.trace.len() - 1] {
            assert!(!rec.line5, "line 5 must first hold at termination");
        }
    }

    #[test]
    fn unreachable_state_box_is_infeasible_at_init() {
        let sys = LinearSystem1D::new(
            0.9,
            0.5,
            Interval::new(-2.0, -1.0),
            Interval::new(-0.5, 0.5),
            0.01,
        )
        .unwrap();
        let data = Dataset::new(
            vec![(0.0, 0.0), (0.1, 0.0), (0.2, 0.0)],
            DatasetRole::default(),
        )
        .unwrap();
        let mut optimizer = quick_optimizer(4);
        optimizer.max_outer_iterations = 3;
        optimizer.multistart_count = 2;
        let cfg = AsymptoticTrainConfig::new(30, 40, optimizer);
        match train_asymptotic(&sys, MeanSpec::new(0.0), &data, &cfg) {
            Err(Error::Infeasible { k_bar, max_violation }) => {
                assert_eq!(k_bar, 30);
                assert!(max_violation > 0.0);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn horizon_cap_reports_non_termination_with_trace() {
        let sys = example1_system();
        let data = Dataset::new(
            vec![(0.0, -0.5), (0.05, -0.3), (0.1, -0.2)],
            DatasetRole::default(),
        )
        .unwrap();
        let mut optimizer = quick_optimizer(5);
        // Length scales of at least one time unit: the threshold check
        // can never clear before T_s * k_bar_max = 0.4.
        optimizer.theta_bounds = vec![(1e-2, 10.0), (1.0, 2.0)];
        optimizer.multistart_count = 2;
        let cfg = AsymptoticTrainConfig::new(20, 40, optimizer);
        match train_asymptotic(&sys, MeanSpec::new(0.0), &data, &cfg) {
            Err(Error::NonTermination { k_bar_max, trace }) => {
                assert_eq!(k_bar_max, 40);
                assert_eq!(trace.len(), 21);
                assert!(trace.iter().all(|r| !r.line5));
            }
            other => panic!("expected non-termination, got {other:?}"),
        }
    }

    #[test]
    fn data_beyond_transient_rejected() {
        let sys = example1_system();
        let data = Dataset::new(vec![(0.0, 0.0), (1.0, 0.0)], DatasetRole::default()).unwrap();
        let cfg = AsymptoticTrainConfig::new(50, 100, quick_optimizer(6));
        // T_s * k_bar_init = 0.5 < 1.0.
        assert!(matches!(
            train_asymptotic(&sys, MeanSpec::new(0.0), &data, &cfg),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bounds_decay_monotonically_for_frozen_theta() {
        // Freeze a fitted theta and sweep the horizon: once every data
        // time is beyond zeta of t_bar, both envelopes are non-increasing.
        let data = transient_dataset();
        let theta = Hyperparameters::new(vec![0.7, 0.22], 1e-4);
        let posterior = gp::build_posterior(
            KernelFamily::SquaredExponential,
            MeanSpec::new(0.0),
            &theta,
            &data,
        )
        .unwrap();
        let ts = 0.01;
        let first_clear = (0..1000)
            .find(|&k| data.times().all(|t| (t - ts * k as f64).abs() > 0.22))
            .unwrap();
        let mut prev_m = f64::INFINITY;
        let mut prev_md = f64::INFINITY;
        for k in first_clear..(first_clear + 200) {
            let t_bar = ts * k as f64;
            let m = posterior.mean_bound(t_bar);
            let md = posterior.mean_dt_bound(t_bar);
            assert!(m <= prev_m + 1e-12, "m_bound grew at k={k}");
            assert!(md <= prev_md + 1e-12, "mdot_bound grew at k={k}");
            prev_m = m;
            prev_md = md;
        }
    }

    #[test]
    fn event_ordering_matches_narrative() {
        // line 5 first holds, then the tube becomes nonempty, then the
        // derivative envelope fits, then the loop terminates.
        let sys = example1_system();
        let data = transient_dataset();
        let cfg = AsymptoticTrainConfig::new(70, 400, quick_optimizer(7));
        let run = train_asymptotic(&sys, MeanSpec::new(0.0), &data, &cfg).unwrap();
        let first = |pred: &dyn Fn(&IterationRecord) -> bool| {
            run.trace.iter().position(|r| pred(r))
        };
        let line5_at = first(&|r| r.line5).expect("line5 never held");
        let tube_at = first(&|r| r.tau_lower <= r.tau_upper).expect("tube never nonempty");
        let line9_at = first(&|r| r.line9).expect("line9 never held");
        let done_at = run.trace.len() - 1;
        assert!(line5_at <= tube_at, "line5 {line5_at} vs tube {tube_at}");
        assert!(tube_at <= line9_at, "tube {tube_at} vs line9 {line9_at}");
        assert!(line9_at <= done_at);
    }

    #[test]
    fn randomized_certificates_replay_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut terminated = 0;
        for scenario in 0..10 {
            let a = rng.gen_range(0.5..0.95);
            let b = rng.gen_range(0.2..1.0);
            let x_hi = rng.gen_range(0.03..0.5);
            let sys = LinearSystem1D::new(
                a,
                b,
                Interval::new(-2.0, x_hi),
                Interval::new(-0.6, 0.6),
                0.01,
            )
            .unwrap();
            let y_final = x_hi * 0.6;
            let y0 = rng.gen_range(-1.2..-0.4);
            let rate = rng.gen_range(4.0..8.0);
            let points: Vec<(f64, f64)> = (0..15)
                .map(|i| {
                    let t = i as f64 * 0.5 / 14.0;
                    (t, y_final + (y0 - y_final) * (-rate * t).exp())
                })
                .collect();
            let data = Dataset::new(points, DatasetRole::default()).unwrap();
            let cfg = AsymptoticTrainConfig::new(60, 500, quick_optimizer(100 + scenario));
            match train_asymptotic(&sys, MeanSpec::new(0.0), &data, &cfg) {
                Ok(run) => {
                    terminated += 1;
                    let posterior = gp::build_posterior(
                        KernelFamily::SquaredExponential,
                        MeanSpec::new(0.0),
                        &run.certificate.theta,
                        &data,
                    )
                    .unwrap();
                    let report = certify_all_time(
                        &run.certificate,
                        &sys,
                        &posterior,
                        10 * run.certificate.k_bar_final,
                    )
                    .unwrap();
                    assert!(
                        report.trackable,
                        "scenario {scenario} failed replay at {:?}",
                        report.first_violation_index
                    );
                }
                Err(Error::Infeasible { .. }) | Err(Error::NonTermination { .. }) => {}
                Err(other) => panic!("scenario {scenario}: unexpected error {other}"),
            }
        }
        assert!(terminated >= 5, "only {terminated}/10 scenarios terminated");
    }

    #[test]
    fn checker_catches_unsound_reference() {
        // Bypass training: build a steep posterior whose mean violates the
        // tube, attach it to a fabricated certificate, and verify the
        // replay reports the violation.
        let sys = LinearSystem1D::new(
            0.9,
            0.05,
            Interval::new(-3.0, 3.0),
            Interval::new(-0.5, 0.5),
            0.01,
        )
        .unwrap();
        let data = Dataset::new(
            vec![(0.0, -2.0), (0.05, 2.0), (0.1, -2.0)],
            DatasetRole::default(),
        )
        .unwrap();
        let theta = Hyperparameters::new(vec![2.0, 0.03], 1e-6);
        let posterior = gp::build_posterior(
            KernelFamily::SquaredExponential,
            MeanSpec::new(0.0),
            &theta,
            &data,
        )
        .unwrap();
        let fake = AsymptoticCertificate {
            k_bar_final: 2,
            theta,
            nlml: 0.0,
            m_plus_final: 0.0,
            m_bound_final: 0.0,
            mdot_plus_final: 0.0,
            mdot_bound_final: 0.0,
            tube: TubeGrowth {
                tau_lower: -1.0,
                tau_upper: 1.0,
                domain: Interval::new(-1.0, 1.0),
            },
            checks_passed: [true, true, true],
        };
        let report = certify_all_time(&fake, &sys, &posterior, 20).unwrap();
        assert!(!report.trackable);
        assert!(report.first_violation_index.is_some());
    }
}
