//! Constrained training for periodic references with certified interval
//! extrema.
//!
//! With a periodic kernel and constant prior mean the posterior mean is
//! exactly periodic, so constraining one period constrains all times. The
//! constraints here are interval statements rather than pointwise samples:
//! global extrema of the mean must lie in the state box, and per
//! subinterval the extrema of the mean derivative must lie inside signed
//! tube growth rates computed over the mean's own range on that
//! subinterval.
//!
//! Extrema of the mean and its derivative are certified by grid sampling
//! plus a Lipschitz argument: with `L` bounding the slope of the sampled
//! function on the interval, the true extremum lies within `L h / 2` of
//! the best grid sample at spacing `h`. Reported extrema are widened by
//! that slack, so the constraint side is conservative.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{self, GPPosterior};
use crate::hyperopt::{minimize_penalized, OptimizerConfig, TrainOutcome};
use crate::kernels::{Hyperparameters, KernelFamily, MeanSpec};
use crate::reachability::{
    check_trackable, growth_rates, Interval, LinearSystem1D, TrackabilityReport,
};

/// Knobs of the interval-constrained trainer.
#[derive(Debug, Clone)]
pub struct PeriodicTrainConfig {
    /// Constraint horizon in steps; `T_s * k_bar` must cover one period of
    /// every admissible candidate (candidates with a longer period are
    /// penalized as infeasible).
    pub k_bar: usize,
    /// Number of derivative subintervals.
    pub eta: usize,
    /// Certification grid spacing (time units).
    pub grid_resolution: f64,
    pub optimizer: OptimizerConfig,
}

impl PeriodicTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.k_bar < 1 {
            return Err(Error::Config("k_bar must be >= 1".into()));
        }
        if self.eta < 1 {
            return Err(Error::Config("eta must be >= 1".into()));
        }
        if !(self.grid_resolution > 0.0) {
            return Err(Error::Config("grid_resolution must be > 0".into()));
        }
        Ok(())
    }
}

/// Certified per-interval data: derivative extrema, the mean range the
/// tube rates were computed over, and the rates themselves.
#[derive(Debug, Clone)]
pub struct IntervalRecord {
    pub index: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Certified (outer) derivative extrema over `[t_lo, t_hi]`.
    pub deriv_min: f64,
    pub deriv_max: f64,
    pub deriv_slack: f64,
    /// Certified (outer) mean range over `[t_lo, t_hi]`.
    pub state_lo: f64,
    pub state_hi: f64,
    pub tau_lower: f64,
    pub tau_upper: f64,
}

/// Certified extrema backing a periodic training outcome.
#[derive(Debug, Clone)]
pub struct IntervalBounds {
    /// Certified global mean extrema over `[0, T_s k_bar]`.
    pub mean_min: f64,
    pub mean_max: f64,
    pub mean_slack: f64,
    pub intervals: Vec<IntervalRecord>,
    pub certified: bool,
    /// Largest certification slack across the mean and all intervals.
    pub certification_slack: f64,
}

/// Certified extrema of the posterior mean on `[t_lo, t_hi]`: grid extrema
/// widened by `L h / 2`, with `L = sum_i |c_i| sup |dk/dt(t_i, .)|` and
/// `h <= delta` the realized grid spacing. Returns
/// `(outer_min, outer_max, slack)`.
pub fn certified_mean_extrema(
    posterior: &GPPosterior,
    t_lo: f64,
    t_hi: f64,
    delta: f64,
) -> Result<(f64, f64, f64)> {
    certified_extrema(posterior, t_lo, t_hi, delta, false)
}

/// Certified extrema of the posterior mean derivative on `[t_lo, t_hi]`,
/// using the second kernel derivative for the Lipschitz constant.
pub fn certified_derivative_extrema(
    posterior: &GPPosterior,
    t_lo: f64,
    t_hi: f64,
    delta: f64,
) -> Result<(f64, f64, f64)> {
    certified_extrema(posterior, t_lo, t_hi, delta, true)
}

fn certified_extrema(
    posterior: &GPPosterior,
    t_lo: f64,
    t_hi: f64,
    delta: f64,
    derivative: bool,
) -> Result<(f64, f64, f64)> {
    if !(t_lo < t_hi) {
        return Err(Error::Precondition(format!(
            "need t_lo < t_hi, got [{t_lo}, {t_hi}]"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("grid spacing must be > 0, got {delta}")));
    }
    let spec = posterior.spec();
    let hp = posterior.hyperparameters();
    let mut lipschitz = 0.0;
    for (&(t_i, _), &c) in posterior.data().points().iter().zip(posterior.coefficients()) {
        let sup = if derivative {
            spec.sup_abs_dtt_lag(hp, t_lo - t_i, t_hi - t_i)
        } else {
            spec.sup_abs_dt_lag(hp, t_lo - t_i, t_hi - t_i)
        };
        lipschitz += c.abs() * sup;
    }
    let cells = ((t_hi - t_lo) / delta).ceil().max(1.0) as usize;
    let h = (t_hi - t_lo) / cells as f64;
    let mut grid_min = f64::INFINITY;
    let mut grid_max = f64::NEG_INFINITY;
    for j in 0..=cells {
        let t = t_lo + h * j as f64;
        let v = if derivative {
            posterior.posterior_mean_dt(t)
        } else {
            posterior.posterior_mean(t)
        };
        grid_min = grid_min.min(v);
        grid_max = grid_max.max(v);
    }
    let slack = lipschitz * h / 2.0;
    Ok((grid_min - slack, grid_max + slack, slack))
}

fn interval_edges(horizon: f64, eta: usize) -> Vec<(f64, f64)> {
    (0..eta)
        .map(|i| {
            (
                horizon * i as f64 / eta as f64,
                horizon * (i + 1) as f64 / eta as f64,
            )
        })
        .collect()
}

/// Raw interval-constraint violation of a posterior: horizon coverage of
/// the period, certified global mean range against the state box, and per
/// subinterval the certified derivative range against tube rates over the
/// certified (state-box-clipped) mean range.
pub fn periodic_violation(
    sys: &LinearSystem1D,
    posterior: &GPPosterior,
    k_bar: usize,
    eta: usize,
    delta: f64,
) -> Result<f64> {
    violation_with_margin(sys, posterior, k_bar, eta, delta, 0.0)
}

fn violation_with_margin(
    sys: &LinearSystem1D,
    posterior: &GPPosterior,
    k_bar: usize,
    eta: usize,
    delta: f64,
    margin: f64,
) -> Result<f64> {
    let horizon = sys.sampling_time * k_bar as f64;
    let period = posterior
        .spec()
        .period(posterior.hyperparameters())
        .ok_or_else(|| Error::Unsupported("interval constraints need a periodic kernel".into()))?;
    let mut worst: f64 = (period - horizon + margin).max(0.0);

    let (mean_min, mean_max, _) = certified_mean_extrema(posterior, 0.0, horizon, delta)?;
    let state = Interval::new(sys.state_box.lo + margin, sys.state_box.hi - margin);
    worst = worst.max((state.lo - mean_min).max(0.0) + (mean_max - state.hi).max(0.0));

    let rate_margin = margin / sys.sampling_time;
    for (t_lo, t_hi) in interval_edges(horizon, eta) {
        let (d_min, d_max, _) = certified_derivative_extrema(posterior, t_lo, t_hi, delta)?;
        let (s_lo, s_hi, _) = certified_mean_extrema(posterior, t_lo, t_hi, delta)?;
        let domain = Interval::new(s_lo, s_hi).intersect(&sys.state_box);
        if domain.is_empty() {
            // The mean leaves the state box on this whole subinterval; the
            // global state term above already carries the violation.
            continue;
        }
        let (tau_lower, tau_upper) = growth_rates(sys, &domain);
        let excess = (tau_lower + rate_margin - d_min).max(0.0)
            + (d_max - (tau_upper - rate_margin)).max(0.0);
        worst = worst.max(excess);
    }
    Ok(worst)
}

/// Certified interval data for reporting, computed at a fitted point.
fn final_bounds(
    sys: &LinearSystem1D,
    posterior: &GPPosterior,
    cfg: &PeriodicTrainConfig,
) -> Result<IntervalBounds> {
    let horizon = sys.sampling_time * cfg.k_bar as f64;
    let (mean_min, mean_max, mean_slack) =
        certified_mean_extrema(posterior, 0.0, horizon, cfg.grid_resolution)?;
    let mut intervals = Vec::with_capacity(cfg.eta);
    let mut worst_slack = mean_slack;
    for (index, (t_lo, t_hi)) in interval_edges(horizon, cfg.eta).into_iter().enumerate() {
        let (deriv_min, deriv_max, deriv_slack) =
            certified_derivative_extrema(posterior, t_lo, t_hi, cfg.grid_resolution)?;
        let (state_lo, state_hi, state_slack) =
            certified_mean_extrema(posterior, t_lo, t_hi, cfg.grid_resolution)?;
        let domain = Interval::new(state_lo, state_hi).intersect(&sys.state_box);
        let (tau_lower, tau_upper) = if domain.is_empty() {
            (f64::INFINITY, f64::NEG_INFINITY)
        } else {
            growth_rates(sys, &domain)
        };
        worst_slack = worst_slack.max(deriv_slack).max(state_slack);
        intervals.push(IntervalRecord {
            index,
            t_lo,
            t_hi,
            deriv_min,
            deriv_max,
            deriv_slack,
            state_lo,
            state_hi,
            tau_lower,
            tau_upper,
        });
    }
    Ok(IntervalBounds {
        mean_min,
        mean_max,
        mean_slack,
        intervals,
        certified: true,
        certification_slack: worst_slack,
    })
}

/// Interval-constrained NLML minimization for the periodic kernel.
///
/// Feasibility may genuinely fail (the constraints can be unsatisfiable
/// for the given system); the outcome reports it honestly rather than
/// assuming it.
pub fn train_periodic(
    sys: &LinearSystem1D,
    mean: MeanSpec,
    data: &Dataset,
    cfg: &PeriodicTrainConfig,
) -> Result<(TrainOutcome, IntervalBounds)> {
    cfg.validate()?;
    let spec = KernelFamily::Periodic;
    let margin = cfg.optimizer.constraint_tolerance;
    let eval = |hp: &Hyperparameters| {
        let posterior = gp::build_posterior(spec, mean, hp, data).ok()?;
        let violation = violation_with_margin(
            sys,
            &posterior,
            cfg.k_bar,
            cfg.eta,
            cfg.grid_resolution,
            margin,
        )
        .ok()?;
        Some((posterior.nlml(), violation))
    };
    let mut outcome = minimize_penalized(spec, &cfg.optimizer, &[], &eval)?;
    let posterior = gp::build_posterior(spec, mean, &outcome.theta, data)?;
    outcome.max_violation =
        periodic_violation(sys, &posterior, cfg.k_bar, cfg.eta, cfg.grid_resolution)?;
    let bounds = final_bounds(sys, &posterior, cfg)?;
    Ok((outcome, bounds))
}

/// Replay the all-time guarantee for a feasible periodic outcome: verify
/// the posterior mean is exactly one-period periodic, then run the
/// trackability check over `n_periods` worth of controller steps.
pub fn certify_periodic(
    outcome: &TrainOutcome,
    sys: &LinearSystem1D,
    posterior: &GPPosterior,
    n_periods: usize,
) -> Result<TrackabilityReport> {
    if !outcome.feasible {
        return Err(Error::Precondition(
            "certify_periodic needs a feasible training outcome".into(),
        ));
    }
    let period = posterior
        .spec()
        .period(posterior.hyperparameters())
        .ok_or_else(|| Error::Unsupported("certification needs a periodic kernel".into()))?;
    for j in 0..1000 {
        let t = period * 3.0 * j as f64 / 999.0;
        let drift = (posterior.posterior_mean(t + period) - posterior.posterior_mean(t)).abs();
        if drift > 1e-9 {
            return Err(Error::Numerical(format!(
                "posterior mean is not period-periodic: drift {drift:.3e} at t={t}"
            )));
        }
    }
    let steps = (n_periods as f64 * period / sys.sampling_time).ceil() as usize;
    let xs = posterior.sample_mean(sys.sampling_time, steps.max(1));
    check_trackable(sys, &xs)
}
