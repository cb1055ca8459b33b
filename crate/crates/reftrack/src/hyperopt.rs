//! Hyperparameter estimation: unconstrained and trackability-constrained
//! NLML minimization.
//!
//! The constrained problem minimizes the NLML subject to the sampled
//! posterior mean staying inside the state box and, step by step, inside
//! the one-step reachable tube of its predecessor. It is solved with an
//! exterior quadratic penalty around a box-bounded Nelder-Mead search in
//! log hyperparameter space, multistarted from a seeded RNG. Candidates
//! may run concurrently; results are merged by (feasibility, NLML, start
//! index), so the outcome is independent of scheduling.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{self, GPPosterior};
use crate::kernels::{Hyperparameters, KernelFamily, MeanSpec};
use crate::nelder_mead::{self, SimplexOptions};
use crate::reachability::{one_step_reachable, Interval, LinearSystem1D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Measurement-noise treatment during optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// sigma_n^2 held at this value.
    Fixed(f64),
    /// sigma_n^2 is a log-space decision variable inside `(lo, hi)`.
    Free { lo: f64, hi: f64 },
}

/// Knobs of the penalty/multistart optimizer.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub multistart_count: usize,
    /// Per-parameter search box in natural (positive) units; the search
    /// itself runs on the logarithms.
    pub theta_bounds: Vec<(f64, f64)>,
    pub noise: NoiseModel,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub max_outer_iterations: usize,
    pub constraint_tolerance: f64,
    pub inner_solver_tolerance: f64,
    pub max_inner_evaluations: usize,
    pub rng_seed: u64,
}

impl OptimizerConfig {
    /// Scale-free defaults: theta in [1e-3, 1e3] per parameter.
    pub fn default_for(family: KernelFamily) -> Self {
        Self {
            multistart_count: 8,
            theta_bounds: vec![(1e-3, 1e3); family.n_params()],
            noise: NoiseModel::Fixed(1e-4),
            penalty_initial: 10.0,
            penalty_growth: 10.0,
            max_outer_iterations: 8,
            constraint_tolerance: 1e-6,
            inner_solver_tolerance: 1e-9,
            max_inner_evaluations: 600,
            rng_seed: 0,
        }
    }

    pub fn validate(&self, family: KernelFamily) -> Result<()> {
        if self.multistart_count < 1 {
            return Err(Error::Config("multistart_count must be >= 1".into()));
        }
        if self.theta_bounds.len() != family.n_params() {
            return Err(Error::Config(format!(
                "{family} kernel needs {} theta bounds, got {}",
                family.n_params(),
                self.theta_bounds.len()
            )));
        }
        for &(lo, hi) in &self.theta_bounds {
            // lo == hi pins a parameter to a fixed value.
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::Config(format!("invalid theta box ({lo}, {hi})")));
            }
        }
        match self.noise {
            NoiseModel::Fixed(v) if v >= 0.0 && v.is_finite() => {}
            NoiseModel::Free { lo, hi } if lo > 0.0 && hi >= lo => {}
            _ => return Err(Error::Config("invalid noise model bounds".into())),
        }
        if !(self.penalty_initial > 0.0) {
            return Err(Error::Config("penalty_initial must be > 0".into()));
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::Config("penalty_growth must be > 1".into()));
        }
        if self.max_outer_iterations < 1 || self.max_inner_evaluations < 1 {
            return Err(Error::Config("iteration limits must be >= 1".into()));
        }
        if !(self.constraint_tolerance > 0.0) || !(self.inner_solver_tolerance > 0.0) {
            return Err(Error::Config("tolerances must be > 0".into()));
        }
        Ok(())
    }

    fn log_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds: Vec<(f64, f64)> =
            self.theta_bounds.iter().map(|&(lo, hi)| (lo.ln(), hi.ln())).collect();
        if let NoiseModel::Free { lo, hi } = self.noise {
            bounds.push((lo.ln(), hi.ln()));
        }
        bounds
    }

    fn unpack(&self, z: &[f64], n_theta: usize) -> Hyperparameters {
        let values = z[..n_theta].iter().map(|v| v.exp()).collect();
        let noise_variance = match self.noise {
            NoiseModel::Fixed(v) => v,
            NoiseModel::Free { .. } => z[n_theta].exp(),
        };
        Hyperparameters::new(values, noise_variance)
    }

    fn pack(&self, hp: &Hyperparameters, bounds: &[(f64, f64)]) -> Vec<f64> {
        let mut z: Vec<f64> = hp.values.iter().map(|v| v.ln()).collect();
        if let NoiseModel::Free { .. } = self.noise {
            z.push(hp.noise_variance.max(f64::MIN_POSITIVE).ln());
        }
        for (v, (lo, hi)) in z.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
        z
    }
}

/// Pointwise trackability constraints of the constrained fit: the sampled
/// mean must stay in the state box for `k = 0..=k_bar` and inside the
/// one-step reachable set of its predecessor for `k >= 1`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub k_bar: usize,
    pub sys: LinearSystem1D,
}

/// Result of a training run. `feasible` is reported honestly: when no
/// candidate satisfied the constraints the best near-feasible point is
/// returned with `feasible = false`.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: Hyperparameters,
    pub nlml: f64,
    pub feasible: bool,
    pub max_violation: f64,
    pub iterations: usize,
}

/// Maximum over the constraint grid of the distance of the sampled mean
/// from the admissible set: distance outside the state box plus, from the
/// second sample on, distance outside the predecessor's one-step reachable
/// set. Zero iff every constraint holds.
pub fn constraint_violation(
    spec: KernelFamily,
    mean: MeanSpec,
    hp: &Hyperparameters,
    data: &Dataset,
    constraints: &ConstraintSet,
) -> Result<f64> {
    let posterior = gp::build_posterior(spec, mean, hp, data)?;
    Ok(violation_of_posterior(&posterior, constraints, 0.0))
}

/// Violation with the admissible sets shrunk by `margin` on each side.
/// The penalty loop tightens by its own tolerance so that a candidate
/// converged to "violation <= tolerance" is strictly inside the true sets.
pub(crate) fn violation_of_posterior(
    posterior: &GPPosterior,
    constraints: &ConstraintSet,
    margin: f64,
) -> f64 {
    let sys = &constraints.sys;
    let xs = posterior.sample_mean(sys.sampling_time, constraints.k_bar);
    let state = Interval::new(sys.state_box.lo + margin, sys.state_box.hi - margin);
    let mut worst = 0.0_f64;
    for (k, &x) in xs.iter().enumerate() {
        let mut d = state.distance_outside(x);
        if k >= 1 {
            let reach = one_step_reachable(sys, xs[k - 1]);
            let shrunk = Interval::new(reach.lo + margin, reach.hi - margin);
            d += shrunk.distance_outside(x);
        }
        worst = worst.max(d);
    }
    worst
}

struct Candidate {
    start_index: usize,
    theta: Hyperparameters,
    nlml: f64,
    violation: f64,
    outer_iterations: usize,
}

/// Penalty/multistart driver shared by the pointwise and the interval
/// (periodic) trainers. `eval` maps a candidate to `(nlml, violation)`;
/// `None` marks candidates whose posterior cannot be built.
pub(crate) fn minimize_penalized<E>(
    family: KernelFamily,
    cfg: &OptimizerConfig,
    extra_starts: &[Hyperparameters],
    eval: &E,
) -> Result<TrainOutcome>
where
    E: Fn(&Hyperparameters) -> Option<(f64, f64)> + Sync,
{
    cfg.validate(family)?;
    let bounds = cfg.log_bounds();
    let n_theta = family.n_params();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut starts: Vec<Vec<f64>> =
        extra_starts.iter().map(|hp| cfg.pack(hp, &bounds)).collect();
    for _ in 0..cfg.multistart_count {
        starts.push(bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect());
    }

    let simplex = SimplexOptions {
        f_tol: cfg.inner_solver_tolerance,
        max_evals: cfg.max_inner_evaluations,
    };

    let candidates: Vec<Candidate> = starts
        .par_iter()
        .enumerate()
        .map(|(start_index, z0)| {
            let mut z = z0.clone();
            let mut rho = cfg.penalty_initial;
            let mut outer_iterations = 0;
            let mut last = eval(&cfg.unpack(&z, n_theta));
            for _ in 0..cfg.max_outer_iterations {
                outer_iterations += 1;
                let mut objective = |zz: &[f64]| match eval(&cfg.unpack(zz, n_theta)) {
                    Some((nlml, v)) => nlml + rho * v * v,
                    None => f64::INFINITY,
                };
                let res = nelder_mead::minimize(&mut objective, &z, &bounds, &simplex);
                z = res.x;
                last = eval(&cfg.unpack(&z, n_theta));
                match last {
                    Some((_, v)) if v <= cfg.constraint_tolerance => break,
                    Some(_) => rho *= cfg.penalty_growth,
                    None => break,
                }
            }
            let (nlml, violation) = last.unwrap_or((f64::INFINITY, f64::INFINITY));
            Candidate {
                start_index,
                theta: cfg.unpack(&z, n_theta),
                nlml,
                violation,
                outer_iterations,
            }
        })
        .collect();

    let usable = candidates.iter().filter(|c| c.nlml.is_finite());
    if usable.clone().next().is_none() {
        return Err(Error::Optimization(
            "no start produced a finite NLML; check data and hyperparameter boxes".into(),
        ));
    }
    let feasible_best = usable
        .clone()
        .filter(|c| c.violation <= cfg.constraint_tolerance)
        .min_by(|a, b| {
            a.nlml.total_cmp(&b.nlml).then(a.start_index.cmp(&b.start_index))
        });
    let winner = match feasible_best {
        Some(c) => c,
        None => usable
            .min_by(|a, b| {
                a.violation
                    .total_cmp(&b.violation)
                    .then(a.nlml.total_cmp(&b.nlml))
                    .then(a.start_index.cmp(&b.start_index))
            })
            .expect("at least one usable candidate"),
    };
    Ok(TrainOutcome {
        theta: winner.theta.clone(),
        nlml: winner.nlml,
        feasible: winner.violation <= cfg.constraint_tolerance,
        max_violation: winner.violation,
        iterations: winner.outer_iterations,
    })
}

/// Plain multistart NLML minimization, no trackability constraints.
pub fn minimize_nlml(
    spec: KernelFamily,
    mean: MeanSpec,
    data: &Dataset,
    cfg: &OptimizerConfig,
) -> Result<TrainOutcome> {
    let eval = |hp: &Hyperparameters| gp::nlml(spec, mean, hp, data).ok().map(|l| (l, 0.0));
    minimize_penalized(spec, cfg, &[], &eval)
}

/// Constrained fit: exterior quadratic penalty on the (tightened)
/// trackability violation, escalated until the violation falls below the
/// configured tolerance or the outer-iteration budget runs out.
pub fn minimize_nlml_constrained(
    spec: KernelFamily,
    mean: MeanSpec,
    data: &Dataset,
    constraints: &ConstraintSet,
    cfg: &OptimizerConfig,
) -> Result<TrainOutcome> {
    minimize_nlml_constrained_with_starts(spec, mean, data, constraints, cfg, &[])
}

/// Same as [`minimize_nlml_constrained`] with caller-provided warm starts
/// (the iterative trainer passes the previous horizon's optimum).
pub fn minimize_nlml_constrained_with_starts(
    spec: KernelFamily,
    mean: MeanSpec,
    data: &Dataset,
    constraints: &ConstraintSet,
    cfg: &OptimizerConfig,
    extra_starts: &[Hyperparameters],
) -> Result<TrainOutcome> {
    let margin = cfg.constraint_tolerance;
    let eval = |hp: &Hyperparameters| {
        let posterior = gp::build_posterior(spec, mean, hp, data).ok()?;
        Some((posterior.nlml(), violation_of_posterior(&posterior, constraints, margin)))
    };
    let mut outcome = minimize_penalized(spec, cfg, extra_starts, &eval)?;
    // Report the untightened violation metric.
    outcome.max_violation =
        constraint_violation(spec, mean, &outcome.theta, data, constraints)?;
    Ok(outcome)
}
