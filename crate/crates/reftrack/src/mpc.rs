//! Demonstration-grade tracking MPC with terminal equality constraint.
//!
//! The optimal control problem minimizes a quadratic tracking cost over
//! `N` steps subject to the state/input boxes and `x_N = x_r(k+N)` within
//! a fixed tolerance. The scalar state makes a direct construction
//! practical: backward feasibility intervals handle the terminal equality
//! exactly, and the cost-to-go is tabulated on per-stage state grids with
//! inputs chosen from a discretized grid refined twice around the
//! incumbent. Grids are anchored at the reference path (the reference
//! state is always a grid node and the reference input always a
//! candidate), so staying on a trackable reference costs exactly zero and
//! is found exactly.

use crate::error::{Error, Result};
use crate::gp::GPPosterior;
use crate::reachability::{Interval, LinearSystem1D, TrackabilityReport, BOX_TOL};

/// Terminal equality is enforced to this tolerance.
pub const TERMINAL_TOL: f64 = 1e-6;

/// Controller knobs. Defaults: q=1, r=0.1, terminal equality on.
#[derive(Debug, Clone)]
pub struct MPCConfig {
    /// Prediction horizon N in steps.
    pub horizon: usize,
    pub state_weight: f64,
    pub input_weight: f64,
    /// Input-grid resolution of the DP solver (per refinement round).
    pub input_grid_size: usize,
    pub terminal_equality: bool,
}

impl Default for MPCConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            state_weight: 1.0,
            input_weight: 0.1,
            input_grid_size: 33,
            terminal_equality: true,
        }
    }
}

impl MPCConfig {
    fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("mpc horizon must be >= 1".into()));
        }
        if !(self.state_weight > 0.0) {
            return Err(Error::Config("state_weight must be > 0".into()));
        }
        if !(self.input_weight >= 0.0) {
            return Err(Error::Config("input_weight must be >= 0".into()));
        }
        if self.input_grid_size < 3 {
            return Err(Error::Config("input_grid_size must be >= 3".into()));
        }
        Ok(())
    }
}

/// The reference inputs reproducing a reference sequence, step by step.
/// No clipping: trackability is certified upstream, and an out-of-box
/// value here must stay visible.
pub fn reference_input(sys: &LinearSystem1D, reference: &[f64]) -> Result<Vec<f64>> {
    if reference.len() < 2 {
        return Err(Error::Precondition(format!(
            "reference input needs at least 2 samples, got {}",
            reference.len()
        )));
    }
    Ok(reference.windows(2).map(|w| sys.input_for(w[0], w[1])).collect())
}

/// Solved open-loop problem: the input sequence, the predicted states, and
/// the incurred cost.
#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub inputs: Vec<f64>,
    pub states: Vec<f64>,
    pub cost: f64,
}

/// Outcome of one OCP solve; infeasibility is a status, never a clamp.
#[derive(Debug, Clone)]
pub enum OcpResult {
    Solved(OcpSolution),
    Infeasible,
}

impl OcpResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, OcpResult::Solved(_))
    }
}

/// One-step preimage of `target` under the dynamics with admissible
/// inputs, intersected with the state box.
fn backward_step(sys: &LinearSystem1D, target: &Interval) -> Interval {
    let e1 = sys.b * sys.input_box.lo;
    let e2 = sys.b * sys.input_box.hi;
    let (e_lo, e_hi) = (e1.min(e2), e1.max(e2));
    let pre = if sys.a > 0.0 {
        Interval::new((target.lo - e_hi) / sys.a, (target.hi - e_lo) / sys.a)
    } else if sys.a < 0.0 {
        Interval::new((target.hi - e_lo) / sys.a, (target.lo - e_hi) / sys.a)
    } else if e_lo <= target.hi && e_hi >= target.lo {
        Interval::new(f64::NEG_INFINITY, f64::INFINITY)
    } else {
        Interval::new(1.0, 0.0) // empty
    };
    pre.intersect(&sys.state_box)
}

/// Admissible inputs from `x` that land in `target`.
fn feasible_inputs(sys: &LinearSystem1D, x: f64, target: &Interval) -> Interval {
    let lo = (target.lo - sys.a * x) / sys.b;
    let hi = (target.hi - sys.a * x) / sys.b;
    let raw = Interval::new(lo.min(hi), lo.max(hi));
    raw.intersect(&sys.input_box)
}

struct StageGrid {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl StageGrid {
    /// Uniform nodes over `span` with the reference state inserted as an
    /// exact node.
    fn build(span: &Interval, anchor: f64, count: usize) -> Self {
        let mut nodes = Vec::with_capacity(count + 1);
        if span.width() <= 0.0 {
            nodes.push(span.lo);
        } else {
            for j in 0..count {
                nodes.push(span.lo + span.width() * j as f64 / (count - 1) as f64);
            }
        }
        if span.contains(anchor, 0.0) {
            nodes.push(anchor);
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let n = nodes.len();
        StageGrid { nodes, values: vec![0.0; n] }
    }

    fn interpolate(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if n == 1 {
            return self.values[0];
        }
        let x = x.clamp(self.nodes[0], self.nodes[n - 1]);
        let idx = match self.nodes.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.values[i],
            Err(i) => i.clamp(1, n - 1),
        };
        let (x0, x1) = (self.nodes[idx - 1], self.nodes[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        let w = (x - x0) / (x1 - x0);
        v0 + w * (v1 - v0)
    }
}

struct OcpContext<'a> {
    sys: &'a LinearSystem1D,
    cfg: &'a MPCConfig,
    ref_states: &'a [f64],
    ref_inputs: &'a [f64],
    corridors: Vec<Interval>,
}

impl OcpContext<'_> {
    fn stage_cost(&self, j: usize, x: f64, u: f64) -> f64 {
        let dx = x - self.ref_states[j];
        let du = u - self.ref_inputs[j];
        self.cfg.state_weight * dx * dx + self.cfg.input_weight * du * du
    }

    /// Exact minimizer for the final stage, where the input range is
    /// pinned by the terminal corridor and the cost is quadratic in `u`.
    fn last_stage(&self, x: f64) -> Option<(f64, f64)> {
        let j = self.cfg.horizon - 1;
        let band = feasible_inputs(self.sys, x, &self.corridors[j + 1]);
        if band.is_empty() {
            return None;
        }
        let u = if self.cfg.input_weight > 0.0 {
            band.clamp(self.ref_inputs[j])
        } else if self.cfg.terminal_equality {
            0.5 * (band.lo + band.hi)
        } else {
            band.clamp(self.ref_inputs[j])
        };
        Some((u, self.stage_cost(j, x, u)))
    }

    /// Best input from `x` at stage `j` against the tabulated cost-to-go:
    /// a uniform grid over the feasible band plus the reference and
    /// dead-beat candidates, refined twice around the incumbent.
    fn best_input(&self, j: usize, x: f64, next: &StageGrid) -> Option<(f64, f64)> {
        let band = feasible_inputs(self.sys, x, &self.corridors[j + 1]);
        if band.is_empty() {
            return None;
        }
        let objective = |u: f64| -> f64 {
            self.stage_cost(j, x, u) + next.interpolate(self.sys.step(x, u))
        };
        let g = self.cfg.input_grid_size;
        let mut best_u = band.clamp(self.ref_inputs[j]);
        let mut best_v = objective(best_u);
        // Dead-beat onto the next reference point, when admissible.
        let dead_beat = self.sys.input_for(x, self.ref_states[j + 1]);
        if band.contains(dead_beat, 0.0) {
            let v = objective(dead_beat);
            if v < best_v {
                best_v = v;
                best_u = dead_beat;
            }
        }
        let mut lo = band.lo;
        let mut hi = band.hi;
        for _round in 0..3 {
            let width = hi - lo;
            for i in 0..g {
                let u = if g == 1 { lo } else { lo + width * i as f64 / (g - 1) as f64 };
                let v = objective(u);
                if v < best_v {
                    best_v = v;
                    best_u = u;
                }
            }
            let cell = if g > 1 { width / (g - 1) as f64 } else { width };
            lo = (best_u - cell).max(band.lo);
            hi = (best_u + cell).min(band.hi);
        }
        Some((best_u, best_v))
    }
}

/// Solve the tracking OCP from `x0` against a reference window of `N+1`
/// states and `N` inputs.
pub fn solve_ocp(
    sys: &LinearSystem1D,
    x0: f64,
    ref_states: &[f64],
    ref_inputs: &[f64],
    cfg: &MPCConfig,
) -> Result<OcpResult> {
    cfg.validate()?;
    let n = cfg.horizon;
    if ref_states.len() != n + 1 || ref_inputs.len() != n {
        return Err(Error::Precondition(format!(
            "reference window must hold {} states and {} inputs, got {} and {}",
            n + 1,
            n,
            ref_states.len(),
            ref_inputs.len()
        )));
    }

    // Backward feasibility corridors; the terminal one encodes the
    // equality constraint as a band.
    let mut corridors = vec![Interval::new(0.0, 0.0); n + 1];
    corridors[n] = if cfg.terminal_equality {
        Interval::new(ref_states[n] - TERMINAL_TOL, ref_states[n] + TERMINAL_TOL)
            .intersect(&sys.state_box)
    } else {
        sys.state_box
    };
    for j in (0..n).rev() {
        corridors[j] = backward_step(sys, &corridors[j + 1]);
        if corridors[j].is_empty() {
            return Ok(OcpResult::Infeasible);
        }
    }
    if !corridors[0].contains(x0, BOX_TOL) {
        return Ok(OcpResult::Infeasible);
    }

    let ctx = OcpContext { sys, cfg, ref_states, ref_inputs, corridors: corridors.clone() };

    // Cost-to-go tables, terminal stage inward. The terminal corridor has
    // zero cost-to-go by construction.
    let node_count = 4 * cfg.input_grid_size + 1;
    let mut tables: Vec<StageGrid> = Vec::with_capacity(n + 1);
    for (j, corridor) in corridors.iter().enumerate() {
        tables.push(StageGrid::build(corridor, ref_states[j], node_count));
    }
    for j in (1..n).rev() {
        let (head, tail) = tables.split_at_mut(j + 1);
        let grid = &mut head[j];
        let next = &tail[0];
        for idx in 0..grid.nodes.len() {
            let x = grid.nodes[idx];
            let value = if j == n - 1 {
                ctx.last_stage(x).map(|(_, v)| v)
            } else {
                ctx.best_input(j, x, next).map(|(_, v)| v)
            };
            // Corridor membership guarantees an admissible input exists;
            // float dust at the very edge falls back to the band edge.
            grid.values[idx] = value.unwrap_or(f64::INFINITY);
        }
    }

    // Forward rollout from the true state.
    let mut inputs = Vec::with_capacity(n);
    let mut states = vec![x0];
    let mut cost = 0.0;
    let mut x = x0;
    for j in 0..n {
        let step = if j == n - 1 {
            ctx.last_stage(x)
        } else {
            ctx.best_input(j, x, &tables[j + 1])
        };
        let Some((u, _)) = step else {
            return Ok(OcpResult::Infeasible);
        };
        cost += ctx.stage_cost(j, x, u);
        x = sys.step(x, u);
        inputs.push(u);
        states.push(x);
    }
    if cfg.terminal_equality && (x - ref_states[n]).abs() > TERMINAL_TOL + BOX_TOL {
        return Ok(OcpResult::Infeasible);
    }
    Ok(OcpResult::Solved(OcpSolution { inputs, states, cost }))
}

/// One closed-loop step record.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub x_ref: f64,
    pub u_ref: f64,
    pub error: f64,
    pub feasible: bool,
}

/// Receding-horizon trace. `completed` is false when an OCP became
/// infeasible; `failed_at` then names the step.
#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    pub rows: Vec<TraceRow>,
    pub completed: bool,
    pub failed_at: Option<usize>,
}

impl ClosedLoopTrace {
    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }

    pub fn total_cost(&self, cfg: &MPCConfig) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                cfg.state_weight * (r.x - r.x_ref).powi(2)
                    + cfg.input_weight * (r.u - r.u_ref).powi(2)
            })
            .sum()
    }
}

/// Receding-horizon simulation: at every step the reference window is read
/// from the posterior mean, the OCP is solved, the first input applied,
/// and the plant stepped. `certificate` must be a passing trackability
/// report covering at least `steps + N` reference steps.
pub fn simulate_closed_loop(
    sys: &LinearSystem1D,
    reference_source: &GPPosterior,
    certificate: &TrackabilityReport,
    x0: f64,
    steps: usize,
    cfg: &MPCConfig,
) -> Result<ClosedLoopTrace> {
    cfg.validate()?;
    if !certificate.trackable {
        return Err(Error::Precondition(
            "closed-loop simulation requires a trackable certified reference".into(),
        ));
    }
    if certificate.reference_inputs.len() < steps + cfg.horizon {
        return Err(Error::Precondition(format!(
            "certificate covers {} reference steps, need {}",
            certificate.reference_inputs.len(),
            steps + cfg.horizon
        )));
    }
    let ts = sys.sampling_time;
    let xs = reference_source.sample_mean(ts, steps + cfg.horizon);
    let us = reference_input(sys, &xs)?;

    let mut rows = Vec::with_capacity(steps);
    let mut x = x0;
    for k in 0..steps {
        let window_x = &xs[k..=k + cfg.horizon];
        let window_u = &us[k..k + cfg.horizon];
        match solve_ocp(sys, x, window_x, window_u, cfg)? {
            OcpResult::Solved(sol) => {
                let u = sol.inputs[0];
                rows.push(TraceRow {
                    k,
                    t: ts * k as f64,
                    x,
                    u,
                    x_ref: xs[k],
                    u_ref: us[k],
                    error: (x - xs[k]).abs(),
                    feasible: true,
                });
                x = sys.step(x, u);
            }
            OcpResult::Infeasible => {
                return Ok(ClosedLoopTrace { rows, completed: false, failed_at: Some(k) });
            }
        }
    }
    Ok(ClosedLoopTrace { rows, completed: true, failed_at: None })
}
