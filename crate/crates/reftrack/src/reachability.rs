//! One-step reachable sets, tube growth rates, and the trackability check
//! for scalar linear systems.

use crate::error::{Error, Result};

/// Box-membership tolerance used when replaying exact references in
/// floating point.
pub const BOX_TOL: f64 = 1e-9;

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn contains_interval(&self, other: &Interval, tol: f64) -> bool {
        other.lo >= self.lo - tol && other.hi <= self.hi + tol
    }

    /// Distance of `x` from the interval, zero inside.
    pub fn distance_outside(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Scalar linear dynamics `x(k+1) = a x(k) + b u(k)` with state box,
/// input box, and sampling time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSystem1D {
    pub a: f64,
    pub b: f64,
    pub state_box: Interval,
    pub input_box: Interval,
    pub sampling_time: f64,
}

impl LinearSystem1D {
    pub fn new(
        a: f64,
        b: f64,
        state_box: Interval,
        input_box: Interval,
        sampling_time: f64,
    ) -> Result<Self> {
        if b == 0.0 || !b.is_finite() || !a.is_finite() {
            return Err(Error::Config(format!("need finite a and b != 0, got a={a}, b={b}")));
        }
        if !(state_box.lo < state_box.hi) {
            return Err(Error::Config(format!("state box {state_box} must have lo < hi")));
        }
        if !(input_box.lo < input_box.hi) {
            return Err(Error::Config(format!("input box {input_box} must have lo < hi")));
        }
        if !(sampling_time > 0.0) || !sampling_time.is_finite() {
            return Err(Error::Config(format!("sampling time must be > 0, got {sampling_time}")));
        }
        Ok(Self { a, b, state_box, input_box, sampling_time })
    }

    pub fn step(&self, x: f64, u: f64) -> f64 {
        self.a * x + self.b * u
    }

    /// The input that moves `x` to `x_next` in one step.
    pub fn input_for(&self, x: f64, x_next: f64) -> f64 {
        (x_next - self.a * x) / self.b
    }

    /// `b u` over the input box, as an interval.
    fn input_effect(&self) -> Interval {
        let e1 = self.b * self.input_box.lo;
        let e2 = self.b * self.input_box.hi;
        Interval::new(e1.min(e2), e1.max(e2))
    }
}

/// States reachable from `x` in one step with admissible inputs.
pub fn one_step_reachable(sys: &LinearSystem1D, x: f64) -> Interval {
    let effect = sys.input_effect();
    Interval::new(sys.a * x + effect.lo, sys.a * x + effect.hi)
}

/// Signed per-time growth rates valid over a state interval, without the
/// domain check; shared by [`tube_growth_bounds`] and the trainer traces
/// (which also evaluate rates for envelopes that have not yet shrunk into
/// the state box).
pub(crate) fn growth_rates(sys: &LinearSystem1D, domain: &Interval) -> (f64, f64) {
    let effect = sys.input_effect();
    let slope = sys.a - 1.0;
    let rate_lo_at = |x: f64| (slope * x + effect.lo) / sys.sampling_time;
    let rate_hi_at = |x: f64| (slope * x + effect.hi) / sys.sampling_time;
    let tau_lower = rate_lo_at(domain.lo).max(rate_lo_at(domain.hi));
    let tau_upper = rate_hi_at(domain.lo).min(rate_hi_at(domain.hi));
    (tau_lower, tau_upper)
}

/// Constant signed growth-rate bounds of the one-step reachable tube over
/// a state region.
///
/// Any reference moving with instantaneous rate inside `[tau_lower,
/// tau_upper]` while its value stays in `domain` remains inside the
/// one-step reachable tube. The interval may be empty (`tau_lower >
/// tau_upper`) when `domain` is too wide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeGrowth {
    pub tau_lower: f64,
    pub tau_upper: f64,
    pub domain: Interval,
}

impl TubeGrowth {
    pub fn is_valid(&self) -> bool {
        self.tau_lower <= self.tau_upper
    }

    /// A constant reference is sustainable iff zero rate is admissible.
    pub fn supports_constant(&self) -> bool {
        self.tau_lower <= 0.0 && self.tau_upper >= 0.0
    }

    pub fn rate_interval(&self) -> Interval {
        Interval::new(self.tau_lower, self.tau_upper)
    }
}

/// Growth rates over `domain`, which must lie inside the state box.
pub fn tube_growth_bounds(sys: &LinearSystem1D, domain: Interval) -> Result<TubeGrowth> {
    if !sys.state_box.contains_interval(&domain, BOX_TOL) {
        return Err(Error::Domain(format!(
            "tube domain {domain} is not contained in the state box {}",
            sys.state_box
        )));
    }
    let (tau_lower, tau_upper) = growth_rates(sys, &domain);
    Ok(TubeGrowth { tau_lower, tau_upper, domain })
}

/// User-supplied growth-rate table for plants whose tubes are not computed
/// here: each row declares signed rates valid for any state interval
/// contained in `[interval_start, interval_end]`.
///
/// CSV columns: `interval_start,interval_end,tau_lower,tau_upper`.
#[derive(Debug, Clone, Default)]
pub struct TauTable {
    rows: Vec<(Interval, f64, f64)>,
}

impl TauTable {
    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "interval_start,interval_end,tau_lower,tau_upper" => {}
            Some((i, h)) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!(
                        "expected header 'interval_start,interval_end,tau_lower,tau_upper', got '{}'",
                        h.trim()
                    ),
                });
            }
            None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
        }
        let mut rows = Vec::new();
        for (i, raw) in lines {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::Parse { line, message: format!("expected 4 columns, got {}", cols.len()) });
            }
            let mut values = [0.0; 4];
            for (slot, col) in values.iter_mut().zip(&cols) {
                *slot = col.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid number '{col}'"),
                })?;
            }
            if !(values[0] < values[1]) || values[2] > values[3] {
                return Err(Error::Parse {
                    line,
                    message: "need interval_start < interval_end and tau_lower <= tau_upper".into(),
                });
            }
            rows.push((Interval::new(values[0], values[1]), values[2], values[3]));
        }
        if rows.is_empty() {
            return Err(Error::Parse { line: 1, message: "table has no rows".into() });
        }
        Ok(Self { rows })
    }

    /// Rates of the first row whose interval contains `domain`; `None`
    /// when no row covers it.
    pub fn lookup(&self, domain: &Interval) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .find(|(span, _, _)| span.contains_interval(domain, BOX_TOL))
            .map(|&(_, lo, hi)| (lo, hi))
    }
}

/// Where trainers get their tube growth rates from: the exact scalar
/// computation or a user-supplied table.
#[derive(Debug, Clone, Default)]
pub enum RateSource {
    #[default]
    Exact,
    Table(TauTable),
}

impl RateSource {
    /// Signed rates for `domain`; `None` when a table is active and does
    /// not cover the domain.
    pub fn rates(&self, sys: &LinearSystem1D, domain: &Interval) -> Option<(f64, f64)> {
        match self {
            RateSource::Exact => Some(growth_rates(sys, domain)),
            RateSource::Table(table) => table.lookup(domain),
        }
    }
}

/// Which constraint a reference sequence broke first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    StateConstraint,
    NoAdmissibleInput,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ViolationKind::StateConstraint => write!(f, "state_constraint"),
            ViolationKind::NoAdmissibleInput => write!(f, "no_admissible_input"),
        }
    }
}

/// Outcome of the trackability check: the reconstructed reference inputs
/// and, when the sequence fails, the first offending step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackabilityReport {
    pub trackable: bool,
    pub first_violation_index: Option<usize>,
    pub violation_kind: Option<ViolationKind>,
    pub reference_inputs: Vec<f64>,
}

/// Check a reference sequence against the state box and the dynamics:
/// every value must lie in the state box and every step must be producible
/// by an admissible input `u_r(k) = (x_r(k+1) - a x_r(k)) / b`.
pub fn check_trackable(sys: &LinearSystem1D, reference: &[f64]) -> Result<TrackabilityReport> {
    if reference.len() < 2 {
        return Err(Error::Precondition(format!(
            "trackability needs at least 2 reference samples, got {}",
            reference.len()
        )));
    }
    let inputs: Vec<f64> =
        reference.windows(2).map(|w| sys.input_for(w[0], w[1])).collect();
    let mut violation = None;
    'scan: for (k, &x) in reference.iter().enumerate() {
        if !sys.state_box.contains(x, BOX_TOL) {
            violation = Some((k, ViolationKind::StateConstraint));
            break 'scan;
        }
        if k < inputs.len() && !sys.input_box.contains(inputs[k], BOX_TOL) {
            violation = Some((k, ViolationKind::NoAdmissibleInput));
            break 'scan;
        }
    }
    Ok(TrackabilityReport {
        trackable: violation.is_none(),
        first_violation_index: violation.map(|v| v.0),
        violation_kind: violation.map(|v| v.1),
        reference_inputs: inputs,
    })
}
