//! Fixed-step co-simulation on an integer-indexed clock.
//!
//! Every event (adaptation, switch, publish, control update) sits on a
//! multiple of the integration step `h`, so no RK4 step straddles one.

pub mod linear;
pub mod sweep;
pub mod trace;

pub use linear::{bounds_sweep, certify_scenario, empirical_rho, run_comparison, run_scenario, LinearScenario, RunOutput};
pub use sweep::{monte_carlo_sweep, run_seed, sample_trajectory, SweepOptions, SweepSummary};
pub use trace::{EventKind, Trace, TraceEvent};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Relative tolerance when checking that an interval is a multiple of `h`.
const STEP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    /// Adaptation period.
    pub ts: f64,
    /// Integration step.
    pub h: f64,
    pub horizon: f64,
    /// Spacing of trace rows.
    pub record_dt: f64,
}

impl Schedule {
    /// `min(Ts/10, 1 ms)`
    pub fn default_h(ts: f64) -> f64 {
        (ts / 10.0).min(1e-3)
    }

    pub fn new(ts: f64, h: Option<f64>, horizon: f64, record_dt: Option<f64>) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::Config(format!("Ts must be positive, got {ts}")));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be nonnegative, got {horizon}")));
        }
        let h = h.unwrap_or_else(|| Self::default_h(ts));
        if !(h > 0.0 && h <= ts) {
            return Err(Error::Config(format!("step h={h} must lie in (0, Ts]")));
        }
        let s = Self { ts, h, horizon, record_dt: record_dt.unwrap_or(ts) };
        s.steps_for(ts)?;
        s.steps_for(s.record_dt)?;
        Ok(s)
    }

    /// Number of steps spanning `dt`; errors unless `dt` is a positive multiple of `h`.
    pub fn steps_for(&self, dt: f64) -> Result<usize> {
        let ratio = dt / self.h;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > STEP_TOL * k {
            return Err(Error::Config(format!("interval {dt} is not a multiple of the step h={}", self.h)));
        }
        Ok(k as usize)
    }

    pub fn total_steps(&self) -> usize {
        (self.horizon / self.h).round() as usize
    }

    /// Step index of `t` if it lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.h).round();
        if k < 0.0 || (t - k * self.h).abs() > STEP_TOL * self.h.max(t.abs()) {
            None
        } else {
            Some(k as usize)
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

/// Abort diagnostic; the trace up to the last good state is kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Abort {
    pub t: f64,
    pub reason: String,
}

/// Default divergence threshold on the norm of the full simulation state.
pub const ENVELOPE_NORM: f64 = 1e6;

pub(crate) fn check_envelope(y: &Vector, limit: f64) -> Option<String> {
    if y.iter().any(|v| !v.is_finite()) {
        return Some("non-finite state".into());
    }
    let n = y.norm();
    if n > limit {
        return Some(format!("state norm {n:.3e} exceeds {limit:.1e}"));
    }
    None
}

/// Classic fourth-order Runge-Kutta step.
pub(crate) fn rk4_step(y: &Vector, h: f64, mut f: impl FnMut(f64, &Vector) -> Vector) -> Vector {
    let k1 = f(0.0, y);
    let k2 = f(0.5, &(y + &k1 * (0.5 * h)));
    let k3 = f(0.5, &(y + &k2 * (0.5 * h)));
    let k4 = f(1.0, &(y + &k3 * h));
    y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}
