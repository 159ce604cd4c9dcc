//! Turning 5 Hz model updates into mode switches of the inner loop.

use serde::{Deserialize, Serialize};

use super::aircraft::AircraftParams;
use super::ndi::{gains_from_model, NdiGains};
use super::rls::LearnedModel;
use crate::error::Result;
use crate::model::is_grid_multiple;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PublishGate {
    /// Publish cadence (s).
    pub interval: f64,
    /// Minimum relative gain change that triggers a switch.
    pub threshold: f64,
    /// Largest admissible covariance diagonal entry of a key coefficient.
    pub trust: f64,
    pub zeta: f64,
    pub k_chi: f64,
    pub omega_floor: f64,
}

impl Default for PublishGate {
    fn default() -> Self {
        Self { interval: 0.2, threshold: 0.02, trust: 200.0, zeta: 0.8, k_chi: 0.3, omega_floor: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PublishOutcome {
    /// Model not yet trusted; nothing is published.
    Untrusted,
    /// Model trusted and published; gains kept.
    Held { rel_change: f64, dwell_blocked: bool },
    /// Model published and gains switched.
    Switch { gains: NdiGains, rel_change: f64 },
}

impl PublishOutcome {
    pub fn is_switch(&self) -> bool {
        matches!(self, PublishOutcome::Switch { .. })
    }
}

/// Decides at a publish instant whether the learned model yields a new mode.
///
/// `t` must be a multiple of both the publish interval and `ts`; otherwise the
/// call holds. A switch needs the dwell time since `last_switch` to have
/// elapsed and the gains to move by more than the threshold.
#[allow(clippy::too_many_arguments)]
pub fn model_publish(
    model: &LearnedModel,
    t: f64,
    current: &NdiGains,
    last_switch: f64,
    tau_d: f64,
    ts: f64,
    qbar: f64,
    params: &AircraftParams,
    gate: &PublishGate,
) -> Result<PublishOutcome> {
    if !is_grid_multiple(t, gate.interval) || !is_grid_multiple(t, ts) {
        log::warn!("publish requested off the grid at t={t}");
        return Ok(PublishOutcome::Untrusted);
    }
    let key = model.key();
    if key.var.iter().any(|v| !(*v < gate.trust)) {
        return Ok(PublishOutcome::Untrusted);
    }
    let gains = gains_from_model(&model.model, qbar, params, gate.zeta, gate.k_chi, gate.omega_floor)?;
    let rel_change = current.rel_change(&gains);
    let dwell_ok = t - last_switch >= tau_d - 1e-9;
    if rel_change > gate.threshold && dwell_ok {
        Ok(PublishOutcome::Switch { gains, rel_change })
    } else {
        Ok(PublishOutcome::Held { rel_change, dwell_blocked: rel_change > gate.threshold })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn confident(model: crate::l2f::AeroModel) -> LearnedModel {
        let mut m = LearnedModel::new(model, 1.0, 1.0).unwrap();
        for c in m.cov.iter_mut() {
            *c *= 1e-6;
        }
        m
    }

    fn setup() -> (AircraftParams, LearnedModel, NdiGains, f64) {
        let p = AircraftParams::synthetic();
        let qbar = p.qbar(20.0);
        let mut m = confident(p.aero);
        m.model.cm[1] = -1.2;
        let g = gains_from_model(&p.aero, qbar, &p, 0.8, 0.3, 0.5).unwrap();
        (p, m, g, qbar)
    }

    #[test]
    fn unchanged_coefficients_hold() {
        let (p, _, g, qbar) = setup();
        let m = confident(p.aero);
        let out = model_publish(&m, 1.0, &g, 0.0, 0.5, 0.005, qbar, &p, &PublishGate::default()).unwrap();
        assert_eq!(out, PublishOutcome::Held { rel_change: 0.0, dwell_blocked: false });
    }

    #[test]
    fn dwell_gate_spaces_switches() {
        let (p, mut m, mut g, qbar) = setup();
        let gate = PublishGate::default();
        let mut last = 0.0;
        let mut times = vec![];
        for i in 1..=20 {
            let t = i as f64 * 0.2;
            // A fresh target every tick so the change threshold never binds.
            m.model.cm[1] = -0.8 - 0.1 * i as f64;
            if let PublishOutcome::Switch { gains, .. } = model_publish(&m, t, &g, last, 0.5, 0.005, qbar, &p, &gate).unwrap() {
                g = gains;
                last = t;
                times.push(t);
            }
        }
        assert!((times[0] - 0.6).abs() < 1e-9);
        for w in times.windows(2) {
            assert!(w[1] - w[0] >= 0.6 - 1e-9);
        }
    }

    #[test]
    fn untrusted_model_is_not_published() {
        let (p, mut m, g, qbar) = setup();
        m.cov[1][(1, 1)] = 1e3;
        let out = model_publish(&m, 1.0, &g, 0.0, 0.5, 0.005, qbar, &p, &PublishGate::default()).unwrap();
        assert_eq!(out, PublishOutcome::Untrusted);
    }
}
