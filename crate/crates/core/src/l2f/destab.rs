//! Destabilizing feedback through surface channels the controller cannot see.

use serde::{Deserialize, Serialize};

use super::aircraft::{AeroModel, AircraftParams, AircraftState, HiddenSurfaces, IDX_ALPHA};

/// Feedback law on a hidden channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Destabilization {
    #[default]
    None,
    /// Left elevator `K (α - α0)`.
    Pitch { gain: f64, alpha0: f64 },
    /// Inboard flap `K p`.
    Roll { gain: f64 },
}

pub fn destabilize_feedback(s: &AircraftState, cfg: &Destabilization) -> HiddenSurfaces {
    match *cfg {
        Destabilization::None => HiddenSurfaces::default(),
        Destabilization::Pitch { gain, alpha0 } => HiddenSurfaces { left_elevator: gain * (s.alpha - alpha0), inboard_flap: 0.0 },
        Destabilization::Roll { gain } => HiddenSurfaces { left_elevator: 0.0, inboard_flap: gain * s.p },
    }
}

/// α at which the bare airframe has zero pitching moment with neutral surfaces.
pub fn trim_alpha(params: &AircraftParams) -> f64 {
    -params.aero.cm[0] / params.aero.cm[IDX_ALPHA]
}

/// Pitch feedback whose effective `C_mα` corresponds to `target_margin`
/// (a fraction of chord, negative for an unstable vehicle). The offset keeps
/// the bare-airframe trim α.
pub fn pitch_for_margin(params: &AircraftParams, target_margin: f64) -> Destabilization {
    let cma_target = -target_margin * params.lift_slope;
    let gain = (cma_target - params.aero.c_m_alpha()) / params.cm_left_elevator;
    Destabilization::Pitch { gain, alpha0: trim_alpha(params) }
}

/// Roll-rate feedback that cancels the airframe roll damping at airspeed `v`.
pub fn roll_neutral(params: &AircraftParams, v: f64) -> Destabilization {
    let clp = params.aero.cl[3] * params.span / (2.0 * v);
    Destabilization::Roll { gain: -clp / params.cl_inboard_flap }
}

/// The regressor-space model the learner converges to: the airframe
/// coefficients with the hidden feedback folded in (exact at constant `v`).
pub fn effective_model(params: &AircraftParams, d: &Destabilization, v: f64) -> AeroModel {
    let mut m = params.aero;
    match *d {
        Destabilization::None => {}
        Destabilization::Pitch { gain, alpha0 } => {
            m.cm[IDX_ALPHA] += params.cm_left_elevator * gain;
            m.cm[0] -= params.cm_left_elevator * gain * alpha0;
        }
        Destabilization::Roll { gain } => {
            m.cl[3] += params.cl_inboard_flap * gain * 2.0 * v / params.span;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l2f::aircraft::true_moments;

    fn level(v: f64) -> AircraftState {
        AircraftState { v, ..Default::default() }
    }

    #[test]
    fn zero_gain_has_no_effect() {
        let s = AircraftState { v: 20.0, alpha: 0.1, p: 0.5, ..Default::default() };
        assert_eq!(destabilize_feedback(&s, &Destabilization::Pitch { gain: 0.0, alpha0: 0.0 }), HiddenSurfaces::default());
        assert_eq!(destabilize_feedback(&s, &Destabilization::Roll { gain: 0.0 }), HiddenSurfaces::default());
    }

    /// Static margin from a central difference of the true pitching moment in α.
    fn linearized_margin(params: &AircraftParams, d: &Destabilization) -> f64 {
        let cm = |alpha: f64| {
            let s = AircraftState { alpha, ..level(20.0) };
            let m = true_moments(&s, params, &[0.0; 3], &destabilize_feedback(&s, d));
            m[1] / params.moment_scale(20.0)[1]
        };
        let h = 1e-4;
        let cma = (cm(0.03 + h) - cm(0.03 - h)) / (2.0 * h);
        -cma / params.lift_slope
    }

    #[test]
    fn pitch_gain_hits_target_margin() {
        let p = AircraftParams::synthetic();
        assert!((linearized_margin(&p, &Destabilization::None) - 0.2).abs() < 1e-9);
        for target in [-0.10, -0.164] {
            let d = pitch_for_margin(&p, target);
            assert!((linearized_margin(&p, &d) - target).abs() < 1e-9);
        }
    }

    #[test]
    fn trim_is_preserved() {
        let p = AircraftParams::synthetic();
        let d = pitch_for_margin(&p, -0.164);
        let s = AircraftState { alpha: trim_alpha(&p), ..level(20.0) };
        let m = true_moments(&s, &p, &[0.0; 3], &destabilize_feedback(&s, &d));
        assert!(m[1].abs() < 1e-12);
    }

    #[test]
    fn roll_feedback_neutralizes_roll_damping() {
        let p = AircraftParams::synthetic();
        let d = roll_neutral(&p, 20.0);
        let h = 1e-3;
        let lp = |rate: f64| {
            let s = AircraftState { p: rate, ..level(20.0) };
            true_moments(&s, &p, &[0.0; 3], &destabilize_feedback(&s, &d))[0] / p.inertia[(0, 0)]
        };
        let eig = (lp(h) - lp(-h)) / (2.0 * h);
        assert!(eig.abs() < 1e-9, "roll eigenvalue {eig}");
        let bare = (p.aero.cl[3] * p.span / 40.0) * p.moment_scale(20.0)[0] / p.inertia[(0, 0)];
        assert!(bare < -1.0);
    }

    #[test]
    fn effective_model_reproduces_true_moments() {
        let p = AircraftParams::synthetic();
        for d in [pitch_for_margin(&p, -0.164), roll_neutral(&p, 20.0)] {
            let eff = effective_model(&p, &d, 20.0);
            let s = AircraftState { v: 20.0, alpha: 0.07, beta: -0.02, p: 0.3, q: -0.1, r: 0.2, ..Default::default() };
            let surf = [0.01, -0.02, 0.03];
            let truth = true_moments(&s, &p, &surf, &destabilize_feedback(&s, &d));
            let model = crate::l2f::aircraft::model_moments(&eff, &s, &p, &surf);
            assert!((truth - model).norm() < 1e-10);
        }
    }
}
