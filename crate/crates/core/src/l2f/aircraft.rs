//! Simplified rigid-body aircraft and a linear-in-regressors aerodynamic model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Number of aerodynamic regressors per axis: `[1, α, β, p̂, q̂, r̂, δa, δe, δr]`.
pub const N_REG: usize = 9;
/// Names of the regressors, in order.
pub const REGRESSORS: [&str; N_REG] = ["1", "alpha", "beta", "p_hat", "q_hat", "r_hat", "da", "de", "dr"];
pub const IDX_ALPHA: usize = 1;
pub const IDX_BETA: usize = 2;
pub const IDX_DA: usize = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub v: f64,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub phi: f64,
    pub theta: f64,
    pub chi: f64,
    pub gamma: f64,
}

pub const STATE_DIM: usize = 10;

impl AircraftState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.v, self.alpha, self.beta, self.p, self.q, self.r, self.phi, self.theta, self.chi, self.gamma]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            v: s[0],
            alpha: s[1],
            beta: s[2],
            p: s[3],
            q: s[4],
            r: s[5],
            phi: s[6],
            theta: s[7],
            chi: s[8],
            gamma: s[9],
        }
    }

    pub fn omega(&self) -> Vector {
        Vector::from_column_slice(&[self.p, self.q, self.r])
    }

    /// Envelope check; `None` when the state is valid.
    pub fn envelope_violation(&self) -> Option<String> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.to_array().iter().any(|v| !v.is_finite()) {
            Some("non-finite aircraft state".into())
        } else if !(self.v > 0.0) {
            Some(format!("airspeed {} is not positive", self.v))
        } else if self.phi.abs() >= half_pi {
            Some(format!("|phi| = {:.3} rad reached pi/2", self.phi.abs()))
        } else if self.theta.abs() >= half_pi {
            Some(format!("|theta| = {:.3} rad reached pi/2", self.theta.abs()))
        } else {
            None
        }
    }
}

/// Nondimensional moment coefficients `C = c · φ` for roll, pitch and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroModel {
    pub cl: [f64; N_REG],
    pub cm: [f64; N_REG],
    pub cn: [f64; N_REG],
}

impl AeroModel {
    pub fn axis(&self, k: usize) -> &[f64; N_REG] {
        match k {
            0 => &self.cl,
            1 => &self.cm,
            _ => &self.cn,
        }
    }

    pub fn axis_mut(&mut self, k: usize) -> &mut [f64; N_REG] {
        match k {
            0 => &mut self.cl,
            1 => &mut self.cm,
            _ => &mut self.cn,
        }
    }

    /// `[C_l, C_m, C_n]` at one regressor vector.
    pub fn coefficients(&self, phi: &[f64; N_REG]) -> [f64; 3] {
        let dot = |c: &[f64; N_REG]| c.iter().zip(phi).map(|(a, b)| a * b).sum();
        [dot(&self.cl), dot(&self.cm), dot(&self.cn)]
    }

    pub fn c_m_alpha(&self) -> f64 {
        self.cm[IDX_ALPHA]
    }

    pub fn c_l_da(&self) -> f64 {
        self.cl[IDX_DA]
    }

    pub fn c_n_beta(&self) -> f64 {
        self.cn[IDX_BETA]
    }
}

/// Physical parameters and the true aerodynamics of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct AircraftParams {
    pub mass: f64,
    pub inertia: Matrix,
    pub wing_area: f64,
    pub span: f64,
    pub chord: f64,
    pub rho: f64,
    pub g: f64,
    pub aero: AeroModel,
    /// Pitch-moment effectiveness of the left elevator channel hidden from the controller.
    pub cm_left_elevator: f64,
    /// Roll-moment effectiveness of the inboard flap channel hidden from the controller.
    pub cl_inboard_flap: f64,
    /// Symmetric surface position limit (rad).
    pub surface_limit: f64,
    /// Lift-curve slope, used to express pitch stiffness as a static margin.
    pub lift_slope: f64,
}

impl AircraftParams {
    /// Synthetic small UAV: 8 kg, 2.4 m span, cruise at 20 m/s with a 20% static margin.
    /// Pitch ω_n from the stiffness formula lands near 7 rad/s.
    pub fn synthetic() -> Self {
        Self {
            mass: 8.0,
            inertia: Matrix::from_diagonal(&Vector::from_column_slice(&[0.8, 1.0, 1.5])),
            wing_area: 0.8,
            span: 2.4,
            chord: 0.3,
            rho: 1.225,
            g: 9.81,
            aero: AeroModel {
                cl: [0.0, 0.0, -0.05, -0.45, 0.0, 0.1, 0.25, 0.0, 0.01],
                cm: [0.02, -0.8, 0.0, 0.0, -12.0, 0.0, 0.0, -1.0, 0.0],
                cn: [0.0, 0.0, 0.08, -0.03, 0.0, -0.12, -0.01, 0.0, -0.08],
            },
            cm_left_elevator: -0.5,
            cl_inboard_flap: 0.12,
            surface_limit: 0.5,
            lift_slope: 4.0,
        }
    }

    /// Static margin implied by a pitch stiffness: `-C_mα / C_Lα`.
    pub fn static_margin(&self, c_m_alpha: f64) -> f64 {
        -c_m_alpha / self.lift_slope
    }

    pub fn validate(&self) -> Result<()> {
        if self.inertia.shape() != (3, 3) || !crate::linalg::is_spd(&self.inertia) {
            return Err(Error::Config("aircraft inertia must be a 3x3 SPD matrix".into()));
        }
        for (name, v) in [
            ("mass", self.mass),
            ("wing_area", self.wing_area),
            ("span", self.span),
            ("chord", self.chord),
            ("rho", self.rho),
            ("g", self.g),
            ("surface_limit", self.surface_limit),
            ("lift_slope", self.lift_slope),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("aircraft {name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn qbar(&self, v: f64) -> f64 {
        0.5 * self.rho * v * v
    }

    /// Dimensional scale `q̄ S [b, c̄, b]` turning coefficients into moments.
    pub fn moment_scale(&self, v: f64) -> [f64; 3] {
        let qs = self.qbar(v) * self.wing_area;
        [qs * self.span, qs * self.chord, qs * self.span]
    }
}

/// `[1, α, β, p b/2V, q c̄/2V, r b/2V, δa, δe, δr]`
pub fn regressors(s: &AircraftState, params: &AircraftParams, surfaces: &[f64; 3]) -> [f64; N_REG] {
    let k_lat = params.span / (2.0 * s.v);
    let k_lon = params.chord / (2.0 * s.v);
    [1.0, s.alpha, s.beta, s.p * k_lat, s.q * k_lon, s.r * k_lat, surfaces[0], surfaces[1], surfaces[2]]
}

/// Dimensional moments of `model` at a state and deflection.
pub fn model_moments(model: &AeroModel, s: &AircraftState, params: &AircraftParams, surfaces: &[f64; 3]) -> Vector {
    let c = model.coefficients(&regressors(s, params, surfaces));
    let k = params.moment_scale(s.v);
    Vector::from_column_slice(&[k[0] * c[0], k[1] * c[1], k[2] * c[2]])
}

/// Control effectiveness `∂M/∂δ` of a model (3×3, columns δa, δe, δr).
pub fn control_effectiveness(model: &AeroModel, params: &AircraftParams, v: f64) -> Matrix {
    let k = params.moment_scale(v);
    Matrix::from_fn(3, 3, |i, j| k[i] * model.axis(i)[IDX_DA + j])
}

/// Deflections of the channels hidden from controller and learner.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HiddenSurfaces {
    pub left_elevator: f64,
    pub inboard_flap: f64,
}

/// Total true moment `M + M_δ` including hidden channels.
pub fn true_moments(s: &AircraftState, params: &AircraftParams, surfaces: &[f64; 3], hidden: &HiddenSurfaces) -> Vector {
    let mut m = model_moments(&params.aero, s, params, surfaces);
    let k = params.moment_scale(s.v);
    m[0] += k[0] * params.cl_inboard_flap * hidden.inboard_flap;
    m[1] += k[1] * params.cm_left_elevator * hidden.left_elevator;
    m
}

/// `ω × I ω`
pub fn gyroscopic(omega: &Vector, inertia: &Matrix) -> Vector {
    omega.cross(&(inertia * omega))
}

/// Small-angle equations of motion driven by the total body moment.
pub fn aircraft_deriv(s: &AircraftState, moments: &Vector, params: &AircraftParams) -> Result<AircraftState> {
    if moments.len() != 3 {
        return Err(crate::error::dim_err("moment vector must have 3 entries"));
    }
    let rhs = moments - gyroscopic(&s.omega(), &params.inertia);
    let wdot = params
        .inertia
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotSpd("inertia".into()))?
        .solve(&rhs);
    Ok(kinematics(s, &wdot, params.g))
}

/// State derivative given the body angular acceleration.
pub(crate) fn kinematics(s: &AircraftState, wdot: &Vector, g: f64) -> AircraftState {
    let g_v = g / s.v;
    let (sp, cp) = s.phi.sin_cos();
    AircraftState {
        v: 0.0,
        alpha: s.q - g_v * sp * s.phi.tan(),
        beta: -s.r + g_v * sp,
        p: wdot[0],
        q: wdot[1],
        r: wdot[2],
        phi: s.p + s.theta.tan() * (s.q * sp + s.r * cp),
        theta: s.q * cp - s.r * sp,
        chi: g_v * s.phi.tan(),
        gamma: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> AircraftParams {
        AircraftParams::synthetic()
    }

    #[test]
    fn turn_rate_at_45_degrees() {
        let s = AircraftState { v: 20.0, phi: std::f64::consts::FRAC_PI_4, ..Default::default() };
        let d = aircraft_deriv(&s, &Vector::zeros(3), &params()).unwrap();
        assert_relative_eq!(d.chi, 9.81 / 20.0, epsilon = 1e-12);
    }

    #[test]
    fn level_flight_is_quiescent() {
        let s = AircraftState { v: 20.0, p: 0.1, alpha: 0.05, theta: 0.05, ..Default::default() };
        let d = aircraft_deriv(&s, &Vector::zeros(3), &params()).unwrap();
        assert_eq!(d.chi, 0.0);
        assert_eq!(d.beta, 0.0);
        assert_relative_eq!(d.phi, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn hidden_channels_add_moment() {
        let p = params();
        let s = AircraftState { v: 20.0, ..Default::default() };
        let h = HiddenSurfaces { left_elevator: 0.1, inboard_flap: -0.2 };
        let m = true_moments(&s, &p, &[0.0; 3], &h) - true_moments(&s, &p, &[0.0; 3], &HiddenSurfaces::default());
        let k = p.moment_scale(20.0);
        assert_relative_eq!(m[1], k[1] * -0.5 * 0.1, epsilon = 1e-12);
        assert_relative_eq!(m[0], k[0] * 0.12 * -0.2, epsilon = 1e-12);
    }
}
