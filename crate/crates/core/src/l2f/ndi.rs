//! Three-loop dynamic inversion and the frequency-based gain schedule.

use serde::Serialize;

use super::aircraft::{gyroscopic, AeroModel, AircraftParams, AircraftState};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Roll command limit.
pub const PHI_LIMIT: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NdiGains {
    pub k_chi: f64,
    pub k_phi: f64,
    pub k_theta: f64,
    pub k_beta: f64,
    /// Diagonal of `K_ω` (roll, pitch, yaw rate).
    pub k_omega: [f64; 3],
    pub omega_n: [f64; 3],
    pub zeta: f64,
    /// Axes whose ω_n hit the floor.
    pub floored: [bool; 3],
}

impl NdiGains {
    pub fn k_omega_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(&self.k_omega))
    }

    /// Largest relative change in any loop gain.
    pub fn rel_change(&self, other: &NdiGains) -> f64 {
        let pairs = [
            (self.k_phi, other.k_phi),
            (self.k_theta, other.k_theta),
            (self.k_beta, other.k_beta),
            (self.k_omega[0], other.k_omega[0]),
            (self.k_omega[1], other.k_omega[1]),
            (self.k_omega[2], other.k_omega[2]),
        ];
        pairs.iter().map(|(a, b)| ((b - a) / a).abs()).fold(0.0, f64::max)
    }
}

/// Per-axis natural frequencies from the learned stiffness and control power:
/// roll `√|q̄Sb/(2Ixx) C_lδa|`, pitch `√|q̄Sc̄/Iyy C_mα|`, yaw `√|q̄Sb/Izz C_nβ|`.
/// Rate gains are `2ζω_n`, angle gains `ω_n/(2ζ)`.
pub fn gains_from_model(
    model: &AeroModel,
    qbar: f64,
    params: &AircraftParams,
    zeta: f64,
    k_chi: f64,
    omega_floor: f64,
) -> Result<NdiGains> {
    if !(qbar > 0.0) {
        return Err(Error::InvalidArgument(format!("dynamic pressure must be positive, got {qbar}")));
    }
    if !(zeta > 0.0) {
        return Err(Error::InvalidArgument("damping ratio must be positive".into()));
    }
    let i = &params.inertia;
    let s = params.wing_area;
    let raw = [
        (qbar * s * params.span / (2.0 * i[(0, 0)]) * model.c_l_da()).abs().sqrt(),
        (qbar * s * params.chord / i[(1, 1)] * model.c_m_alpha()).abs().sqrt(),
        (qbar * s * params.span / i[(2, 2)] * model.c_n_beta()).abs().sqrt(),
    ];
    let mut omega_n = [0.0; 3];
    let mut floored = [false; 3];
    for k in 0..3 {
        if !(raw[k] >= omega_floor) {
            log::warn!("axis {k}: natural frequency {:.3} below floor, using {omega_floor}", raw[k]);
            omega_n[k] = omega_floor;
            floored[k] = true;
        } else {
            omega_n[k] = raw[k];
        }
    }
    let angle = |w: f64| w / (2.0 * zeta);
    Ok(NdiGains {
        k_chi,
        k_phi: angle(omega_n[0]),
        k_theta: angle(omega_n[1]),
        k_beta: angle(omega_n[2]),
        k_omega: [2.0 * zeta * omega_n[0], 2.0 * zeta * omega_n[1], 2.0 * zeta * omega_n[2]],
        omega_n,
        zeta,
        floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterCommand {
    pub phi_cmd: f64,
    pub theta_cmd: f64,
    /// The γ command was outside the reachable range and was clamped.
    pub gamma_clamped: bool,
}

/// Roll command from the ground-track error and pitch command from the
/// flight-path kinematics `sin γ = a1 sin θ - a2 cos θ` with
/// `a1 = cos α cos β`, `a2 = sin φ sin β + cos φ sin α cos β`.
/// Of the two solutions the one nearest the current θ is returned.
pub fn ndi_outer(chi_cmd: f64, gamma_cmd: f64, s: &AircraftState, k_chi: f64, g: f64) -> OuterCommand {
    let phi_cmd = ((s.v / g) * k_chi * (chi_cmd - s.chi)).atan().clamp(-PHI_LIMIT, PHI_LIMIT);
    let a1 = s.alpha.cos() * s.beta.cos();
    let a2 = s.phi.sin() * s.beta.sin() + s.phi.cos() * s.alpha.sin() * s.beta.cos();
    let r = a1.hypot(a2);
    let psi = a2.atan2(a1);
    let ratio = gamma_cmd.sin() / r;
    let clamped = ratio.abs() > 1.0;
    let base = ratio.clamp(-1.0, 1.0).asin();
    let wrap = |x: f64| {
        let two_pi = 2.0 * std::f64::consts::PI;
        (x + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI
    };
    let c1 = wrap(psi + base);
    let c2 = wrap(psi + std::f64::consts::PI - base);
    let theta_cmd = if (c1 - s.theta).abs() <= (c2 - s.theta).abs() { c1 } else { c2 };
    OuterCommand { phi_cmd, theta_cmd, gamma_clamped: clamped }
}

/// Angle commands to body-rate commands.
///
/// The yaw-rate line follows from the sideslip equation
/// `β̇ = -r + (g/V) sin φ`, which requires `r = -K_β(β_cmd - β) + (g/V) sin φ`.
pub fn ndi_middle(
    phi_cmd: f64,
    theta_cmd: f64,
    beta_cmd: f64,
    s: &AircraftState,
    gains: &NdiGains,
    g: f64,
) -> Result<[f64; 3]> {
    let (sp, cp) = s.phi.sin_cos();
    if cp.abs() < 1e-3 {
        return Err(Error::Envelope { t: f64::NAN, reason: format!("cos(phi) = {cp:.2e} in the pitch-rate inversion") });
    }
    let p_cmd = gains.k_phi * (phi_cmd - s.phi) - s.theta.tan() * (s.q * sp + s.r * cp);
    let q_cmd = (gains.k_theta * (theta_cmd - s.theta) + s.r * sp) / cp;
    let r_cmd = -gains.k_beta * (beta_cmd - s.beta) + (g / s.v) * sp;
    Ok([p_cmd, q_cmd, r_cmd])
}

/// Moment command for a desired angular acceleration: `I v - (M̂ - ω × Iω)`.
pub fn moment_for_accel(accel: &Vector, omega: &Vector, m_hat: &Vector, inertia: &Matrix) -> Vector {
    inertia * accel - (m_hat - gyroscopic(omega, inertia))
}

/// `M_δ,cmd = I K_ω (ω_cmd - ω) - (M̂ - ω × Iω)`
pub fn ndi_inner(omega_cmd: &Vector, omega: &Vector, m_hat: &Vector, inertia: &Matrix, k_omega: &Matrix) -> Vector {
    moment_for_accel(&(k_omega * (omega_cmd - omega)), omega, m_hat, inertia)
}
