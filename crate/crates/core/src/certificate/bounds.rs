//! Sampling-time bounding functions and the Ts condition of the prediction-error lemma.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::ModeSet;

/// Quadrature steps per sampling period.
pub const ALPHA_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaBars {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Largest relative change of the three values when the step is halved.
    pub richardson_rel_change: f64,
}

impl AlphaBars {
    /// `(ᾱ1 + ᾱ2 + 1) ᾱ3`
    pub fn lemma_gain(&self) -> f64 {
        (self.alpha1 + self.alpha2 + 1.0) * self.alpha3
    }
}

/// `(ᾱ1, ᾱ2, ᾱ3)` on a `steps + 1` point grid over `[0, Ts]`.
///
/// The convolution integrals become `∫_0^t ‖e^{A s} X‖ ds` after substituting
/// `s = t - τ`, so one cumulative trapezoid per mode yields every grid value.
pub fn alpha_bars_with(modes: &ModeSet, ts: f64, steps: usize) -> Result<(f64, f64, f64)> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::InvalidArgument(format!("Ts must be positive, got {ts}")));
    }
    let h = ts / steps as f64;
    let (mut a1, mut a2, mut a3) = (0.0f64, 0.0f64, 0.0f64);
    for mode in modes.iter() {
        let n = mode.n();
        let step = linalg::expm(&mode.a, h)?;
        let em1 = linalg::expm_minus_identity(&(-&mode.a * ts))?;
        let inv = em1
            .lu()
            .solve(&Matrix::identity(n, n))
            .ok_or_else(|| Error::DegenerateSampling("e^(-A Ts) - I is singular".into()))?;
        let gain = &mode.a * inv;
        let mut e = Matrix::identity(n, n);
        let (mut f2_prev, mut f3_prev) = (linalg::norm2(&gain), linalg::norm2(&mode.b));
        let (mut i2, mut i3) = (0.0, 0.0);
        a1 = a1.max(1.0);
        for _ in 0..steps {
            e = &e * &step;
            a1 = a1.max(linalg::norm2(&e));
            let f2 = linalg::norm2(&(&e * &gain));
            let f3 = linalg::norm2(&(&e * &mode.b));
            i2 += 0.5 * h * (f2 + f2_prev);
            i3 += 0.5 * h * (f3 + f3_prev);
            a2 = a2.max(i2);
            a3 = a3.max(i3);
            f2_prev = f2;
            f3_prev = f3;
        }
    }
    Ok((a1, a2, a3))
}

/// ᾱ values at the default resolution with a step-halving consistency figure.
pub fn alpha_bars(modes: &ModeSet, ts: f64) -> Result<AlphaBars> {
    let (a1, a2, a3) = alpha_bars_with(modes, ts, ALPHA_STEPS)?;
    let (b1, b2, b3) = alpha_bars_with(modes, ts, 2 * ALPHA_STEPS)?;
    let rel = |x: f64, y: f64| if y == 0.0 { 0.0 } else { ((x - y) / y).abs() };
    let change = rel(a1, b1).max(rel(a2, b2)).max(rel(a3, b3));
    if change > 1e-3 {
        log::warn!("alpha-bar quadrature changes by {:.2}% under step halving", 100.0 * change);
    }
    Ok(AlphaBars { alpha1: a1, alpha2: a2, alpha3: a3, richardson_rel_change: change })
}

/// Uncertainty magnitudes entering the Ts condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub d_omega: f64,
    pub d_theta: f64,
    pub d_d: f64,
    pub rho: f64,
    pub rho_u: f64,
}

impl BoundInputs {
    /// `D_ω ρ_u + D_θ ρ + D_d`
    pub fn drive(&self) -> f64 {
        self.d_omega * self.rho_u + self.d_theta * self.rho + self.d_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsCondition {
    pub satisfied: bool,
    pub lhs: f64,
    pub max_ts: f64,
}

/// Left side `(ᾱ1 + ᾱ2 + 1) ᾱ3 (D_ω ρ_u + D_θ ρ + D_d)`.
pub fn ts_lhs(ab: &AlphaBars, inputs: &BoundInputs) -> f64 {
    ab.lemma_gain() * inputs.drive()
}

/// Largest Ts in `(0, ts_hi]` for which `accept((ᾱ1 + ᾱ2 + 1) ᾱ3)` holds,
/// assuming acceptance is monotone (the gain increases with Ts). Returns
/// `ts_hi` when the whole range qualifies and 0 when nothing does.
pub fn max_ts_by(modes: &ModeSet, ts_hi: f64, accept: impl Fn(f64) -> bool) -> Result<f64> {
    let gain = |ts: f64| -> Result<f64> {
        let (a1, a2, a3) = alpha_bars_with(modes, ts, ALPHA_STEPS)?;
        Ok((a1 + a2 + 1.0) * a3)
    };
    if accept(gain(ts_hi)?) {
        return Ok(ts_hi);
    }
    let (mut lo, mut hi) = (0.0, ts_hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if accept(gain(mid)?) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    Ok(lo)
}

/// Largest Ts in `(0, ts_hi]` with `lhs(Ts) < δ0` at fixed ρ, ρ_u.
pub fn max_ts(modes: &ModeSet, inputs: &BoundInputs, delta0: f64, ts_hi: f64) -> Result<f64> {
    let drive = inputs.drive();
    max_ts_by(modes, ts_hi, |k| k * drive < delta0)
}

/// Evaluates the Ts condition at the configured sampling time.
pub fn ts_condition(
    modes: &ModeSet,
    ab: &AlphaBars,
    inputs: &BoundInputs,
    delta0: f64,
    ts_hi: f64,
) -> Result<TsCondition> {
    let lhs = ts_lhs(ab, inputs);
    Ok(TsCondition { satisfied: lhs < delta0, lhs, max_ts: max_ts(modes, inputs, delta0, ts_hi)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use approx::assert_relative_eq;

    fn scalar(a: f64) -> ModeSet {
        let s = |v| Matrix::from_element(1, 1, v);
        ModeSet::new(vec![Mode::new(s(a), s(1.0), s(1.0), s(1.0)).unwrap()]).unwrap()
    }

    #[test]
    fn scalar_closed_forms() {
        let ab = alpha_bars(&scalar(-1.0), 0.1).unwrap();
        assert_relative_eq!(ab.alpha1, 1.0, epsilon = 1e-15);
        assert_relative_eq!(ab.alpha3, 1.0 - (-0.1f64).exp(), max_relative = 1e-6);
        // α2(Ts) = ∫ e^{-s} ds / (e^{Ts} - 1) = e^{-Ts}
        assert_relative_eq!(ab.alpha2, (-0.1f64).exp(), max_relative = 1e-6);
        assert!(ab.richardson_rel_change < 1e-3);
    }

    #[test]
    fn alpha3_shrinks_with_ts() {
        let modes = scalar(-2.0);
        let v: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&t| alpha_bars(&modes, t).unwrap().alpha3).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
    }

    #[test]
    fn zero_uncertainty_accepts_any_ts() {
        let modes = scalar(-1.0);
        let inputs = BoundInputs { d_omega: 0.0, d_theta: 0.0, d_d: 0.0, rho: 3.0, rho_u: 2.0 };
        let ab = alpha_bars(&modes, 0.5).unwrap();
        let c = ts_condition(&modes, &ab, &inputs, 1e-3, 0.5).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.satisfied);
        assert_eq!(c.max_ts, 0.5);
    }

    #[test]
    fn lhs_linear_in_disturbance_bound() {
        let modes = scalar(-1.0);
        let ab = alpha_bars(&modes, 0.05).unwrap();
        let a = BoundInputs { d_omega: 0.0, d_theta: 0.0, d_d: 0.3, rho: 1.0, rho_u: 1.0 };
        let b = BoundInputs { d_d: 0.6, ..a };
        assert_relative_eq!(ts_lhs(&ab, &b), 2.0 * ts_lhs(&ab, &a), max_relative = 1e-14);
    }
}
