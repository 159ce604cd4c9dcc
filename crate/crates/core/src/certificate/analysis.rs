//! Error-dynamics blocks and the constants ν, g, κ_γ, Λ_F̄, δ1 and δ2.
//!
//! Signs follow the realization `u = -x_I` used by the reference system, so
//! every `ω` entering a filter row is negated relative to a `+x_I` convention.

use serde::Serialize;

use crate::controller::FilterRealization;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::Mode;

/// Blocks of the filtered prediction-error and tracking-error dynamics for one mode and one ω.
#[derive(Debug, Clone)]
pub struct AnalysisMatrices {
    pub fbar: Matrix,
    pub bbar_f: Matrix,
    pub lbar: Matrix,
    pub cbar_f: Matrix,
    pub hbar: Matrix,
    pub jbar: Matrix,
    pub bbarbar: Matrix,
    pub gbar: Matrix,
    /// `B†`
    pub b_pinv: Matrix,
}

pub fn analysis_matrices(mode: &Mode, omega: &Matrix, filter: &FilterRealization) -> Result<AnalysisMatrices> {
    let (n, m, nf) = (mode.n(), mode.m(), filter.nf());
    if omega.shape() != (m, m) || filter.m() != m {
        return Err(dim_err("analysis matrices: inconsistent sizes"));
    }
    let big = n + nf + m;
    let small = nf + m;
    let b_pinv = linalg::pinv(&mode.b)?;

    let mut fbar = Matrix::zeros(small, small);
    let mut bbar_f = Matrix::zeros(small, m);
    let mut lbar = Matrix::zeros(m, small);
    if nf > 0 {
        fbar.view_mut((0, 0), (nf, nf)).copy_from(&filter.af);
        fbar.view_mut((0, nf), (nf, m)).copy_from(&(-&filter.bf * omega));
        fbar.view_mut((nf, 0), (m, nf)).copy_from(&filter.cf);
        bbar_f.view_mut((0, 0), (nf, m)).copy_from(&filter.bf);
        lbar.view_mut((0, 0), (m, nf)).copy_from(&filter.cf);
    }
    fbar.view_mut((nf, nf), (m, m)).copy_from(&(-&filter.df * omega));
    bbar_f.view_mut((nf, 0), (m, m)).copy_from(&filter.df);
    lbar.view_mut((0, nf), (m, m)).copy_from(&(-&filter.df * omega));

    let mut cbar_f = Matrix::zeros(m, small);
    cbar_f.view_mut((0, nf), (m, m)).fill_with_identity();

    let mut hbar = Matrix::zeros(big, small);
    hbar.view_mut((0, 0), (n, small)).copy_from(&(-&mode.b * &lbar));

    let bpa = &b_pinv * &mode.a;
    let mut jbar = Matrix::zeros(big, n);
    jbar.view_mut((0, 0), (n, n)).copy_from(&(-&mode.b * &filter.df * &b_pinv));
    if nf > 0 {
        jbar.view_mut((n, 0), (nf, n)).copy_from(&(-&filter.bf * &bpa));
    }
    jbar.view_mut((n + nf, 0), (m, n)).copy_from(&(-&filter.df * &bpa));

    let mut bbarbar = Matrix::zeros(big, m);
    bbarbar.view_mut((0, 0), (n, m)).copy_from(&(&mode.b * omega));

    let gbar = -(&bbar_f * &bpa);
    Ok(AnalysisMatrices { fbar, bbar_f, lbar, cbar_f, hbar, jbar, bbarbar, gbar, b_pinv })
}

/// Floor for ν when every H̄ vanishes and the ν condition is vacuous.
pub const NU_FLOOR: f64 = 1e-6;
/// Margin applied to the smallest feasible ν.
pub const NU_MARGIN: f64 = 1.05;

/// `ν_i = λ_max(P̄^{1/2} H̄ Q⁻¹ H̄ᵀ P̄^{1/2}) / (λa)²`, `ν = 1.05 max ν_i`.
///
/// Each entry of `cases` is `(P̄_i, Q_i, H̄_i)`; modes appear once per ω vertex.
pub fn compute_nu(cases: &[(&Matrix, &Matrix, &Matrix)], lambda: f64, a: f64) -> Result<f64> {
    let la = lambda * a;
    if !(la > 0.0) {
        return Err(Error::InvalidArgument("compute_nu needs lambda*a > 0".into()));
    }
    let mut worst: f64 = 0.0;
    for (pbar, q, h) in cases {
        if h.iter().all(|v| *v == 0.0) {
            continue;
        }
        let qinv_ht = (*q)
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotSpd("Q".into()))?
            .solve(&h.transpose());
        let half = linalg::sqrtm_psd(pbar);
        let inner = &half * *h * qinv_ht * &half;
        worst = worst.max(linalg::sym_max_eig(&inner) / (la * la));
    }
    if worst == 0.0 {
        Ok(NU_FLOOR)
    } else {
        Ok(NU_MARGIN * worst)
    }
}

/// `g_i = ‖Nᵀ M⁻¹ N‖` for one mode and ω; fails if `M` is not negative definite.
pub fn compute_g_case(
    pbar: &Matrix,
    q: &Matrix,
    am: &AnalysisMatrices,
    lambda: f64,
    a: f64,
    nu: f64,
) -> Result<f64> {
    let big = pbar.nrows();
    let small = q.nrows();
    let n = am.jbar.ncols();
    let m = am.bbarbar.ncols();
    let la = lambda * a;
    let ph = pbar * &am.hbar;
    let mut mm = Matrix::zeros(big + small, big + small);
    mm.view_mut((0, 0), (big, big)).copy_from(&(-la * pbar));
    mm.view_mut((0, big), (big, small)).copy_from(&ph);
    mm.view_mut((big, 0), (small, big)).copy_from(&ph.transpose());
    mm.view_mut((big, big), (small, small)).copy_from(&(-nu * la * q));
    let neg = linalg::symmetrize(&(-&mm));
    let chol = neg.cholesky().ok_or_else(|| {
        Error::Infeasible("the block matrix inverted in g is not negative definite".into())
    })?;
    let mut nn = Matrix::zeros(big + small, n + m);
    nn.view_mut((0, 0), (big, n)).copy_from(&(pbar * &am.jbar));
    nn.view_mut((0, n), (big, m)).copy_from(&(pbar * &am.bbarbar));
    nn.view_mut((big, 0), (small, n)).copy_from(&(nu * q * &am.gbar));
    // M⁻¹ N = -(−M)⁻¹ N; the norm is sign-invariant.
    let sol = chol.solve(&nn);
    Ok(linalg::norm2(&(nn.transpose() * sol)))
}

/// Literal `κ_γ = max ‖C̄_f B̄_f B†‖`, `Λ_F̄ = max Re λ(F̄)` and the validated
/// constant `max_t ‖C̄_f e^{F̄ t} B̄_f B†‖ e^{-Λ t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaBound {
    pub kappa_literal: f64,
    pub lambda_fbar: f64,
    pub kappa_validated: f64,
}

impl GammaBound {
    pub fn kappa_used(&self) -> f64 {
        self.kappa_literal.max(self.kappa_validated)
    }
}

pub fn gamma_bound(cases: &[AnalysisMatrices]) -> Result<GammaBound> {
    let mut kappa: f64 = 0.0;
    let mut lam = f64::NEG_INFINITY;
    for am in cases {
        let cb = &am.cbar_f * &am.bbar_f * &am.b_pinv;
        kappa = kappa.max(linalg::norm2(&cb));
        lam = lam.max(linalg::spectral_abscissa(&am.fbar));
    }
    let horizon = (10.0 / lam.abs().max(1e-3)).clamp(0.01, 100.0);
    let pts = 400;
    let mut validated: f64 = 0.0;
    for am in cases {
        let step = linalg::expm(&am.fbar, horizon / pts as f64)?;
        let right = &am.bbar_f * &am.b_pinv;
        let mut e = Matrix::identity(am.fbar.nrows(), am.fbar.nrows());
        for k in 0..=pts {
            let t = horizon * k as f64 / pts as f64;
            let v = linalg::norm2(&(&am.cbar_f * &e * &right)) * (-lam * t).exp();
            validated = validated.max(v);
            e = &e * &step;
        }
    }
    Ok(GammaBound { kappa_literal: kappa, lambda_fbar: lam, kappa_validated: validated })
}

/// Offset used when `μ = 1` makes the switching factor singular.
pub const MU_ONE_OFFSET: f64 = 1e-6;

/// `μ(1 - μ^{(a-a*)/(1-a*)})⁻¹ + 1`; the boolean reports the μ = 1 substitution.
pub fn switching_factor(mu: f64, a: f64, a_star: f64) -> (f64, bool) {
    let (mu_eff, flagged) = if mu <= 1.0 + MU_ONE_OFFSET { (1.0 + MU_ONE_OFFSET, true) } else { (mu, false) };
    let expo = (a - a_star) / (1.0 - a_star);
    (mu_eff / (1.0 - mu_eff.powf(expo)) + 1.0, flagged)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaRatios {
    /// `δ1 / δ0`
    pub c1: f64,
    /// `δ2 / δ0`
    pub c2: f64,
    pub mu_one_substituted: bool,
}

/// Ratios `δ1/δ0` and `δ2/δ0`; both bounds are linear in δ0.
#[allow(clippy::too_many_arguments)]
pub fn delta_ratios(
    mu: f64,
    a: f64,
    a_star: f64,
    g: f64,
    lambda: f64,
    kappa: f64,
    nu: f64,
    cases: &[AnalysisMatrices],
    df: &Matrix,
) -> DeltaRatios {
    let (factor, flagged) = switching_factor(mu, a, a_star);
    let c1 = (factor * g / ((1.0 - a) * lambda) * (1.0 + kappa * kappa)).sqrt();
    let mut out_gain: f64 = 0.0;
    let mut feed: f64 = 0.0;
    let m = df.nrows();
    for am in cases {
        let big = am.hbar.nrows();
        let small = am.lbar.ncols();
        let mut row = Matrix::zeros(m, big + small);
        // C̄ = [0 0 -I]
        row.view_mut((0, big - m), (m, m)).copy_from(&-Matrix::identity(m, m));
        row.view_mut((0, big), (m, small)).copy_from(&(&am.lbar / nu.sqrt()));
        out_gain = out_gain.max(linalg::norm2(&row));
        feed = feed.max(linalg::norm2(&(df * &am.b_pinv)));
    }
    DeltaRatios { c1, c2: out_gain * c1 + feed, mu_one_substituted: flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nu_scalar_rearrangement() {
        let one = Matrix::identity(1, 1);
        let h = Matrix::from_element(1, 1, 0.7);
        let nu = compute_nu(&[(&one, &one, &h)], 2.0, 0.25).unwrap();
        assert_relative_eq!(nu, 1.05 * 0.49 / 0.25, max_relative = 1e-12);
        let zero = Matrix::zeros(1, 1);
        assert_eq!(compute_nu(&[(&one, &one, &zero)], 2.0, 0.25).unwrap(), NU_FLOOR);
    }

    #[test]
    fn switching_factor_flags_unit_mu() {
        let (f, flagged) = switching_factor(1.0, 0.25, 0.5);
        assert!(flagged);
        assert!(f > 1e5);
        let (f2, flagged2) = switching_factor(2.0, 0.25, 0.5);
        assert!(!flagged2);
        assert_relative_eq!(f2, 2.0 / (1.0 - 2f64.powf(-0.5)) + 1.0, epsilon = 1e-12);
    }
}
