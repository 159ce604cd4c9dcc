//! Mode-dependent Lyapunov certificates for the ideal and reference systems.

use serde::Serialize;

use crate::controller::FilterRealization;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{ModeSet, UncertaintySets};
use crate::reference::build_closedloop_matrices;

/// Certificate for the family `{A_i}`.
#[derive(Debug, Clone)]
pub struct ModeLyapunov {
    pub p: Vec<Matrix>,
    pub lambda: f64,
    pub mu: f64,
    pub per_mode_lambda: Vec<f64>,
}

/// Scales `P` so that its smallest eigenvalue is 1, i.e. `P ≥ I` tightly.
pub fn normalize_ge_identity(p: &Matrix) -> Matrix {
    let lmin = linalg::sym_min_eig(p);
    linalg::symmetrize(&p.scale(1.0 / lmin))
}

/// Largest `λ` with `AᵀP + PA ≤ -λP`.
pub fn decay_rate(a: &Matrix, p: &Matrix) -> Result<f64> {
    let lhs = -(a.transpose() * p + p * a);
    Ok(linalg::gev_extremes(&lhs, p)?.0)
}

/// Smallest `μ ≥ 1` with `P_i ≤ μ P_j` for all pairs.
pub fn growth_factor(ps: &[Matrix]) -> Result<f64> {
    let mut mu: f64 = 1.0;
    for (i, pi) in ps.iter().enumerate() {
        for (j, pj) in ps.iter().enumerate() {
            if i != j {
                mu = mu.max(linalg::gev_max(pi, pj)?);
            }
        }
    }
    Ok(mu)
}

/// `P_i` from `A_iᵀP + PA_i = -I`, normalized to `P_i ≥ I`, with the achieved `λ` and `μ`.
///
/// When `lambda_target` is given the certificate must reach it.
pub fn find_mode_lyapunov(modes: &ModeSet, lambda_target: Option<f64>) -> Result<ModeLyapunov> {
    let n = modes.n();
    let ident = Matrix::identity(n, n);
    let mut p = Vec::with_capacity(modes.len());
    let mut per_mode = Vec::with_capacity(modes.len());
    for (i, mode) in modes.iter().enumerate() {
        let raw = linalg::lyap_solve(&mode.a, &ident)
            .map_err(|e| Error::Infeasible(format!("mode {i}: {e}")))?;
        let pi = normalize_ge_identity(&raw);
        per_mode.push(decay_rate(&mode.a, &pi)?);
        p.push(pi);
    }
    let lambda = per_mode.iter().cloned().fold(f64::INFINITY, f64::min);
    if let Some(target) = lambda_target {
        if lambda < target {
            return Err(Error::Infeasible(format!(
                "achieved decay rate {lambda:.4} is below the target {target:.4}"
            )));
        }
    }
    let mu = growth_factor(&p)?;
    Ok(ModeLyapunov { p, lambda, mu, per_mode_lambda: per_mode })
}

/// Worst vertex of the reference-system decrease condition for one mode.
#[derive(Debug, Clone, Serialize)]
pub struct VertexResult {
    pub mode: usize,
    pub theta_vertex: usize,
    pub omega_vertex: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct ReferenceLyapunov {
    pub pbar: Vec<Matrix>,
    pub lambda: f64,
    pub mu: f64,
    pub per_mode: Vec<VertexResult>,
    pub feasible: bool,
    pub violation: Option<String>,
}

fn vertex_sweep(
    modes: &ModeSet,
    sets: &UncertaintySets,
    filter: &FilterRealization,
    i: usize,
    pbar: &Matrix,
) -> Result<VertexResult> {
    let mode = modes.get(i);
    let mut worst = VertexResult { mode: i, theta_vertex: 0, omega_vertex: 0, lambda: f64::INFINITY };
    for (ti, theta) in sets.theta.iter().enumerate() {
        for (wi, omega) in sets.omega.iter().enumerate() {
            let cl = build_closedloop_matrices(mode, theta, omega, filter)?;
            let l = decay_rate(&cl.abar, pbar)?;
            if l < worst.lambda {
                worst = VertexResult { mode: i, theta_vertex: ti, omega_vertex: wi, lambda: l };
            }
        }
    }
    Ok(worst)
}

/// Candidate `P̄_i` seeds: the Lyapunov solution at the polytope centroid and
/// the average of the normalized vertex solutions. Either may be absent when
/// the corresponding closed loop is not Hurwitz.
fn seed_candidates(
    modes: &ModeSet,
    sets: &UncertaintySets,
    filter: &FilterRealization,
    i: usize,
) -> Result<Vec<Matrix>> {
    let mode = modes.get(i);
    let mut out = Vec::new();
    let cl = build_closedloop_matrices(mode, &sets.theta_centroid(), &sets.omega_centroid(), filter)?;
    let ident = Matrix::identity(cl.dim(), cl.dim());
    if let Ok(p) = linalg::lyap_solve(&cl.abar, &ident) {
        out.push(normalize_ge_identity(&p));
    }
    let mut acc = Matrix::zeros(cl.dim(), cl.dim());
    let mut ok = true;
    for theta in &sets.theta {
        for omega in &sets.omega {
            let cl = build_closedloop_matrices(mode, theta, omega, filter)?;
            match linalg::lyap_solve(&cl.abar, &ident) {
                Ok(p) => acc += normalize_ge_identity(&p),
                Err(_) => ok = false,
            }
        }
    }
    if ok {
        out.push(normalize_ge_identity(&acc));
    }
    Ok(out)
}

/// Verifies `Ā_iᵀP̄_i + P̄_iĀ_i ≤ -λP̄_i` at every vertex of Θ×Ω, `P̄_i ≥ I` and
/// `P̄_i ≤ μP̄_j`. Without candidates, `P̄_i` is seeded from Lyapunov solves.
pub fn verify_reference_lyapunov(
    modes: &ModeSet,
    sets: &UncertaintySets,
    filter: &FilterRealization,
    candidates: Option<&[Matrix]>,
) -> Result<ReferenceLyapunov> {
    let big = modes.n() + filter.nf() + modes.m();
    let mut pbar = Vec::with_capacity(modes.len());
    let mut per_mode = Vec::with_capacity(modes.len());
    let mut violation = None;
    for i in 0..modes.len() {
        let seeds = match candidates {
            Some(c) => {
                let p = c.get(i).ok_or_else(|| dim_err("fewer P̄ candidates than modes"))?;
                if p.shape() != (big, big) {
                    return Err(dim_err(format!("P̄ candidate {i} must be {big}x{big}")));
                }
                vec![p.clone()]
            }
            None => seed_candidates(modes, sets, filter, i)?,
        };
        let mut best: Option<(Matrix, VertexResult)> = None;
        for p in seeds {
            if !linalg::is_spd(&p) {
                continue;
            }
            let res = vertex_sweep(modes, sets, filter, i, &p)?;
            if best.as_ref().is_none_or(|b| res.lambda > b.1.lambda) {
                best = Some((p, res));
            }
        }
        match best {
            Some((p, res)) => {
                if linalg::sym_min_eig(&p) < 1.0 - 1e-9 && violation.is_none() {
                    violation = Some(format!("reference Lyapunov: P̄_{i} is not >= I"));
                }
                if res.lambda <= 0.0 && violation.is_none() {
                    violation = Some(format!(
                        "reference Lyapunov: decrease fails for mode {i} at theta vertex {}, omega vertex {} (lambda {:.3e})",
                        res.theta_vertex, res.omega_vertex, res.lambda
                    ));
                }
                pbar.push(p);
                per_mode.push(res);
            }
            None => {
                if violation.is_none() {
                    violation = Some(format!(
                        "reference Lyapunov: no stabilizing P̄ for mode {i} (closed loop not Hurwitz)"
                    ));
                }
                per_mode.push(VertexResult { mode: i, theta_vertex: 0, omega_vertex: 0, lambda: f64::NEG_INFINITY });
            }
        }
    }
    let lambda = per_mode.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    let mu = if pbar.len() == modes.len() { growth_factor(&pbar)? } else { f64::INFINITY };
    Ok(ReferenceLyapunov { feasible: violation.is_none(), pbar, lambda, mu, per_mode, violation })
}

/// `τ_d = ln μ / ((1 - a*) λ)`.
pub fn dwell_time(lambda: f64, mu: f64, a_star: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(mu >= 1.0) || !(a_star > 0.0 && a_star < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dwell_time needs lambda > 0, mu >= 1, a* in (0,1); got ({lambda}, {mu}, {a_star})"
        )));
    }
    // Identical Lyapunov matrices up to rounding mean no switching penalty.
    if mu - 1.0 < 1e-12 {
        return Ok(0.0);
    }
    Ok(mu.ln() / ((1.0 - a_star) * lambda))
}

/// Partition of `P̄` into `[[P, R], [Rᵀ, S]]` with the Schur complement `Q = S - RᵀP⁻¹R`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurParts {
    pub q: Matrix,
    pub r: Matrix,
    pub s: Matrix,
}

pub fn extract_q(pbar: &Matrix, n: usize) -> Result<SchurParts> {
    let big = pbar.nrows();
    if pbar.ncols() != big || n == 0 || n >= big {
        return Err(dim_err(format!("cannot split a {big}x{big} matrix at n={n}")));
    }
    let rest = big - n;
    let p = pbar.view((0, 0), (n, n)).into_owned();
    let r = pbar.view((0, n), (n, rest)).into_owned();
    let s = pbar.view((n, n), (rest, rest)).into_owned();
    let chol = linalg::symmetrize(&p)
        .cholesky()
        .ok_or_else(|| Error::NotSpd("top-left block of P̄".into()))?;
    let q = linalg::symmetrize(&(&s - r.transpose() * chol.solve(&r)));
    Ok(SchurParts { q, r, s })
}
