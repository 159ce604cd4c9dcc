//! Ideal and reference systems used as yardsticks for the adaptive loop.
//!
//! The reference state is `x̄_ref = [x_ref; x_f1; x_I1]` with `u_ref = -x_I1`.
//! Blocks follow the loop `u_ref = -(D0(s)/s) μ_ref`,
//! `μ_ref = ω u_ref + θᵀ x_ref + d - k r`, which fixes the signs of the
//! filter rows: with `u_ref = -x_I1` the ω terms enter the filter rows negated.

use crate::error::{dim_err, Result};
use crate::controller::FilterRealization;
use crate::linalg::{Matrix, Vector};
use crate::model::Mode;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMatrices {
    pub abar: Matrix,
    pub bbar: Matrix,
    pub ebar: Matrix,
    pub cbar: Matrix,
}

impl ClosedLoopMatrices {
    pub fn dim(&self) -> usize {
        self.abar.nrows()
    }
}

/// Assembles `(Ā, B̄, Ē, C̄)` for one mode at one `(θ, ω)` point.
pub fn build_closedloop_matrices(
    mode: &Mode,
    theta: &Matrix,
    omega: &Matrix,
    filter: &FilterRealization,
) -> Result<ClosedLoopMatrices> {
    let (n, m, nf) = (mode.n(), mode.m(), filter.nf());
    if theta.shape() != (n, m) || omega.shape() != (m, m) || filter.m() != m {
        return Err(dim_err("closed-loop blocks: inconsistent sizes"));
    }
    let big = n + nf + m;
    let tt = theta.transpose();
    let mut abar = Matrix::zeros(big, big);
    abar.view_mut((0, 0), (n, n)).copy_from(&(&mode.a + &mode.b * &tt));
    abar.view_mut((0, n + nf), (n, m)).copy_from(&(-&mode.b * omega));
    if nf > 0 {
        abar.view_mut((n, 0), (nf, n)).copy_from(&(&filter.bf * &tt));
        abar.view_mut((n, n), (nf, nf)).copy_from(&filter.af);
        abar.view_mut((n, n + nf), (nf, m)).copy_from(&(-&filter.bf * omega));
        abar.view_mut((n + nf, n), (m, nf)).copy_from(&filter.cf);
    }
    abar.view_mut((n + nf, 0), (m, n)).copy_from(&(&filter.df * &tt));
    abar.view_mut((n + nf, n + nf), (m, m)).copy_from(&(-&filter.df * omega));

    let mut bbar = Matrix::zeros(big, m);
    bbar.view_mut((0, 0), (n, m)).copy_from(&mode.b);
    if nf > 0 {
        bbar.view_mut((n, 0), (nf, m)).copy_from(&filter.bf);
    }
    bbar.view_mut((n + nf, 0), (m, m)).copy_from(&filter.df);

    let mut ebar = Matrix::zeros(big, m);
    if nf > 0 {
        ebar.view_mut((n, 0), (nf, m)).copy_from(&(-&filter.bf * &mode.k));
    }
    ebar.view_mut((n + nf, 0), (m, m)).copy_from(&(-&filter.df * &mode.k));

    let mut cbar = Matrix::zeros(m, big);
    cbar.view_mut((0, n + nf), (m, m)).fill_with_identity();
    cbar.neg_mut();
    Ok(ClosedLoopMatrices { abar, bbar, ebar, cbar })
}

/// `Ā x̄ + B̄ d + Ē r`.
pub fn reference_deriv(xbar: &Vector, cl: &ClosedLoopMatrices, d: &Vector, r: &Vector) -> Vector {
    &cl.abar * xbar + &cl.bbar * d + &cl.ebar * r
}

/// `u_ref = C̄ x̄_ref`.
pub fn reference_input(xbar: &Vector, cl: &ClosedLoopMatrices) -> Vector {
    &cl.cbar * xbar
}

/// `[x0; 0; 0]`.
pub fn reference_initial(x0: &Vector, nf: usize, m: usize) -> Vector {
    let mut v = Vector::zeros(x0.len() + nf + m);
    v.rows_mut(0, x0.len()).copy_from(x0);
    v
}

/// `A x_id + B k r`.
pub fn ideal_deriv(x_id: &Vector, mode: &Mode, r: &Vector) -> Vector {
    &mode.a * x_id + &mode.b * (&mode.k * r)
}

/// Ideal input `k r`.
pub fn ideal_input(mode: &Mode, r: &Vector) -> Vector {
    &mode.k * r
}
