//! The implementable L1 controller: state predictor, piecewise-constant
//! adaptive law and the filtered control law `u = -(D0(s)/s) μ`.

use nalgebra::LU;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{Mode, ModeSet};

/// State-space realization `(A_f, B_f, C_f, D_f)` of `D0(s)`; `n_f = 0` is a static gain.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRealization {
    pub af: Matrix,
    pub bf: Matrix,
    pub cf: Matrix,
    pub df: Matrix,
}

impl FilterRealization {
    /// `D0(s) = k I_m`.
    pub fn constant(gain: f64, m: usize) -> Self {
        Self {
            af: Matrix::zeros(0, 0),
            bf: Matrix::zeros(0, m),
            cf: Matrix::zeros(m, 0),
            df: Matrix::identity(m, m).scale(gain),
        }
    }

    /// Checks shapes and, for `n_f > 0`, controllability and observability.
    pub fn new(af: Matrix, bf: Matrix, cf: Matrix, df: Matrix) -> Result<Self> {
        let nf = af.nrows();
        let m = df.nrows();
        if af.ncols() != nf || bf.shape() != (nf, m) || cf.shape() != (m, nf) || df.shape() != (m, m) {
            return Err(dim_err(format!(
                "filter realization shapes A_f {:?}, B_f {:?}, C_f {:?}, D_f {:?} are inconsistent",
                af.shape(),
                bf.shape(),
                cf.shape(),
                df.shape()
            )));
        }
        let f = Self { af, bf, cf, df };
        if nf > 0 && !f.is_minimal() {
            return Err(Error::InvalidArgument("filter realization is not minimal".into()));
        }
        Ok(f)
    }

    pub fn nf(&self) -> usize {
        self.af.nrows()
    }

    pub fn m(&self) -> usize {
        self.df.nrows()
    }

    pub fn is_minimal(&self) -> bool {
        let nf = self.nf();
        if nf == 0 {
            return true;
        }
        let m = self.m();
        let mut ctrb = Matrix::zeros(nf, nf * m);
        let mut obsv = Matrix::zeros(nf * m, nf);
        let mut ab = self.bf.clone();
        let mut ca = self.cf.clone();
        for k in 0..nf {
            ctrb.view_mut((0, k * m), (nf, m)).copy_from(&ab);
            obsv.view_mut((k * m, 0), (m, nf)).copy_from(&ca);
            ab = &self.af * ab;
            ca = ca * &self.af;
        }
        linalg::rank(&ctrb) == nf && linalg::rank(&obsv) == nf
    }

    /// Static gain `D0(0) = D_f - C_f A_f⁻¹ B_f`, if `A_f` is invertible.
    pub fn dc_gain(&self) -> Option<Matrix> {
        if self.nf() == 0 {
            return Some(self.df.clone());
        }
        let sol = self.af.clone().lu().solve(&self.bf)?;
        Some(&self.df - &self.cf * sol)
    }
}

/// Predictor re-initialization at switch instants.
#[derive(Debug, Clone, PartialEq)]
pub enum ReinitPolicy {
    /// x̂ ← x
    Measured,
    /// x̂ ← x + ε with ε ~ N(0, σ² I)
    MeasuredPlusNoise(f64),
    /// x̂ left to evolve continuously
    None,
    /// x̂ ← x + offset; a deterministic error injection for diagnostics
    Offset(Vector),
}

#[derive(Debug, Clone)]
pub struct L1Config {
    pub ts: f64,
    pub filter: FilterRealization,
    pub reinit: ReinitPolicy,
}

/// Controller states; η̂ are piecewise constant, everything else is integrated.
#[derive(Debug, Clone, PartialEq)]
pub struct L1State {
    pub xhat: Vector,
    pub eta1: Vector,
    pub eta2: Vector,
    pub u_int: Vector,
    pub x_f: Vector,
}

impl L1State {
    pub fn new(x0: &Vector, m: usize, nf: usize) -> Self {
        let n = x0.len();
        Self {
            xhat: x0.clone(),
            eta1: Vector::zeros(m),
            eta2: Vector::zeros(n - m),
            u_int: Vector::zeros(m),
            x_f: Vector::zeros(nf),
        }
    }

    /// Control input `u = -u_int`.
    pub fn u(&self) -> Vector {
        -&self.u_int
    }
}

/// Per-mode data for the adaptive law, factored once for a fixed Ts.
#[derive(Debug, Clone)]
pub struct AdaptationData {
    pub bperp: Matrix,
    a: Matrix,
    bvee: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    sampling: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub sampling_cond: f64,
}

const COND_WARN: f64 = 1e8;

impl AdaptationData {
    pub fn new(mode: &Mode, ts: f64) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::InvalidArgument(format!("Ts must be positive, got {ts}")));
        }
        let n = mode.n();
        let bperp = linalg::bperp(&mode.b)?;
        let mut bvee = Matrix::zeros(n, n);
        bvee.view_mut((0, 0), (n, mode.m())).copy_from(&mode.b);
        bvee.view_mut((0, mode.m()), (n, n - mode.m())).copy_from(&bperp);
        // e^{-A Ts} - I via the φ1 series, so small Ts keeps full relative accuracy.
        let e = linalg::expm_minus_identity(&(-&mode.a * ts))?;
        let cond = linalg::cond2(&e);
        if !cond.is_finite() || cond > 1e15 {
            return Err(Error::DegenerateSampling(format!(
                "e^(-A Ts) - I is singular to working precision (cond {cond:.3e})"
            )));
        }
        if cond > COND_WARN {
            log::warn!("e^(-A Ts) - I has condition number {cond:.3e} at Ts={ts}");
        }
        Ok(Self { bperp, a: mode.a.clone(), bvee: bvee.lu(), sampling: e.lu(), sampling_cond: cond })
    }

    pub fn m(&self) -> usize {
        self.a.nrows() - self.bperp.ncols()
    }
}

/// `[η̂1; η̂2] = (B^∨)⁻¹ A (e^{-A Ts} - I)⁻¹ x̃`.
pub fn adapt_update(data: &AdaptationData, xtilde: &Vector) -> Result<(Vector, Vector)> {
    let n = data.a.nrows();
    if xtilde.len() != n {
        return Err(dim_err("adapt_update: x̃ has wrong length"));
    }
    let y = data
        .sampling
        .solve(xtilde)
        .ok_or_else(|| Error::DegenerateSampling("e^(-A Ts) - I is singular".into()))?;
    let eta = data
        .bvee
        .solve(&(&data.a * y))
        .ok_or_else(|| Error::RankDeficient("[B, B⊥] is singular".into()))?;
    let m = data.m();
    Ok((eta.rows(0, m).into_owned(), eta.rows(m, n - m).into_owned()))
}

/// `A x̂ + B(u + η̂1) + B⊥ η̂2`.
pub fn predictor_deriv(mode: &Mode, bperp: &Matrix, state: &L1State, u: &Vector) -> Result<Vector> {
    let (n, m) = (mode.n(), mode.m());
    if state.xhat.len() != n || u.len() != m || state.eta1.len() != m || state.eta2.len() != n - m {
        return Err(dim_err("predictor_deriv sizes"));
    }
    if bperp.shape() != (n, n - m) {
        return Err(dim_err("predictor_deriv: B⊥ has wrong shape"));
    }
    Ok(predictor_deriv_unchecked(mode, bperp, &state.xhat, u, &state.eta1, &state.eta2))
}

pub(crate) fn predictor_deriv_unchecked(
    mode: &Mode,
    bperp: &Matrix,
    xhat: &Vector,
    u: &Vector,
    eta1: &Vector,
    eta2: &Vector,
) -> Vector {
    let mut dx = &mode.a * xhat + &mode.b * (u + eta1);
    if eta2.len() > 0 {
        dx += bperp * eta2;
    }
    dx
}

/// Control-law dynamics: `μ = u + η̂1 - k r`, `ẋ_f = A_f x_f + B_f μ`,
/// `u̇_int = C_f x_f + D_f μ`, `u = -u_int`.
///
/// Returns `(u̇_int, ẋ_f, u)`.
pub fn control_deriv(
    filter: &FilterRealization,
    k: &Matrix,
    u_int: &Vector,
    x_f: &Vector,
    eta1: &Vector,
    r: &Vector,
) -> (Vector, Vector, Vector) {
    let u = -u_int;
    let mu = &u + eta1 - k * r;
    let (du, dxf) = filter_deriv(filter, x_f, &mu);
    (du, dxf, u)
}

/// One evaluation of the `D0(s)/s` chain driven by `μ`; returns `(u̇_int, ẋ_f)`.
pub(crate) fn filter_deriv(filter: &FilterRealization, x_f: &Vector, mu: &Vector) -> (Vector, Vector) {
    let mut du = &filter.df * mu;
    if filter.nf() == 0 {
        return (du, Vector::zeros(0));
    }
    du += &filter.cf * x_f;
    let dxf = &filter.af * x_f + &filter.bf * mu;
    (du, dxf)
}

/// Applies the re-initialization policy at a switch; filter and integrator
/// states are never touched. Returns the injected error `x̂ - x` when the
/// policy resets the predictor.
pub fn on_switch<R: Rng + ?Sized>(
    state: &mut L1State,
    x_measured: &Vector,
    policy: &ReinitPolicy,
    rng: &mut R,
) -> Option<Vector> {
    let err = match policy {
        ReinitPolicy::Measured => Vector::zeros(x_measured.len()),
        ReinitPolicy::MeasuredPlusNoise(sigma) => {
            Vector::from_fn(x_measured.len(), |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
        }
        ReinitPolicy::Offset(off) => off.clone(),
        ReinitPolicy::None => return None,
    };
    let norm = err.norm();
    if norm > 0.0 {
        log::debug!("predictor re-initialized with error norm {norm:.3e}");
    }
    state.xhat = x_measured + &err;
    Some(err)
}

/// Adaptation data for every mode of a set.
pub fn adaptation_table(modes: &ModeSet, ts: f64) -> Result<Vec<AdaptationData>> {
    modes.iter().map(|m| AdaptationData::new(m, ts)).collect()
}
