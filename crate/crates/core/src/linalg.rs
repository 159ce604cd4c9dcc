//! Dense linear-algebra primitives.
//!
//! Everything here works on `nalgebra` dynamic matrices. The matrix
//! exponential is a scaling-and-squaring Padé approximant (degree up to 13)
//! since the piecewise-constant adaptive law is very sensitive to how
//! accurately `e^{-A Ts} - I` is formed when `Ts` is small.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Backward-error thresholds on the 1-norm for each Padé degree.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_square(m: &Matrix, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(dim_err(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn pade_low(a: &Matrix, coeffs: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let mut u = ident.scale(coeffs[1]);
    let mut v = ident.scale(coeffs[0]);
    let mut pow = ident.clone();
    for k in 1..coeffs.len() / 2 {
        pow = &pow * &a2;
        u += pow.scale(coeffs[2 * k + 1]);
        v += pow.scale(coeffs[2 * k]);
    }
    (a * u, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let b = &PADE13;
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]);
    let u = a * (&a6 * u_inner
        + a6.scale(b[7])
        + a4.scale(b[5])
        + a2.scale(b[3])
        + ident.scale(b[1]));
    let v_inner = a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]);
    let v = &a6 * v_inner + a6.scale(b[6]) + a4.scale(b[4]) + a2.scale(b[2]) + ident.scale(b[0]);
    (u, v)
}

/// Matrix exponential `e^{A t}`.
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = check_square(a, "expm argument")?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("expm time {t} not finite")));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let m = a.scale(t);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("expm argument has non-finite entries".into()));
    }
    Ok(expm_raw(&m))
}

fn expm_raw(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let nrm = norm1(m);
    if nrm == 0.0 {
        return Matrix::identity(n, n);
    }
    for &(deg, theta) in THETA.iter() {
        if nrm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(m, coeffs);
            return pade_solve(&u, &v);
        }
    }
    let s = ((nrm / THETA13).log2().ceil()).max(0.0) as i32;
    let scaled = m.scale(2f64.powi(-s));
    let (u, v) = pade13(&scaled);
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_solve(u: &Matrix, v: &Matrix) -> Matrix {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Padé denominator is nonsingular within the theta bounds")
}

/// Returns `(e^{M}, phi1(M))` with `phi1(M) = sum_k M^k/(k+1)!`, obtained from the
/// exponential of the block matrix `[[M, I], [0, 0]]`.
///
/// `e^{M} - I = M phi1(M)` without cancellation, which is how the sampled
/// adaptive law forms `e^{-A Ts} - I`.
pub fn expm_phi1(m: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = check_square(m, "expm_phi1 argument")?;
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(m);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    let e = expm_raw(&aug);
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    ))
}

/// `e^{M} - I` evaluated as `M phi1(M)`.
pub fn expm_minus_identity(m: &Matrix) -> Result<Matrix> {
    let (_, phi1) = expm_phi1(m)?;
    Ok(m * phi1)
}

fn rank_tol(sv: &Vector, rows: usize, cols: usize) -> f64 {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    rows.max(cols) as f64 * f64::EPSILON * smax
}

/// Singular values, largest first.
pub fn singular_values(m: &Matrix) -> Vector {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vector::zeros(0);
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Vector::from_vec(sv)
}

/// Numerical rank using the `max(n,m) * eps * sigma_max` threshold.
pub fn rank(m: &Matrix) -> usize {
    let sv = singular_values(m);
    let tol = rank_tol(&sv, m.nrows(), m.ncols());
    sv.iter().filter(|&&s| s > tol).count()
}

/// Induced 2-norm (largest singular value). Empty matrices have norm zero.
pub fn norm2(m: &Matrix) -> f64 {
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

/// 2-norm condition number.
pub fn cond2(m: &Matrix) -> f64 {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 1.0;
    }
    let smin = sv[sv.len() - 1];
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv[0] / smin
    }
}

/// Moore–Penrose pseudo-inverse.
pub fn pinv(b: &Matrix) -> Result<Matrix> {
    if b.nrows() == 0 || b.ncols() == 0 {
        return Err(dim_err("pinv of an empty matrix"));
    }
    if b.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("pinv of the zero matrix".into()));
    }
    let svd = b.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let tol = rank_tol(sv, b.nrows(), b.ncols());
    let mut out = Matrix::zeros(b.ncols(), b.nrows());
    for (k, &s) in sv.iter().enumerate() {
        if s > tol {
            out += (vt.row(k).transpose() * u.column(k).transpose()).scale(1.0 / s);
        }
    }
    Ok(out)
}

/// Orthonormal basis of the null space of `Bᵀ`, so that `[B, B⊥]` is invertible.
///
/// Returns an `n x 0` matrix when `m == n`.
pub fn bperp(b: &Matrix) -> Result<Matrix> {
    let (n, m) = b.shape();
    if m > n {
        return Err(dim_err(format!("bperp needs m <= n, got {n}x{m}")));
    }
    if rank(b) < m {
        return Err(Error::RankDeficient(format!("B ({n}x{m}) is not full column rank")));
    }
    if m == n {
        return Ok(Matrix::zeros(n, 0));
    }
    // Householder QR of [B | I]: the first m columns of Q span range(B) and the
    // remaining n - m are an orthonormal complement.
    let mut aug = Matrix::zeros(n, m + n);
    aug.view_mut((0, 0), (n, m)).copy_from(b);
    aug.view_mut((0, m), (n, n)).fill_with_identity();
    let q = aug.qr().q();
    let mut perp = q.view((0, m), (n, n - m)).into_owned();
    for mut col in perp.column_iter_mut() {
        let idx = col.iamax();
        if col[idx] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(perp)
}

/// Real parts of the eigenvalues of a square matrix.
pub fn eigen_real_parts(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().map(|c| c.re).collect()
}

/// Largest real part over the spectrum (spectral abscissa).
pub fn spectral_abscissa(a: &Matrix) -> f64 {
    eigen_real_parts(a).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &Matrix) -> bool {
    a.nrows() == 0 || spectral_abscissa(a) < 0.0
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()).scale(0.5)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn sym_max_eig(m: &Matrix) -> f64 {
    sym_eigenvalues(m).last().cloned().unwrap_or(0.0)
}

pub fn sym_min_eig(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().cloned().unwrap_or(0.0)
}

fn sym_defect(m: &Matrix) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

pub fn is_spd(m: &Matrix) -> bool {
    m.nrows() == m.ncols()
        && m.nrows() > 0
        && sym_defect(m) < 1e-9
        && symmetrize(m).cholesky().is_some()
}

fn require_spd(m: &Matrix, what: &str) -> Result<()> {
    if !is_spd(m) {
        return Err(Error::NotSpd(format!("{what} is not symmetric positive definite")));
    }
    Ok(())
}

/// Symmetric square root of an SPD (or PSD) matrix.
pub fn sqrtm_psd(m: &Matrix) -> Matrix {
    let eig = symmetrize(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Solves `AᵀP + PA = -Q` for Hurwitz `A` and SPD `Q`.
pub fn lyap_solve(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = check_square(a, "lyap_solve A")?;
    if q.shape() != (n, n) {
        return Err(dim_err(format!("lyap_solve Q must be {n}x{n}")));
    }
    require_spd(q, "lyap_solve Q")?;
    if !is_hurwitz(a) {
        return Err(Error::NoStabilizingSolution(format!(
            "A has spectral abscissa {:.3e} >= 0",
            spectral_abscissa(a)
        )));
    }
    let ident = Matrix::identity(n, n);
    let at = a.transpose();
    let kron = ident.kronecker(&at) + at.kronecker(&ident);
    let rhs = Vector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = kron
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoStabilizingSolution("singular Lyapunov operator".into()))?;
    let p = symmetrize(&Matrix::from_column_slice(n, n, sol.as_slice()));
    require_spd(&p, "Lyapunov solution")
        .map_err(|_| Error::NoStabilizingSolution("solution is not positive definite".into()))?;
    Ok(p)
}

/// Extreme generalized eigenvalues `(min, max)` of the pencil `(S, Q)` for
/// symmetric `S` and SPD `Q`, i.e. the spectrum of `L⁻¹ S L⁻ᵀ` with `Q = LLᵀ`.
pub fn gev_extremes(s: &Matrix, q: &Matrix) -> Result<(f64, f64)> {
    let n = check_square(q, "gev Q")?;
    if s.shape() != (n, n) {
        return Err(dim_err("gev pencil sizes differ"));
    }
    require_spd(q, "gev Q")?;
    let l = symmetrize(q).cholesky().expect("checked SPD").l();
    let linv = l
        .clone()
        .solve_lower_triangular(&Matrix::identity(n, n))
        .expect("cholesky factor is nonsingular");
    let t = symmetrize(&(&linv * symmetrize(s) * linv.transpose()));
    let ev = sym_eigenvalues(&t);
    Ok((ev[0], ev[n - 1]))
}

/// Smallest `mu` with `P <= mu Q`.
pub fn gev_max(p: &Matrix, q: &Matrix) -> Result<f64> {
    require_spd(p, "gev_max P")?;
    Ok(gev_extremes(p, q)?.1)
}

/// Nonnegative least squares `min ||A w - b||, w >= 0` (Lawson–Hanson).
pub fn nnls(a: &Matrix, b: &Vector) -> Vector {
    let (_, n) = a.shape();
    let mut x = Vector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0) * n as f64;
    for _outer in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
        let Some(j) = cand else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        for _inner in 0..(3 * n + 10) {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = Matrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let sol = sub.clone().svd(true, true).solve(b, 1e-14).expect("svd solve");
            let mut s = Vector::zeros(n);
            for (c, &k) in idx.iter().enumerate() {
                s[k] = sol[c];
            }
            if idx.iter().all(|&k| s[k] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &k in &idx {
                if s[k] <= 0.0 {
                    let denom = x[k] - s[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[k] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x += (&s - &x).scale(alpha);
            for &k in &idx {
                if x[k] <= 1e-15 {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
        }
    }
    x
}

/// Distance from `p` to the convex hull of `vertices` (all flattened to vectors).
///
/// The vertices are centred on `p` and normalized first so the NNLS stopping
/// rule does not depend on the scale of the set.
pub fn hull_distance(vertices: &[Vector], p: &Vector) -> f64 {
    if vertices.is_empty() {
        return f64::INFINITY;
    }
    let d = p.len();
    let k = vertices.len();
    let scale = vertices.iter().map(|v| (v - p).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let weight = 10.0;
    let mut a = Matrix::zeros(d + 1, k);
    for (j, v) in vertices.iter().enumerate() {
        a.view_mut((0, j), (d, 1)).copy_from(&((v - p) / scale));
        a[(d, j)] = weight;
    }
    let mut b = Vector::zeros(d + 1);
    b[d] = weight;
    let w = nnls(&a, &b);
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return f64::INFINITY;
    }
    let mut point = Vector::zeros(d);
    for (j, v) in vertices.iter().enumerate() {
        point += v.scale(w[j] / total);
    }
    (point - p).norm()
}

pub fn flatten(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Vertical concatenation of vectors.
pub fn vstack(parts: &[&Vector]) -> Vector {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(len);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}
