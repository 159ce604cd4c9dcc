//! Switched uncertain plant: modes, uncertainty polytopes and switching signals.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// One LTI mode `(A, B, C, k)` of the switched family.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub k: Matrix,
}

impl Mode {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, k: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(dim_err(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        let m = b.ncols();
        if b.nrows() != n || m == 0 || m > n {
            return Err(dim_err(format!("B must be {n}xm with 1 <= m <= {n}, got {:?}", b.shape())));
        }
        if c.shape() != (m, n) {
            return Err(dim_err(format!("C must be {m}x{n}, got {:?}", c.shape())));
        }
        if k.shape() != (m, m) {
            return Err(dim_err(format!("k must be {m}x{m}, got {:?}", k.shape())));
        }
        Ok(Self { a, b, c, k })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Nonempty ordered family of modes with uniform dimensions.
#[derive(Debug, Clone)]
pub struct ModeSet {
    modes: Vec<Mode>,
}

impl ModeSet {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let Some(first) = modes.first() else {
            return Err(Error::InvalidArgument("mode set is empty".into()));
        };
        let (n, m) = (first.n(), first.m());
        for (i, mode) in modes.iter().enumerate() {
            if mode.n() != n || mode.m() != m {
                return Err(dim_err(format!(
                    "mode {i} has (n, m) = ({}, {}), expected ({n}, {m})",
                    mode.n(),
                    mode.m()
                )));
            }
        }
        Ok(Self { modes })
    }

    pub fn n(&self) -> usize {
        self.modes[0].n()
    }

    pub fn m(&self) -> usize {
        self.modes[0].m()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn get(&self, i: usize) -> &Mode {
        &self.modes[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Mode> {
        self.modes.iter()
    }
}

/// Vertex descriptions of the polytopes Θ, Δ and Ω.
#[derive(Debug, Clone)]
pub struct UncertaintySets {
    pub theta: Vec<Matrix>,
    pub d: Vec<Vector>,
    pub omega: Vec<Matrix>,
}

impl UncertaintySets {
    /// The degenerate sets Θ = {0}, Δ = {0}, Ω = {I}.
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            theta: vec![Matrix::zeros(n, m)],
            d: vec![Vector::zeros(m)],
            omega: vec![Matrix::identity(m, m)],
        }
    }

    pub fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.theta.is_empty() || self.d.is_empty() || self.omega.is_empty() {
            return Err(Error::InvalidArgument("every uncertainty set needs at least one vertex".into()));
        }
        if let Some(t) = self.theta.iter().find(|t| t.shape() != (n, m)) {
            return Err(dim_err(format!("theta vertex must be {n}x{m}, got {:?}", t.shape())));
        }
        if let Some(d) = self.d.iter().find(|d| d.len() != m) {
            return Err(dim_err(format!("d vertex must have length {m}, got {}", d.len())));
        }
        if let Some(w) = self.omega.iter().find(|w| w.shape() != (m, m)) {
            return Err(dim_err(format!("omega vertex must be {m}x{m}, got {:?}", w.shape())));
        }
        Ok(())
    }

    pub fn theta_centroid(&self) -> Matrix {
        centroid(&self.theta)
    }

    pub fn omega_centroid(&self) -> Matrix {
        centroid(&self.omega)
    }

    pub fn theta_contains(&self, theta: &Matrix) -> bool {
        membership(&self.theta, theta)
    }

    pub fn omega_contains(&self, omega: &Matrix) -> bool {
        membership(&self.omega, omega)
    }

    pub fn d_contains(&self, d: &Vector) -> bool {
        let verts: Vec<Vector> = self.d.clone();
        linalg::hull_distance(&verts, d) <= HULL_TOL * (1.0 + d.amax())
    }
}

const HULL_TOL: f64 = 1e-7;

fn centroid(verts: &[Matrix]) -> Matrix {
    let mut c = Matrix::zeros(verts[0].nrows(), verts[0].ncols());
    for v in verts {
        c += v;
    }
    c / verts.len() as f64
}

fn membership(verts: &[Matrix], p: &Matrix) -> bool {
    let flat: Vec<Vector> = verts.iter().map(linalg::flatten).collect();
    linalg::hull_distance(&flat, &linalg::flatten(p)) <= HULL_TOL * (1.0 + p.amax())
}

/// Ordered switch events `(time index on the Ts grid, mode)`; the first event is at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    pub events: Vec<(f64, usize)>,
}

impl SwitchingSignal {
    pub fn constant(mode: usize) -> Self {
        Self { events: vec![(0.0, mode)] }
    }

    /// Active mode at time `t` (right-continuous).
    pub fn mode_at(&self, t: f64) -> usize {
        let mut mode = self.events[0].1;
        for &(ti, i) in &self.events {
            if ti <= t {
                mode = i;
            } else {
                break;
            }
        }
        mode
    }

    pub fn switch_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().skip(1).map(|e| e.0)
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.events.windows(2).map(|w| w[1].0 - w[0].0).reduce(f64::min)
    }
}

/// Plant derivative `A x + B(ω u + θᵀ x + d)`.
pub fn plant_deriv(
    mode: &Mode,
    x: &Vector,
    u: &Vector,
    theta: &Matrix,
    d: &Vector,
    omega: &Matrix,
) -> Result<Vector> {
    let (n, m) = (mode.n(), mode.m());
    if x.len() != n || u.len() != m || d.len() != m {
        return Err(dim_err("plant_deriv vector sizes"));
    }
    if theta.shape() != (n, m) || omega.shape() != (m, m) {
        return Err(dim_err("plant_deriv uncertainty sizes"));
    }
    Ok(plant_deriv_unchecked(mode, x, u, theta, d, omega))
}

pub(crate) fn plant_deriv_unchecked(
    mode: &Mode,
    x: &Vector,
    u: &Vector,
    theta: &Matrix,
    d: &Vector,
    omega: &Matrix,
) -> Vector {
    let inner = omega * u + theta.tr_mul(x) + d;
    &mode.a * x + &mode.b * inner
}

/// One structural problem found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    RankDeficientB { mode: usize },
    ModeOutOfRange { event: usize, mode: usize },
    NonIncreasingSwitch { event: usize },
    NotMultipleOfTs { t: f64 },
    DwellTooShort { t: f64, gap: f64, tau_d: f64 },
    OmegaNotDiagonallyDominant { vertex: usize },
    ZeroNotInTheta,
    ZeroNotInDelta,
    IdentityNotInOmega,
    FirstEventNotAtZero,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RankDeficientB { mode } => write!(f, "B of mode {mode} is not full column rank"),
            Violation::ModeOutOfRange { event, mode } => {
                write!(f, "switch event {event} names unknown mode {mode}")
            }
            Violation::NonIncreasingSwitch { event } => {
                write!(f, "switch event {event} is not strictly after its predecessor")
            }
            Violation::NotMultipleOfTs { t } => write!(f, "switch at t={t} is not a multiple of Ts"),
            Violation::DwellTooShort { t, gap, tau_d } => {
                write!(f, "switch at t={t} follows a gap of {gap:.4} s < dwell time {tau_d:.4} s")
            }
            Violation::OmegaNotDiagonallyDominant { vertex } => {
                write!(f, "omega vertex {vertex} is not strictly diagonally dominant")
            }
            Violation::ZeroNotInTheta => write!(f, "0 is not in Theta"),
            Violation::ZeroNotInDelta => write!(f, "0 is not in Delta"),
            Violation::IdentityNotInOmega => write!(f, "I is not in Omega"),
            Violation::FirstEventNotAtZero => write!(f, "switching signal must start at t=0"),
        }
    }
}

/// Relative tolerance for deciding that a switch time sits on the Ts grid.
const GRID_TOL: f64 = 1e-9;

pub fn is_grid_multiple(t: f64, ts: f64) -> bool {
    let k = (t / ts).round();
    (t - k * ts).abs() <= GRID_TOL * ts.max(t.abs())
}

fn strictly_diag_dominant(w: &Matrix) -> bool {
    (0..w.nrows()).all(|r| {
        let off: f64 = (0..w.ncols()).filter(|&c| c != r).map(|c| w[(r, c)].abs()).sum();
        w[(r, r)].abs() > off
    })
}

/// Lists every violated structural condition; empty means the scenario is admissible.
pub fn validate_scenario(
    modes: &ModeSet,
    sets: &UncertaintySets,
    signal: &SwitchingSignal,
    ts: f64,
    tau_d: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, mode) in modes.iter().enumerate() {
        if linalg::rank(&mode.b) < mode.m() {
            out.push(Violation::RankDeficientB { mode: i });
        }
    }
    match signal.events.first() {
        Some(&(t0, _)) if t0 == 0.0 => {}
        _ => out.push(Violation::FirstEventNotAtZero),
    }
    for (e, &(t, mode)) in signal.events.iter().enumerate() {
        if mode >= modes.len() {
            out.push(Violation::ModeOutOfRange { event: e, mode });
        }
        if !is_grid_multiple(t, ts) {
            out.push(Violation::NotMultipleOfTs { t });
        }
        if e > 0 {
            let gap = t - signal.events[e - 1].0;
            if gap <= 0.0 {
                out.push(Violation::NonIncreasingSwitch { event: e });
            } else if gap < tau_d * (1.0 - 1e-12) {
                out.push(Violation::DwellTooShort { t, gap, tau_d });
            }
        }
    }
    for (v, w) in sets.omega.iter().enumerate() {
        if !strictly_diag_dominant(w) {
            out.push(Violation::OmegaNotDiagonallyDominant { vertex: v });
        }
    }
    if sets.check_dims(modes.n(), modes.m()).is_ok() {
        if !sets.theta_contains(&Matrix::zeros(modes.n(), modes.m())) {
            out.push(Violation::ZeroNotInTheta);
        }
        if !sets.d_contains(&Vector::zeros(modes.m())) {
            out.push(Violation::ZeroNotInDelta);
        }
        if !sets.omega_contains(&Matrix::identity(modes.m(), modes.m())) {
            out.push(Violation::IdentityNotInOmega);
        }
    }
    out
}

/// Vertex maxima of the uncertainty sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyBounds {
    pub d_theta: f64,
    pub d_d: f64,
    /// `max |trace(ω − I)|`
    pub d_omega: f64,
    /// `max ‖I − ω‖`, the induced-norm variant
    pub d_omega_norm: f64,
}

impl UncertaintyBounds {
    /// The ω-bound used in bound arithmetic.
    pub fn omega_bound(&self, strict_norm: bool) -> f64 {
        if strict_norm {
            self.d_omega_norm
        } else {
            self.d_omega
        }
    }
}

pub fn uncertainty_bounds(sets: &UncertaintySets) -> UncertaintyBounds {
    let d_theta = sets.theta.iter().map(linalg::norm2).fold(0.0, f64::max);
    let d_d = sets.d.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let mut d_omega: f64 = 0.0;
    let mut d_omega_norm: f64 = 0.0;
    for w in &sets.omega {
        let m = w.nrows();
        let diff = w - Matrix::identity(m, m);
        d_omega = d_omega.max(diff.trace().abs());
        d_omega_norm = d_omega_norm.max(linalg::norm2(&diff));
    }
    UncertaintyBounds { d_theta, d_d, d_omega, d_omega_norm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_mode(a: f64) -> Mode {
        let s = |v| Matrix::from_element(1, 1, v);
        Mode::new(s(a), s(1.0), s(1.0), s(1.0)).unwrap()
    }

    #[test]
    fn plant_deriv_scalar() {
        let mode = scalar_mode(-1.0);
        let one = Vector::from_element(1, 1.0);
        let dx = plant_deriv(
            &mode,
            &one,
            &Vector::zeros(1),
            &Matrix::from_element(1, 1, 0.5),
            &Vector::from_element(1, 0.2),
            &Matrix::identity(1, 1),
        )
        .unwrap();
        assert_relative_eq!(dx[0], -0.3, epsilon = 1e-15);
    }

    #[test]
    fn plant_deriv_rejects_bad_sizes() {
        let mode = scalar_mode(-1.0);
        let r = plant_deriv(
            &mode,
            &Vector::zeros(2),
            &Vector::zeros(1),
            &Matrix::zeros(1, 1),
            &Vector::zeros(1),
            &Matrix::identity(1, 1),
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn validate_single_mode_ok() {
        let modes = ModeSet::new(vec![scalar_mode(-1.0)]).unwrap();
        let sets = UncertaintySets::zero(1, 1);
        assert!(validate_scenario(&modes, &sets, &SwitchingSignal::constant(0), 0.1, 0.0).is_empty());
    }

    #[test]
    fn validate_flags_off_grid_switch() {
        let modes = ModeSet::new(vec![scalar_mode(-1.0), scalar_mode(-2.0)]).unwrap();
        let sets = UncertaintySets::zero(1, 1);
        let sig = SwitchingSignal { events: vec![(0.0, 0), (0.15, 1)] };
        let v = validate_scenario(&modes, &sets, &sig, 0.1, 0.0);
        assert_eq!(v, vec![Violation::NotMultipleOfTs { t: 0.15 }]);
    }

    #[test]
    fn validate_flags_dwell_gaps() {
        let modes = ModeSet::new(vec![scalar_mode(-1.0), scalar_mode(-2.0)]).unwrap();
        let sets = UncertaintySets::zero(1, 1);
        let sig = SwitchingSignal { events: vec![(0.0, 0), (0.2, 1), (0.4, 0)] };
        let v = validate_scenario(&modes, &sets, &sig, 0.1, 0.3);
        let dwell = v.iter().filter(|v| matches!(v, Violation::DwellTooShort { .. })).count();
        assert_eq!(dwell, 2);
    }

    #[test]
    fn validate_flags_set_structure() {
        let modes = ModeSet::new(vec![scalar_mode(-1.0)]).unwrap();
        let s = |v| Matrix::from_element(1, 1, v);
        let sets = UncertaintySets {
            theta: vec![s(0.1), s(0.2)],
            d: vec![Vector::from_element(1, 0.1)],
            omega: vec![s(1.1), s(1.3)],
        };
        let v = validate_scenario(&modes, &sets, &SwitchingSignal::constant(0), 0.1, 0.0);
        assert!(v.contains(&Violation::ZeroNotInTheta));
        assert!(v.contains(&Violation::ZeroNotInDelta));
        assert!(v.contains(&Violation::IdentityNotInOmega));
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(
            uncertainty_bounds(&UncertaintySets::zero(2, 1)),
            UncertaintyBounds { d_theta: 0.0, d_d: 0.0, d_omega: 0.0, d_omega_norm: 0.0 }
        );
        let t = Matrix::from_column_slice(2, 1, &[0.3, 0.4]);
        let sets = UncertaintySets {
            theta: vec![t.clone(), -t],
            d: vec![Vector::zeros(2)],
            omega: vec![
                Matrix::from_diagonal(&Vector::from_column_slice(&[0.8, 1.2])),
                Matrix::from_diagonal(&Vector::from_column_slice(&[1.2, 0.8])),
            ],
        };
        let b = uncertainty_bounds(&sets);
        assert_relative_eq!(b.d_theta, 0.5, epsilon = 1e-15);
        assert_relative_eq!(b.d_omega, 0.0, epsilon = 1e-15);
        assert_relative_eq!(b.d_omega_norm, 0.2, epsilon = 1e-14);
    }

    #[test]
    fn mode_at_is_right_continuous() {
        let sig = SwitchingSignal { events: vec![(0.0, 0), (1.0, 1), (2.0, 0)] };
        assert_eq!(sig.mode_at(0.999), 0);
        assert_eq!(sig.mode_at(1.0), 1);
        assert_eq!(sig.mode_at(2.5), 0);
        assert_eq!(sig.min_gap(), Some(1.0));
    }
}
