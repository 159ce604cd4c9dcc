//! Time-varying uncertainty realizations and reference commands.
//!
//! θ(t) and d(t) are built as convex combinations of polytope vertices with
//! time-varying weights, so membership holds by construction; the grid check
//! in [`UncertaintyTrajectory::check_membership`] is a validation aid only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::UncertaintySets;

/// Time-varying convex weights over `k` vertices.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightProfile {
    Constant(Vec<f64>),
    /// Oscillates between two weight vectors: `low + (high - low)(1 + sin(2πft + φ))/2`.
    Sinusoid { low: Vec<f64>, high: Vec<f64>, freq: f64, phase: f64 },
    /// Linear blend from `from` to `to` over `[t_start, t_end]`, held afterwards.
    RampHold { from: Vec<f64>, to: Vec<f64>, t_start: f64, t_end: f64 },
    /// Precomputed filtered noise on a uniform grid, linearly interpolated.
    Noise { dt: f64, samples: Vec<Vec<f64>> },
}

fn normalized(w: &[f64]) -> Result<Vec<f64>> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    Ok(w.iter().map(|v| v / s).collect())
}

impl WeightProfile {
    /// All weight on vertex `i` of `k`.
    pub fn vertex(i: usize, k: usize) -> Self {
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        WeightProfile::Constant(w)
    }

    /// Filtered Gaussian noise: each vertex gets an AR(1) process with
    /// correlation time `tau`, and weights are `max(0, 1 + spread z)` normalized.
    pub fn filtered_noise(k: usize, horizon: f64, dt: f64, tau: f64, spread: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = (horizon / dt).ceil() as usize + 2;
        let phi = (-dt / tau.max(dt)).exp();
        let gain = (1.0 - phi * phi).sqrt();
        let mut z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let mut samples = Vec::with_capacity(steps);
        for _ in 0..steps {
            let mut w: Vec<f64> = z.iter().map(|zi| (1.0 + spread * zi).max(0.0)).collect();
            if w.iter().sum::<f64>() <= 0.0 {
                w = vec![1.0; k];
            }
            let s: f64 = w.iter().sum();
            samples.push(w.into_iter().map(|v| v / s).collect());
            for zi in z.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *zi = phi * *zi + gain * e;
            }
        }
        WeightProfile::Noise { dt, samples }
    }

    pub fn len(&self) -> usize {
        match self {
            WeightProfile::Constant(w) => w.len(),
            WeightProfile::Sinusoid { low, .. } => low.len(),
            WeightProfile::RampHold { from, .. } => from.len(),
            WeightProfile::Noise { samples, .. } => samples.first().map_or(0, |s| s.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let k = self.len();
        let check = |w: &[f64]| -> Result<()> {
            if w.len() != k {
                return Err(dim_err("weight vectors differ in length"));
            }
            normalized(w).map(|_| ())
        };
        match self {
            WeightProfile::Constant(w) => check(w),
            WeightProfile::Sinusoid { low, high, freq, .. } => {
                if !freq.is_finite() || *freq < 0.0 {
                    return Err(Error::InvalidArgument("sinusoid frequency must be >= 0".into()));
                }
                check(low)?;
                check(high)
            }
            WeightProfile::RampHold { from, to, t_start, t_end } => {
                if t_end < t_start {
                    return Err(Error::InvalidArgument("ramp must end after it starts".into()));
                }
                check(from)?;
                check(to)
            }
            WeightProfile::Noise { dt, samples } => {
                if *dt <= 0.0 || samples.is_empty() {
                    return Err(Error::InvalidArgument("noise profile needs dt > 0 and samples".into()));
                }
                samples.iter().try_for_each(|s| check(s))
            }
        }
    }

    fn blend(a: &[f64], b: &[f64], s: f64, out: &mut [f64]) {
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
            *o = x + (y - x) * s;
        }
    }

    /// Writes the normalized weights at time `t` into `out`.
    pub fn weights_into(&self, t: f64, out: &mut [f64]) {
        match self {
            WeightProfile::Constant(w) => out.copy_from_slice(w),
            WeightProfile::Sinusoid { low, high, freq, phase } => {
                let s = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * freq * t + phase).sin());
                Self::blend(low, high, s, out);
            }
            WeightProfile::RampHold { from, to, t_start, t_end } => {
                let s = if t <= *t_start {
                    0.0
                } else if t >= *t_end || t_end == t_start {
                    1.0
                } else {
                    (t - t_start) / (t_end - t_start)
                };
                Self::blend(from, to, s, out);
            }
            WeightProfile::Noise { dt, samples } => {
                let pos = (t.max(0.0) / dt).min((samples.len() - 1) as f64);
                let i = (pos.floor() as usize).min(samples.len() - 1);
                let j = (i + 1).min(samples.len() - 1);
                Self::blend(&samples[i], &samples[j], pos - i as f64, out);
            }
        }
        let s: f64 = out.iter().sum();
        for v in out.iter_mut() {
            *v /= s;
        }
    }
}

/// A matrix-valued path `Σ w_k(t) V_k`.
#[derive(Debug, Clone)]
pub struct ConvexPath {
    vertices: Vec<Matrix>,
    profile: WeightProfile,
}

impl ConvexPath {
    pub fn new(vertices: Vec<Matrix>, profile: WeightProfile) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidArgument("convex path needs vertices".into()));
        }
        if profile.len() != vertices.len() {
            return Err(dim_err(format!(
                "profile has {} weights for {} vertices",
                profile.len(),
                vertices.len()
            )));
        }
        let shape = vertices[0].shape();
        if vertices.iter().any(|v| v.shape() != shape) {
            return Err(dim_err("vertices differ in shape"));
        }
        profile.validate()?;
        Ok(Self { vertices, profile })
    }

    pub fn constant(value: Matrix) -> Self {
        Self { vertices: vec![value], profile: WeightProfile::Constant(vec![1.0]) }
    }

    pub fn eval(&self, t: f64) -> Matrix {
        let mut w = vec![0.0; self.vertices.len()];
        self.profile.weights_into(t, &mut w);
        let mut out = Matrix::zeros(self.vertices[0].nrows(), self.vertices[0].ncols());
        for (v, wk) in self.vertices.iter().zip(&w) {
            if *wk != 0.0 {
                out.zip_apply(v, |o, x| *o += wk * x);
            }
        }
        out
    }
}

/// θ(t), d(t) and per-mode constant ω.
#[derive(Debug, Clone)]
pub struct UncertaintyTrajectory {
    pub theta: ConvexPath,
    pub d: ConvexPath,
    pub omega: Vec<Matrix>,
}

impl UncertaintyTrajectory {
    pub fn zero(n: usize, m: usize, modes: usize) -> Self {
        Self {
            theta: ConvexPath::constant(Matrix::zeros(n, m)),
            d: ConvexPath::constant(Matrix::zeros(m, 1)),
            omega: vec![Matrix::identity(m, m); modes],
        }
    }

    pub fn theta_at(&self, t: f64) -> Matrix {
        self.theta.eval(t)
    }

    pub fn d_at(&self, t: f64) -> Vector {
        let d = self.d.eval(t);
        Vector::from_column_slice(d.as_slice())
    }

    pub fn omega_for(&self, mode: usize) -> &Matrix {
        &self.omega[mode]
    }

    /// Checks θ(t), d(t) and every ω against the declared polytopes on a
    /// 100-points-per-second grid. Returns one message per failure.
    pub fn check_membership(&self, sets: &UncertaintySets, horizon: f64) -> Vec<String> {
        let mut bad = Vec::new();
        let pts = ((horizon * 100.0).ceil() as usize).max(1);
        for k in 0..=pts {
            let t = horizon * k as f64 / pts as f64;
            if !sets.theta_contains(&self.theta_at(t)) {
                bad.push(format!("theta(t={t:.2}) outside Theta"));
            }
            if !sets.d_contains(&self.d_at(t)) {
                bad.push(format!("d(t={t:.2}) outside Delta"));
            }
        }
        for (i, w) in self.omega.iter().enumerate() {
            if !sets.omega_contains(w) {
                bad.push(format!("omega of mode {i} outside Omega"));
            }
        }
        bad
    }
}

/// Reference command r(t).
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    Constant(Vector),
    Step { t0: f64, before: Vector, after: Vector },
    Sine { offset: Vector, amplitude: Vector, freq: f64 },
    /// Square wave with the given half-period pattern `offset ± amplitude`.
    Square { offset: Vector, amplitude: Vector, period: f64 },
    /// Piecewise-constant schedule `(t_k, value)`, held from each `t_k`.
    Schedule(Vec<(f64, Vector)>),
}

impl ReferenceSignal {
    pub fn dim(&self) -> usize {
        match self {
            ReferenceSignal::Constant(v) => v.len(),
            ReferenceSignal::Step { after, .. } => after.len(),
            ReferenceSignal::Sine { offset, .. } | ReferenceSignal::Square { offset, .. } => offset.len(),
            ReferenceSignal::Schedule(s) => s.first().map_or(0, |e| e.1.len()),
        }
    }

    pub fn at(&self, t: f64) -> Vector {
        match self {
            ReferenceSignal::Constant(v) => v.clone(),
            ReferenceSignal::Step { t0, before, after } => {
                if t >= *t0 {
                    after.clone()
                } else {
                    before.clone()
                }
            }
            ReferenceSignal::Sine { offset, amplitude, freq } => {
                offset + amplitude * (2.0 * std::f64::consts::PI * freq * t).sin()
            }
            ReferenceSignal::Square { offset, amplitude, period } => {
                let phase = (t / period).rem_euclid(1.0);
                if phase < 0.5 {
                    offset + amplitude
                } else {
                    offset - amplitude
                }
            }
            ReferenceSignal::Schedule(s) => {
                let mut v = &s[0].1;
                for (tk, val) in s {
                    if *tk <= t {
                        v = val;
                    } else {
                        break;
                    }
                }
                v.clone()
            }
        }
    }

    /// Upper bound on `sup_t ‖r(t)‖`.
    pub fn max_norm(&self) -> f64 {
        match self {
            ReferenceSignal::Constant(v) => v.norm(),
            ReferenceSignal::Step { before, after, .. } => before.norm().max(after.norm()),
            ReferenceSignal::Sine { offset, amplitude, .. }
            | ReferenceSignal::Square { offset, amplitude, .. } => offset.norm() + amplitude.norm(),
            ReferenceSignal::Schedule(s) => s.iter().map(|e| e.1.norm()).fold(0.0, f64::max),
        }
    }
}
