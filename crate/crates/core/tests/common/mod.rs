#![allow(dead_code)]

use std::path::PathBuf;

use l1ac::config::{load, LoadedConfig};
use l1ac::linalg::Matrix;
use l1ac::sim::LinearScenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

pub fn loaded(name: &str) -> LoadedConfig {
    load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn linear(name: &str) -> LinearScenario {
    loaded(name).config.linear_scenario().unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

/// Random SPD matrix `MᵀM + shift·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let m = random_matrix(rng, n, n, -1.0, 1.0);
    m.transpose() * &m + Matrix::identity(n, n) * shift
}

/// Random Hurwitz matrix: a random matrix shifted left past its spectral abscissa.
pub fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let m = random_matrix(rng, n, n, -1.0, 1.0);
    let shift = l1ac::linalg::spectral_abscissa(&m) + rng.random_range(0.2..1.5);
    m - Matrix::identity(n, n) * shift
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
