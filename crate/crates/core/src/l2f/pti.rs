//! Programmed test inputs: Schroeder-phased multisines on disjoint harmonic sets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PtiConfig {
    /// Base frequency (Hz); every component is an integer multiple.
    pub base_freq: f64,
    /// RMS amplitude per surface (rad), ordered aileron, elevator, rudder.
    pub amplitude: [f64; 3],
    /// Harmonic numbers per surface. Defaults to six interleaved harmonics each.
    #[serde(default = "default_harmonics")]
    pub harmonics: [Vec<u32>; 3],
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "infinite")]
    pub t_end: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn default_harmonics() -> [Vec<u32>; 3] {
    interleaved(6)
}

/// Surface `s` gets harmonics `s + 1, s + 4, s + 7, ...`.
pub fn interleaved(per_surface: u32) -> [Vec<u32>; 3] {
    std::array::from_fn(|s| (0..per_surface).map(|k| 3 * k + s as u32 + 1).collect())
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    freq: f64,
    phase: f64,
    amp: f64,
}

/// A validated multisine generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Multisine {
    components: [Vec<Component>; 3],
    t_start: f64,
    t_end: f64,
}

impl Multisine {
    pub fn new(cfg: &PtiConfig) -> Result<Self> {
        if !(cfg.base_freq > 0.0 && cfg.base_freq.is_finite()) {
            return Err(Error::Config("pti.base_freq must be positive".into()));
        }
        if !(cfg.t_end >= cfg.t_start) {
            return Err(Error::Config("pti.t_end must not precede t_start".into()));
        }
        let mut all: Vec<u32> = cfg.harmonics.iter().flatten().copied().collect();
        if all.contains(&0) {
            return Err(Error::Config("pti harmonic 0 would add a bias".into()));
        }
        all.sort_unstable();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("pti harmonic {} assigned more than once", w[0])));
        }
        let total = all.len() as f64;
        let components = std::array::from_fn(|s| {
            let set = &cfg.harmonics[s];
            let amp = if set.is_empty() { 0.0 } else { cfg.amplitude[s] * (2.0 / set.len() as f64).sqrt() };
            set.iter()
                .map(|&h| {
                    // Schroeder phase indexed by the harmonic's rank over all surfaces.
                    let k = all.binary_search(&h).expect("present") as f64 + 1.0;
                    Component { freq: h as f64 * cfg.base_freq, phase: -PI * k * (k - 1.0) / total, amp }
                })
                .collect()
        });
        Ok(Self { components, t_start: cfg.t_start, t_end: cfg.t_end })
    }

    /// Perturbations `[δa, δe, δr]` at time `t`; zero outside the window.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        if t < self.t_start || t > self.t_end {
            return [0.0; 3];
        }
        let tau = t - self.t_start;
        std::array::from_fn(|s| {
            self.components[s].iter().map(|c| c.amp * (2.0 * PI * c.freq * tau + c.phase).sin()).sum()
        })
    }
}

/// Stateless convenience form of [`Multisine::eval`].
pub fn pti_multisine(t: f64, cfg: &PtiConfig) -> Result<[f64; 3]> {
    Ok(Multisine::new(cfg)?.eval(t))
}
