//! Scenario files: TOML with strict schemas (unknown keys are rejected).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificate::CertifyOptions;
use crate::controller::{FilterRealization, ReinitPolicy};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{Mode, ModeSet, SwitchingSignal, UncertaintySets};
use crate::sim::{LinearScenario, Schedule, SweepOptions, ENVELOPE_NORM};
use crate::trajectory::{ConvexPath, ReferenceSignal, UncertaintyTrajectory, WeightProfile};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub plant: Option<PlantSection>,
    pub aircraft: Option<crate::l2f::AircraftSection>,
    pub uncertainty: Option<UncertaintySection>,
    pub controller: ControllerSection,
    pub switching: Option<SwitchingSection>,
    pub reference: Option<ReferenceCfg>,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub certificates: CertificatesSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCfg {
    pub a: Rows,
    pub b: Rows,
    pub c: Rows,
    pub k: Rows,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub modes: Vec<ModeCfg>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileCfg {
    /// Equal weights on every vertex.
    Centroid,
    Vertex { index: usize },
    Constant { weights: Vec<f64> },
    Sinusoid { low: Vec<f64>, high: Vec<f64>, freq: f64, #[serde(default)] phase: f64 },
    Ramp { from: Vec<f64>, to: Vec<f64>, t_start: f64, t_end: f64 },
    Noise { tau: f64, spread: f64, #[serde(default)] seed: u64 },
}

impl ProfileCfg {
    fn build(&self, k: usize, horizon: f64) -> Result<WeightProfile> {
        Ok(match self {
            ProfileCfg::Centroid => WeightProfile::Constant(vec![1.0 / k as f64; k]),
            ProfileCfg::Vertex { index } => {
                if *index >= k {
                    return Err(Error::Config(format!("vertex index {index} out of range ({k} vertices)")));
                }
                WeightProfile::vertex(*index, k)
            }
            ProfileCfg::Constant { weights } => WeightProfile::Constant(weights.clone()),
            ProfileCfg::Sinusoid { low, high, freq, phase } => {
                WeightProfile::Sinusoid { low: low.clone(), high: high.clone(), freq: *freq, phase: *phase }
            }
            ProfileCfg::Ramp { from, to, t_start, t_end } => WeightProfile::RampHold {
                from: from.clone(),
                to: to.clone(),
                t_start: *t_start,
                t_end: *t_end,
            },
            ProfileCfg::Noise { tau, spread, seed } => {
                WeightProfile::filtered_noise(k, horizon.max(0.01), 0.01, *tau, *spread, *seed)
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationCfg {
    pub theta: Option<ProfileCfg>,
    pub d: Option<ProfileCfg>,
    /// Per-mode convex weights over the Ω vertices.
    pub omega_weights: Option<Rows>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    /// Θ vertices, each `n × m`.
    pub theta: Vec<Rows>,
    /// Δ vertices, each of length `m`.
    pub d: Vec<Vec<f64>>,
    /// Ω vertices, each `m × m`.
    pub omega: Vec<Rows>,
    pub realization: Option<RealizationCfg>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FilterCfg {
    /// `D0 = gain · I` with no filter states.
    pub gain: Option<f64>,
    pub af: Option<Rows>,
    pub bf: Option<Rows>,
    pub cf: Option<Rows>,
    pub df: Option<Rows>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinitKind {
    #[default]
    Measured,
    MeasuredPlusNoise,
    None,
    Offset,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub ts: f64,
    #[serde(default)]
    pub filter: FilterCfg,
    #[serde(default)]
    pub reinit: ReinitKind,
    pub reinit_sigma: Option<f64>,
    pub reinit_offset: Option<Vec<f64>>,
    /// Measurement noise standard deviation at sample instants.
    #[serde(default)]
    pub measurement_noise: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSection {
    /// `[t, mode]` pairs; the first must be at t = 0.
    pub events: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulePoint {
    pub t: f64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceCfg {
    Constant { value: Vec<f64> },
    Step { t0: f64, before: Vec<f64>, after: Vec<f64> },
    Sine { offset: Vec<f64>, amplitude: Vec<f64>, freq: f64 },
    Square { offset: Vec<f64>, amplitude: Vec<f64>, period: f64 },
    Schedule { points: Vec<SchedulePoint> },
}

impl ReferenceCfg {
    pub fn build(&self) -> Result<ReferenceSignal> {
        let v = |x: &Vec<f64>| Vector::from_column_slice(x);
        Ok(match self {
            ReferenceCfg::Constant { value } => ReferenceSignal::Constant(v(value)),
            ReferenceCfg::Step { t0, before, after } => {
                ReferenceSignal::Step { t0: *t0, before: v(before), after: v(after) }
            }
            ReferenceCfg::Sine { offset, amplitude, freq } => {
                ReferenceSignal::Sine { offset: v(offset), amplitude: v(amplitude), freq: *freq }
            }
            ReferenceCfg::Square { offset, amplitude, period } => {
                if !(*period > 0.0) {
                    return Err(Error::Config("square reference period must be positive".into()));
                }
                ReferenceSignal::Square { offset: v(offset), amplitude: v(amplitude), period: *period }
            }
            ReferenceCfg::Schedule { points } => {
                if points.is_empty() {
                    return Err(Error::Config("reference schedule is empty".into()));
                }
                ReferenceSignal::Schedule(points.iter().map(|p| (p.t, v(&p.value))).collect())
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub horizon: f64,
    pub h: Option<f64>,
    pub record_dt: Option<f64>,
    pub envelope: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificatesSection {
    pub a_star: f64,
    pub a: f64,
    pub delta0: Option<f64>,
    pub strict_norm_bounds: bool,
    pub ts_search_max: f64,
}

impl Default for CertificatesSection {
    fn default() -> Self {
        let d = CertifyOptions::default();
        Self {
            a_star: d.a_star,
            a: d.a,
            delta0: d.delta0,
            strict_norm_bounds: d.strict_norm_bounds,
            ts_search_max: d.ts_search_max,
        }
    }
}

impl CertificatesSection {
    pub fn options(&self) -> CertifyOptions {
        CertifyOptions {
            a_star: self.a_star,
            a: self.a,
            delta0: self.delta0,
            strict_norm_bounds: self.strict_norm_bounds,
            ts_search_max: self.ts_search_max,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_runs: usize,
    pub tau: f64,
    pub spread: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepOptions::default();
        Self { n_runs: d.n_runs, tau: d.tau, spread: d.spread }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    /// Write a trace of the paired baseline run where the command supports one.
    pub baseline: bool,
}

pub(crate) fn to_matrix(rows: &Rows, what: &str) -> Result<Matrix> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::Config(format!("{what}: empty matrix")));
    }
    let c = rows[0].len();
    if c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what}: rows differ in length or are empty")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{what}: non-finite entry")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// A loaded scenario file together with the hash of its exact bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub hash: String,
}

pub fn parse(text: &str) -> Result<LoadedConfig> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(LoadedConfig { config, hash: hex::encode(Sha256::digest(text.as_bytes())) })
}

pub fn load(path: &std::path::Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

impl ScenarioConfig {
    pub fn is_l2f(&self) -> bool {
        self.aircraft.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.plant, &self.aircraft) {
            (Some(_), Some(_)) => return Err(Error::Config("give either [plant] or [aircraft], not both".into())),
            (None, None) => return Err(Error::Config("missing [plant] or [aircraft] section".into())),
            (Some(_), None) => {
                self.linear_scenario()?;
            }
            (None, Some(_)) => {
                self.flight_scenario()?;
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.controller.ts, self.schedule.h, self.schedule.horizon, self.schedule.record_dt)
    }

    pub fn filter(&self, m: usize) -> Result<FilterRealization> {
        let f = &self.controller.filter;
        match (f.gain, &f.af, &f.bf, &f.cf, &f.df) {
            (Some(g), None, None, None, None) => {
                if !g.is_finite() {
                    return Err(Error::Config("filter gain must be finite".into()));
                }
                Ok(FilterRealization::constant(g, m))
            }
            (None, Some(af), Some(bf), Some(cf), Some(df)) => FilterRealization::new(
                to_matrix(af, "filter.af")?,
                to_matrix(bf, "filter.bf")?,
                to_matrix(cf, "filter.cf")?,
                to_matrix(df, "filter.df")?,
            ),
            (None, None, None, None, None) => Err(Error::Config("controller.filter needs gain or af/bf/cf/df".into())),
            _ => Err(Error::Config("controller.filter: give either gain or all of af, bf, cf, df".into())),
        }
    }

    pub fn reinit(&self, n: usize) -> Result<ReinitPolicy> {
        let c = &self.controller;
        Ok(match c.reinit {
            ReinitKind::Measured => ReinitPolicy::Measured,
            ReinitKind::None => ReinitPolicy::None,
            ReinitKind::MeasuredPlusNoise => ReinitPolicy::MeasuredPlusNoise(
                c.reinit_sigma.ok_or_else(|| Error::Config("reinit_sigma required".into()))?,
            ),
            ReinitKind::Offset => {
                let v = c.reinit_offset.as_ref().ok_or_else(|| Error::Config("reinit_offset required".into()))?;
                if v.len() != n {
                    return Err(Error::Config(format!("reinit_offset needs {n} entries")));
                }
                ReinitPolicy::Offset(Vector::from_column_slice(v))
            }
        })
    }

    pub fn modes(&self) -> Result<ModeSet> {
        let plant = self.plant.as_ref().ok_or_else(|| Error::Config("missing [plant]".into()))?;
        let modes = plant
            .modes
            .iter()
            .enumerate()
            .map(|(i, mc)| {
                Mode::new(
                    to_matrix(&mc.a, &format!("plant.modes[{i}].a"))?,
                    to_matrix(&mc.b, &format!("plant.modes[{i}].b"))?,
                    to_matrix(&mc.c, &format!("plant.modes[{i}].c"))?,
                    to_matrix(&mc.k, &format!("plant.modes[{i}].k"))?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ModeSet::new(modes)
    }

    pub fn sets(&self, n: usize, m: usize) -> Result<UncertaintySets> {
        match &self.uncertainty {
            None => Ok(UncertaintySets::zero(n, m)),
            Some(u) => {
                let sets = UncertaintySets {
                    theta: u.theta.iter().map(|t| to_matrix(t, "uncertainty.theta")).collect::<Result<_>>()?,
                    d: u.d.iter().map(|d| Vector::from_column_slice(d)).collect(),
                    omega: u.omega.iter().map(|w| to_matrix(w, "uncertainty.omega")).collect::<Result<_>>()?,
                };
                if sets.theta.is_empty() || sets.d.is_empty() || sets.omega.is_empty() {
                    return Err(Error::Config("uncertainty sets need at least one vertex each".into()));
                }
                sets.check_dims(n, m).map_err(|e| Error::Config(e.to_string()))?;
                Ok(sets)
            }
        }
    }

    pub fn trajectory(&self, sets: &UncertaintySets, n_modes: usize) -> Result<UncertaintyTrajectory> {
        let horizon = self.schedule.horizon;
        let real = self.uncertainty.as_ref().and_then(|u| u.realization.as_ref());
        let centroid = ProfileCfg::Centroid;
        let theta_p = real.and_then(|r| r.theta.as_ref()).unwrap_or(&centroid);
        let d_p = real.and_then(|r| r.d.as_ref()).unwrap_or(&centroid);
        let d_vertices: Vec<Matrix> =
            sets.d.iter().map(|d| Matrix::from_column_slice(d.len(), 1, d.as_slice())).collect();
        let theta = ConvexPath::new(sets.theta.clone(), theta_p.build(sets.theta.len(), horizon)?)?;
        let d = ConvexPath::new(d_vertices, d_p.build(sets.d.len(), horizon)?)?;
        let omega = match real.and_then(|r| r.omega_weights.as_ref()) {
            None => vec![sets.omega_centroid(); n_modes],
            Some(ws) => {
                if ws.len() != n_modes {
                    return Err(Error::Config(format!("omega_weights needs one row per mode ({n_modes})")));
                }
                ws.iter()
                    .map(|w| {
                        if w.len() != sets.omega.len() || w.iter().any(|v| *v < 0.0) {
                            return Err(Error::Config("omega_weights rows need one nonnegative weight per vertex".into()));
                        }
                        let s: f64 = w.iter().sum();
                        if s <= 0.0 {
                            return Err(Error::Config("omega_weights row sums to zero".into()));
                        }
                        let mut om = Matrix::zeros(sets.omega[0].nrows(), sets.omega[0].ncols());
                        for (v, wk) in sets.omega.iter().zip(w) {
                            om += v * (wk / s);
                        }
                        Ok(om)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(UncertaintyTrajectory { theta, d, omega })
    }

    pub fn signal(&self) -> SwitchingSignal {
        match &self.switching {
            Some(s) => SwitchingSignal { events: s.events.clone() },
            None => SwitchingSignal::constant(0),
        }
    }

    /// Builds the linear scenario; errors for aircraft configs.
    pub fn linear_scenario(&self) -> Result<LinearScenario> {
        let modes = self.modes()?;
        let (n, m) = (modes.n(), modes.m());
        let sets = self.sets(n, m)?;
        let filter = self.filter(m)?;
        let schedule = self.schedule()?;
        let plant = self.plant.as_ref().expect("checked by modes()");
        let x0 = match &plant.x0 {
            Some(v) if v.len() == n => Vector::from_column_slice(v),
            Some(_) => return Err(Error::Config(format!("plant.x0 needs {n} entries"))),
            None => Vector::zeros(n),
        };
        let reference = match &self.reference {
            Some(r) => r.build()?,
            None => ReferenceSignal::Constant(Vector::zeros(modes.get(0).k.ncols())),
        };
        let mut scn = LinearScenario::new(modes, sets, filter, self.signal(), reference, x0, schedule)
            .map_err(|e| Error::Config(e.to_string()))?;
        scn.trajectory = self.trajectory(&scn.sets, scn.modes.len())?;
        scn.reinit = self.reinit(n)?;
        scn.noise_sigma = self.controller.measurement_noise;
        scn.seed = self.seed;
        scn.envelope = self.schedule.envelope.unwrap_or(ENVELOPE_NORM);
        scn.check().map_err(|e| Error::Config(e.to_string()))?;
        Ok(scn)
    }

    /// Builds the flight scenario; errors for linear-plant configs.
    pub fn flight_scenario(&self) -> Result<crate::l2f::FlightScenario> {
        let a = self.aircraft.as_ref().ok_or_else(|| Error::Config("missing [aircraft]".into()))?;
        let l1 = crate::l2f::L1Inner { filter: self.filter(3)?, reinit: self.reinit(3)? };
        a.scenario(self.schedule()?, l1, self.seed)
    }

    pub fn sweep_options(&self, seed: u64) -> SweepOptions {
        SweepOptions { n_runs: self.sweep.n_runs, seed, tau: self.sweep.tau, spread: self.sweep.spread }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "scalar"
[plant]
modes = [{ a = [[-1.0]], b = [[1.0]], c = [[1.0]], k = [[1.0]] }]
[controller]
ts = 0.01
filter = { gain = 10.0 }
[schedule]
horizon = 1.0
"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = parse(MINIMAL).unwrap();
        let scn = cfg.config.linear_scenario().unwrap();
        assert_eq!(scn.modes.len(), 1);
        assert_eq!(scn.schedule.h, 0.001);
        assert_eq!(cfg.hash.len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("horizon = 1.0", "horizon = 1.0\nhorizn = 2.0");
        assert!(matches!(parse(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace("filter = { gain = 10.0 }", "filter = { gain = 10.0, pole = 3 }");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn profile_tag_rejects_extra_fields() {
        let text = format!(
            "{MINIMAL}\n[uncertainty]\ntheta = [[[-0.1]], [[0.1]]]\nd = [[0.0]]\nomega = [[[1.0]]]\n[uncertainty.realization]\ntheta = {{ kind = \"vertex\", index = 1, weight = 2 }}\n"
        );
        assert!(parse(&text).is_err());
    }

    #[test]
    fn misaligned_switch_is_config_error() {
        let text = format!("{MINIMAL}\n[switching]\nevents = [[0.0, 0], [0.3333, 0]]\n");
        assert!(matches!(parse(&text), Err(Error::Config(_))));
    }
}
