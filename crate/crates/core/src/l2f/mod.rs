//! Learn-to-fly layer: aircraft truth model, NDI baseline with a gain
//! schedule from an online-learned model, test inputs and destabilization.

pub mod aircraft;
pub mod destab;
pub mod flight;
pub mod ndi;
pub mod publish;
pub mod pti;
pub mod rls;

use serde::{Deserialize, Serialize};

pub use aircraft::{AeroModel, AircraftParams, AircraftState};
pub use destab::Destabilization;
pub use flight::{rate_loop_certificate, run_flight, FlightOutput, FlightScenario, Guidance, L1Inner, Learning, RateLoopCertificate, StepSchedule};
pub use ndi::NdiGains;
pub use publish::PublishGate;
pub use pti::PtiConfig;
pub use rls::LearnedModel;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sim::Schedule;

/// Overrides on the synthetic vehicle.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleCfg {
    pub mass: Option<f64>,
    /// Principal moments of inertia `[Ixx, Iyy, Izz]`.
    pub inertia: Option<[f64; 3]>,
    pub wing_area: Option<f64>,
    pub span: Option<f64>,
    pub chord: Option<f64>,
    pub rho: Option<f64>,
    pub aero: Option<AeroModel>,
    pub cm_left_elevator: Option<f64>,
    pub cl_inboard_flap: Option<f64>,
    pub surface_limit: Option<f64>,
    pub lift_slope: Option<f64>,
}

impl VehicleCfg {
    pub fn params(&self) -> AircraftParams {
        let mut p = AircraftParams::synthetic();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(mass, wing_area, span, chord, rho, aero, cm_left_elevator, cl_inboard_flap, surface_limit, lift_slope);
        if let Some(d) = self.inertia {
            p.inertia = Matrix::from_diagonal(&Vector::from_column_slice(&d));
        }
        p
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// Bare-airframe coefficients; stale once a destabilization is active.
    #[default]
    Airframe,
    /// Coefficients including the hidden feedback.
    Effective,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerCfg {
    pub enabled: bool,
    pub prior: PriorKind,
    /// Multiplies every prior coefficient.
    pub prior_scale: f64,
    pub p0: f64,
    pub forgetting: f64,
    /// Sampling rate (Hz).
    pub rate: f64,
}

impl Default for LearnerCfg {
    fn default() -> Self {
        Self { enabled: true, prior: PriorKind::Airframe, prior_scale: 1.0, p0: 1e4, forgetting: 1.0, rate: 50.0 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PublishCfg {
    /// Publish rate (Hz).
    pub rate: f64,
    pub threshold: f64,
    pub trust: f64,
    pub zeta: f64,
    pub k_chi: f64,
    pub omega_floor: f64,
    /// Dwell time (s); omitted means the certified value.
    pub tau_d: Option<f64>,
}

impl Default for PublishCfg {
    fn default() -> Self {
        let g = PublishGate::default();
        Self {
            rate: 1.0 / g.interval,
            threshold: g.threshold,
            trust: g.trust,
            zeta: g.zeta,
            k_chi: g.k_chi,
            omega_floor: g.omega_floor,
            tau_d: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DestabCfg {
    #[default]
    None,
    /// α feedback to the left elevator sized for a static margin (fraction of chord).
    Pitch { static_margin: f64 },
    /// Roll-rate feedback to the inboard flap; the default gain neutralizes roll damping.
    Roll { gain: Option<f64> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuidanceCfg {
    /// `[t, value]` steps in radians; empty lists hold the initial attitude.
    Attitude {
        #[serde(default)]
        phi: Vec<(f64, f64)>,
        #[serde(default)]
        theta: Vec<(f64, f64)>,
        #[serde(default)]
        beta: Vec<(f64, f64)>,
    },
    Path {
        #[serde(default)]
        chi: Vec<(f64, f64)>,
        #[serde(default)]
        gamma: Vec<(f64, f64)>,
    },
}

impl Default for GuidanceCfg {
    fn default() -> Self {
        GuidanceCfg::Attitude { phi: vec![], theta: vec![], beta: vec![] }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AircraftSection {
    #[serde(default)]
    pub vehicle: VehicleCfg,
    #[serde(default = "default_airspeed")]
    pub airspeed: f64,
    /// Use the L1 rate loop; otherwise the NDI baseline alone.
    #[serde(default = "yes")]
    pub l1: bool,
    /// Control-law rate (Hz).
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    #[serde(default)]
    pub learner: LearnerCfg,
    #[serde(default)]
    pub publish: PublishCfg,
    #[serde(default)]
    pub destabilization: DestabCfg,
    pub pti: Option<PtiConfig>,
    #[serde(default)]
    pub guidance: GuidanceCfg,
}

fn default_airspeed() -> f64 {
    20.0
}

fn yes() -> bool {
    true
}

fn default_control_rate() -> f64 {
    50.0
}

fn period(rate: f64, what: &str) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Config(format!("{what} must be positive")));
    }
    Ok(1.0 / rate)
}

impl AircraftSection {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.params().validate()?;
        if !(self.airspeed > 0.0) {
            return Err(Error::Config("aircraft.airspeed must be positive".into()));
        }
        if let Some(p) = &self.pti {
            pti::Multisine::new(p)?;
        }
        period(self.control_rate, "aircraft.control_rate")?;
        period(self.learner.rate, "aircraft.learner.rate")?;
        period(self.publish.rate, "aircraft.publish.rate")?;
        Ok(())
    }

    /// Builds the flight scenario on a schedule; `l1` carries the rate-loop
    /// filter and re-initialization when the rate loop is enabled.
    pub fn scenario(&self, schedule: Schedule, l1: L1Inner, seed: u64) -> Result<FlightScenario> {
        self.validate()?;
        let params = self.vehicle.params();
        let v = self.airspeed;
        let destab = match self.destabilization {
            DestabCfg::None => Destabilization::None,
            DestabCfg::Pitch { static_margin } => destab::pitch_for_margin(&params, static_margin),
            DestabCfg::Roll { gain: Some(gain) } => Destabilization::Roll { gain },
            DestabCfg::Roll { gain: None } => destab::roll_neutral(&params, v),
        };
        let mut prior = match self.learner.prior {
            PriorKind::Airframe => params.aero,
            PriorKind::Effective => destab::effective_model(&params, &destab, v),
        };
        for k in 0..3 {
            for c in prior.axis_mut(k).iter_mut() {
                *c *= self.learner.prior_scale;
            }
        }
        let alpha0 = destab::trim_alpha(&params);
        let initial = AircraftState { v, alpha: alpha0, theta: alpha0, ..Default::default() };
        let guidance = match &self.guidance {
            GuidanceCfg::Attitude { phi, theta, beta } => Guidance::Attitude {
                phi: StepSchedule(phi.clone()),
                theta: StepSchedule(theta.clone()),
                beta: StepSchedule(beta.clone()),
            },
            GuidanceCfg::Path { chi, gamma } => Guidance::Path { chi: StepSchedule(chi.clone()), gamma: StepSchedule(gamma.clone()) },
        };
        let p = &self.publish;
        let gate = PublishGate {
            interval: period(p.rate, "aircraft.publish.rate")?,
            threshold: p.threshold,
            trust: p.trust,
            zeta: p.zeta,
            k_chi: p.k_chi,
            omega_floor: p.omega_floor,
        };
        let learning = if self.learner.enabled {
            Some(Learning {
                p0: self.learner.p0,
                forgetting: self.learner.forgetting,
                dt: period(self.learner.rate, "aircraft.learner.rate")?,
                tau_d: p.tau_d,
            })
        } else {
            None
        };
        let scn = FlightScenario {
            params,
            initial,
            destab,
            prior,
            gate,
            guidance,
            pti: self.pti.as_ref().map(pti::Multisine::new).transpose()?,
            control_dt: period(self.control_rate, "aircraft.control_rate")?,
            l1: if self.l1 { Some(l1) } else { None },
            learning,
            schedule,
            seed,
        };
        scn.check()?;
        Ok(scn)
    }
}
