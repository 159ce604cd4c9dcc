//! Closed-loop flight co-simulation: truth model, NDI baseline, optional L1
//! rate loop, online learner and the publish bridge on one stepped clock.

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::aircraft::{
    aircraft_deriv, control_effectiveness, gyroscopic, kinematics, model_moments, regressors, true_moments, AeroModel,
    AircraftParams, AircraftState, STATE_DIM,
};
use super::destab::{destabilize_feedback, effective_model, Destabilization};
use super::ndi::{gains_from_model, moment_for_accel, ndi_middle, ndi_outer, NdiGains};
use super::publish::{model_publish, PublishGate, PublishOutcome};
use super::pti::Multisine;
use super::rls::LearnedModel;
use crate::certificate::lyapunov::{dwell_time, find_mode_lyapunov};
use crate::controller::{adapt_update, on_switch, AdaptationData, FilterRealization, ReinitPolicy};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{Mode, ModeSet};
use crate::sim::{rk4_step, Abort, EventKind, Schedule, Trace, TraceEvent};

/// Piecewise-constant command: `(t, value)` pairs, each holding from `t` on.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepSchedule(pub Vec<(f64, f64)>);

impl StepSchedule {
    pub fn at(&self, t: f64, default: f64) -> f64 {
        self.0.iter().take_while(|(tk, _)| *tk <= t).last().map_or(default, |(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Guidance {
    /// Direct bank, pitch and sideslip commands.
    Attitude { phi: StepSchedule, theta: StepSchedule, beta: StepSchedule },
    /// Ground track and flight path commands through the outer loop.
    Path { chi: StepSchedule, gamma: StepSchedule },
}

#[derive(Debug, Clone)]
pub struct L1Inner {
    pub filter: FilterRealization,
    pub reinit: ReinitPolicy,
}

#[derive(Debug, Clone)]
pub struct Learning {
    pub p0: f64,
    pub forgetting: f64,
    /// Sampling period (s).
    pub dt: f64,
    /// `None` selects the dwell time certified for the prior and effective gains.
    pub tau_d: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FlightScenario {
    pub params: AircraftParams,
    pub initial: AircraftState,
    pub destab: Destabilization,
    /// Model the controller starts from.
    pub prior: AeroModel,
    pub gate: PublishGate,
    pub guidance: Guidance,
    pub pti: Option<Multisine>,
    /// Control-law update period (s).
    pub control_dt: f64,
    pub l1: Option<L1Inner>,
    /// `None` keeps the prior for the whole run.
    pub learning: Option<Learning>,
    pub schedule: Schedule,
    pub seed: u64,
}

impl FlightScenario {
    /// The stale-model comparison run: same vehicle and commands, no L1 and no learning.
    pub fn baseline(&self) -> Self {
        Self { l1: None, learning: None, ..self.clone() }
    }

    pub fn check(&self) -> Result<()> {
        self.params.validate()?;
        if let Some(v) = self.initial.envelope_violation() {
            return Err(Error::Config(format!("initial state: {v}")));
        }
        let sch = &self.schedule;
        sch.steps_for(self.control_dt).map_err(|e| Error::Config(format!("control period: {e}")))?;
        if let Some(l) = &self.learning {
            sch.steps_for(l.dt).map_err(|e| Error::Config(format!("learner period: {e}")))?;
            if !crate::model::is_grid_multiple(self.gate.interval, sch.ts) {
                return Err(Error::Config("publish interval must be a multiple of Ts".into()));
            }
            if !(self.gate.interval > 0.0) {
                return Err(Error::Config("publish interval must be positive".into()));
            }
        }
        if let Some(l1) = &self.l1 {
            if l1.filter.m() != 3 {
                return Err(Error::Config("the rate loop needs a 3-channel filter".into()));
            }
        }
        Ok(())
    }

    pub fn qbar(&self) -> f64 {
        self.params.qbar(self.initial.v)
    }

    pub fn prior_gains(&self) -> Result<NdiGains> {
        let g = &self.gate;
        gains_from_model(&self.prior, self.qbar(), &self.params, g.zeta, g.k_chi, g.omega_floor)
    }

    pub fn effective_gains(&self) -> Result<NdiGains> {
        let g = &self.gate;
        let eff = effective_model(&self.params, &self.destab, self.initial.v);
        gains_from_model(&eff, self.qbar(), &self.params, g.zeta, g.k_chi, g.omega_floor)
    }
}

/// Rate-loop mode `(A, B, C, k) = (-K_ω, I, I, K_ω)`.
pub fn rate_mode(g: &NdiGains) -> Mode {
    let k = g.k_omega_matrix();
    Mode::new(-&k, Matrix::identity(3, 3), Matrix::identity(3, 3), k).expect("3x3 blocks")
}

/// Switching certificate of the linearized rate loop.
#[derive(Debug, Clone, Serialize)]
pub struct RateLoopCertificate {
    pub k_omega: Vec<[f64; 3]>,
    pub lambda: f64,
    pub mu: f64,
    pub a_star: f64,
    pub tau_d: f64,
    pub publish_interval: f64,
    /// The certified dwell time is longer than the publish interval.
    pub dwell_exceeds_cadence: bool,
}

/// Certificate for the prior-gain and effective-gain rate modes.
pub fn rate_loop_certificate(scn: &FlightScenario, a_star: f64) -> Result<RateLoopCertificate> {
    let gains = [scn.prior_gains()?, scn.effective_gains()?];
    let modes = ModeSet::new(gains.iter().map(rate_mode).collect())?;
    let cert = find_mode_lyapunov(&modes, None)?;
    let tau_d = dwell_time(cert.lambda, cert.mu, a_star)?;
    Ok(RateLoopCertificate {
        k_omega: gains.iter().map(|g| g.k_omega).collect(),
        lambda: cert.lambda,
        mu: cert.mu,
        a_star,
        tau_d,
        publish_interval: scn.gate.interval,
        dwell_exceeds_cadence: tau_d > scn.gate.interval,
    })
}

pub fn anchor_dwell_time(scn: &FlightScenario, a_star: f64) -> Result<f64> {
    Ok(rate_loop_certificate(scn, a_star)?.tau_d)
}

#[derive(Debug, Clone, Serialize)]
pub struct GainRecord {
    pub t: f64,
    pub gains: NdiGains,
    pub rel_change: f64,
}

#[derive(Debug, Clone)]
pub struct FlightOutput {
    pub trace: Trace,
    pub abort: Option<Abort>,
    pub gains: Vec<GainRecord>,
    pub tau_d: f64,
    /// The certified dwell time is longer than the publish interval.
    pub dwell_exceeds_cadence: bool,
    pub learned: Option<LearnedModel>,
    pub publishes: usize,
    pub gamma_clamped: usize,
}

const STATE_COLUMNS: [&str; STATE_DIM] = ["V", "alpha", "beta", "p", "q", "r", "phi", "theta", "chi", "gamma"];

fn columns() -> Vec<String> {
    let mut c: Vec<String> = ["t", "mode", "event"].iter().map(|s| s.to_string()).collect();
    c.extend(STATE_COLUMNS.iter().map(|s| s.to_string()));
    for s in [
        "phi_cmd", "theta_cmd", "beta_cmd", "p_cmd", "q_cmd", "r_cmd", "da", "de", "dr", "pti_da", "pti_de", "pti_dr",
        "left_elevator", "inboard_flap", "eta1_p", "eta1_q", "eta1_r", "xhat_p", "xhat_q", "xhat_r", "u_p", "u_q", "u_r",
        "cm_alpha_hat", "cl_da_hat", "cn_beta_hat", "K_p", "K_q", "K_r",
    ] {
        c.push(s.to_string());
    }
    c
}

/// Layout offsets of the integrated vector `[aircraft | x̂ | u_int | x_f]`.
const XHAT: usize = STATE_DIM;
const UINT: usize = STATE_DIM + 3;
const XF: usize = STATE_DIM + 6;

struct Held {
    surfaces: [f64; 3],
    pti: [f64; 3],
    /// Input seen by the rate-loop predictor.
    v: Vector,
    cmd: [f64; 6],
}

pub fn run_flight(scn: &FlightScenario) -> Result<FlightOutput> {
    scn.check()?;
    let sch = &scn.schedule;
    let params = &scn.params;
    let nf = scn.l1.as_ref().map_or(0, |l| l.filter.nf());
    let per_ts = sch.steps_for(sch.ts)?;
    let per_ctrl = sch.steps_for(scn.control_dt)?;
    let per_rec = sch.steps_for(sch.record_dt)?;
    let per_learn = match &scn.learning {
        Some(l) => Some((sch.steps_for(l.dt)?, sch.steps_for(scn.gate.interval)?)),
        None => None,
    };
    let total = sch.total_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let qbar = scn.qbar();

    let mut gains = scn.prior_gains()?;
    let mut mode = rate_mode(&gains);
    let mut adapt = AdaptationData::new(&mode, sch.ts)?;
    let tau_d = match &scn.learning {
        Some(Learning { tau_d: Some(t), .. }) => *t,
        _ => anchor_dwell_time(scn, crate::certificate::CertifyOptions::default().a_star)?,
    };
    let dwell_exceeds_cadence = tau_d > scn.gate.interval;
    if dwell_exceeds_cadence && scn.learning.is_some() {
        log::warn!("certified dwell time {tau_d:.3} s exceeds the {} s publish interval", scn.gate.interval);
    }
    let mut learner = match &scn.learning {
        Some(l) => Some(LearnedModel::new(scn.prior, l.p0, l.forgetting)?),
        None => None,
    };
    let mut control_model = scn.prior;
    let mut alloc = control_effectiveness(&control_model, params, scn.initial.v)
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("prior control effectiveness is singular".into()))?;

    let mut y = Vector::zeros(XF + nf);
    y.rows_mut(0, STATE_DIM).copy_from_slice(&scn.initial.to_array());
    y.rows_mut(XHAT, 3).copy_from(&scn.initial.omega());
    let mut eta1 = Vector::zeros(3);
    let mut held = Held { surfaces: [0.0; 3], pti: [0.0; 3], v: Vector::zeros(3), cmd: [0.0; 6] };

    let mut trace = Trace::new(columns());
    let mut records = vec![GainRecord { t: 0.0, gains, rel_change: 0.0 }];
    let mut last_switch = 0.0;
    let mut mode_idx = 0usize;
    let mut pending = 0usize;
    let mut publishes = 0usize;
    let mut gamma_clamped = 0usize;
    let mut abort = None;

    for i in 0..=total {
        let t = sch.time(i);
        let s = AircraftState::from_slice(&y.as_slice()[..STATE_DIM]);
        if let Some(reason) = s.envelope_violation() {
            log::warn!("flight aborted at t={t:.3}: {reason}");
            trace.events.push(TraceEvent { t, kind: EventKind::Abort, detail: reason.clone() });
            abort = Some(Abort { t, reason });
            break;
        }
        let omega = s.omega();

        if let (Some((_, per_pub)), Some(lm)) = (per_learn, learner.as_mut()) {
            if i > 0 && i % per_pub == 0 {
                let out = model_publish(lm, t, &gains, last_switch, tau_d, sch.ts, qbar, params, &scn.gate)?;
                if !matches!(out, PublishOutcome::Untrusted) {
                    if let Some(inv) = control_effectiveness(&lm.model, params, s.v).lu().try_inverse() {
                        control_model = lm.model;
                        alloc = inv;
                        lm.last_publish = Some(t);
                        publishes += 1;
                        trace.events.push(TraceEvent { t, kind: EventKind::Publish, detail: String::new() });
                        pending += 1;
                    }
                }
                if let PublishOutcome::Switch { gains: g, rel_change } = out {
                    gains = g;
                    mode = rate_mode(&gains);
                    adapt = AdaptationData::new(&mode, sch.ts)?;
                    mode_idx += 1;
                    last_switch = t;
                    records.push(GainRecord { t, gains, rel_change });
                    let mut detail = format!("mode {} -> {mode_idx}, gain change {rel_change:.4}", mode_idx - 1);
                    if let Some(l1) = &scn.l1 {
                        let mut st = crate::controller::L1State::new(&omega, 3, 0);
                        if let Some(err) = on_switch(&mut st, &omega, &l1.reinit, &mut rng) {
                            y.rows_mut(XHAT, 3).copy_from(&st.xhat);
                            if err.norm() > 0.0 {
                                detail += &format!(", reinit error {:.3e}", err.norm());
                            }
                        }
                    }
                    trace.events.push(TraceEvent { t, kind: EventKind::Switch, detail });
                    pending += 1;
                }
            }
        }

        if scn.l1.is_some() && i % per_ts == 0 {
            let xtilde = y.rows(XHAT, 3) - &omega;
            eta1 = adapt_update(&adapt, &xtilde)?.0;
        }

        if i % per_ctrl == 0 {
            let (phi_c, theta_c, beta_c) = match &scn.guidance {
                Guidance::Attitude { phi, theta, beta } => {
                    (phi.at(t, scn.initial.phi), theta.at(t, scn.initial.theta), beta.at(t, 0.0))
                }
                Guidance::Path { chi, gamma } => {
                    let c = ndi_outer(chi.at(t, scn.initial.chi), gamma.at(t, scn.initial.gamma), &s, gains.k_chi, params.g);
                    if c.gamma_clamped {
                        gamma_clamped += 1;
                    }
                    (c.phi_cmd, c.theta_cmd, 0.0)
                }
            };
            let w_cmd = ndi_middle(phi_c, theta_c, beta_c, &s, &gains, params.g)
                .map_err(|_| Error::Envelope { t, reason: "bank angle outside the inversion range".into() })?;
            let w_cmd_v = Vector::from_column_slice(&w_cmd);
            let k = gains.k_omega_matrix();
            let v = if scn.l1.is_some() { -y.rows(UINT, 3).into_owned() } else { &k * &w_cmd_v };
            let m_hat = model_moments(&control_model, &s, params, &[0.0; 3]);
            let m_cmd = moment_for_accel(&(-&k * &omega + &v), &omega, &m_hat, &params.inertia);
            let alloc_d = &alloc * m_cmd;
            let pti = scn.pti.as_ref().map_or([0.0; 3], |p| p.eval(t));
            let lim = params.surface_limit;
            held.surfaces = std::array::from_fn(|j| (alloc_d[j] + pti[j]).clamp(-lim, lim));
            held.pti = pti;
            held.v = v;
            held.cmd = [phi_c, theta_c, beta_c, w_cmd[0], w_cmd[1], w_cmd[2]];
        }

        if let (Some((per_sample, _)), Some(lm)) = (per_learn, learner.as_mut()) {
            if i % per_sample == 0 {
                let hidden = destabilize_feedback(&s, &scn.destab);
                let m = true_moments(&s, params, &held.surfaces, &hidden);
                let wdot = aircraft_deriv(&s, &m, params)?.omega();
                let scale = params.moment_scale(s.v);
                let total_m = &params.inertia * wdot + gyroscopic(&omega, &params.inertia);
                let obs = [total_m[0] / scale[0], total_m[1] / scale[1], total_m[2] / scale[2]];
                lm.update(&regressors(&s, params, &held.surfaces), &obs);
            }
        }

        if i % per_rec == 0 || i == total {
            let hidden = destabilize_feedback(&s, &scn.destab);
            let key = learner.as_ref().map_or(&control_model, |l| &l.model);
            let mut row = Vec::with_capacity(trace.columns.len());
            row.extend([t, mode_idx as f64, pending as f64]);
            row.extend(s.to_array());
            row.extend(held.cmd);
            row.extend(held.surfaces);
            row.extend(held.pti);
            row.extend([hidden.left_elevator, hidden.inboard_flap]);
            row.extend(eta1.iter());
            row.extend(y.rows(XHAT, 3).iter());
            row.extend(held.v.iter());
            row.extend([key.c_m_alpha(), key.c_l_da(), key.c_n_beta()]);
            row.extend(gains.k_omega);
            trace.push(row);
            pending = 0;
        }
        if i == total {
            break;
        }

        let inertia_chol = params.inertia.clone().cholesky().ok_or_else(|| Error::NotSpd("inertia".into()))?;
        let l1 = scn.l1.as_ref();
        let k_r = gains.k_omega_matrix() * Vector::from_column_slice(&held.cmd[3..6]);
        y = rk4_step(&y, sch.h, |_, v| {
            let s = AircraftState::from_slice(&v.as_slice()[..STATE_DIM]);
            let w = s.omega();
            let hidden = destabilize_feedback(&s, &scn.destab);
            let m = true_moments(&s, params, &held.surfaces, &hidden);
            let mut d = Vector::zeros(v.len());
            let wdot = inertia_chol.solve(&(m - gyroscopic(&w, &params.inertia)));
            d.rows_mut(0, STATE_DIM).copy_from_slice(&kinematics(&s, &wdot, params.g).to_array());
            if let Some(l1) = l1 {
                let xhat = v.rows(XHAT, 3);
                d.rows_mut(XHAT, 3).copy_from(&(&mode.a * xhat + &held.v + &eta1));
                let u = -v.rows(UINT, 3);
                let mu = &u + &eta1 - &k_r;
                let mut du = &l1.filter.df * &mu;
                if nf > 0 {
                    let xf = v.rows(XF, nf);
                    du += &l1.filter.cf * xf;
                    d.rows_mut(XF, nf).copy_from(&(&l1.filter.af * xf + &l1.filter.bf * &mu));
                }
                d.rows_mut(UINT, 3).copy_from(&du);
            }
            d
        });
    }

    Ok(FlightOutput {
        trace,
        abort,
        gains: records,
        tau_d,
        dwell_exceeds_cadence,
        learned: learner,
        publishes,
        gamma_clamped,
    })
}

/// Largest `|a - b|` over rows with `t0 <= t <= t1`.
pub fn window_max_abs_diff(trace: &Trace, a: &str, b: &str, t0: f64, t1: f64) -> Option<f64> {
    let (ia, ib) = (trace.column_index(a)?, trace.column_index(b)?);
    trace.rows.iter().filter(|r| r[0] >= t0 && r[0] <= t1).map(|r| (r[ia] - r[ib]).abs()).reduce(f64::max)
}

/// RMS of a column over rows with `t0 <= t <= t1`.
pub fn window_rms(trace: &Trace, col: &str, t0: f64, t1: f64) -> Option<f64> {
    let i = trace.column_index(col)?;
    let v: Vec<f64> = trace.rows.iter().filter(|r| r[0] >= t0 && r[0] <= t1).map(|r| r[i]).collect();
    if v.is_empty() {
        return None;
    }
    Some((v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt())
}

/// Natural frequency and damping of a sampled step response.
///
/// Fits `y[k+2] = a1 y[k+1] + a2 y[k] + c` by least squares and maps the
/// discrete poles back through `s = ln z / dt`.
pub fn identify_second_order(y: &[f64], dt: f64) -> Result<(f64, f64)> {
    if y.len() < 8 {
        return Err(Error::InvalidArgument("need at least 8 samples".into()));
    }
    let n = y.len() - 2;
    let a = Matrix::from_fn(n, 3, |k, j| match j {
        0 => y[k + 1],
        1 => y[k],
        _ => 1.0,
    });
    let b = Vector::from_fn(n, |k, _| y[k + 2]);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::RankDeficient(format!("response fit: {e}")))?;
    let (a1, a2) = (sol[0], sol[1]);
    let disc = Complex::new(a1 * a1 + 4.0 * a2, 0.0).sqrt();
    let z = (Complex::new(a1, 0.0) + disc) * 0.5;
    let s = z.ln() / dt;
    let wn = s.norm();
    if !(wn > 0.0) {
        return Err(Error::RankDeficient("response has no oscillatory or decaying mode".into()));
    }
    Ok((wn, -s.re / wn))
}
