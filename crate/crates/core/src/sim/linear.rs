//! Linear switched plant with the L1 loop, the reference system and the ideal system.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::trace::{indexed, EventKind, Trace, TraceEvent};
use super::{check_envelope, rk4_step, Abort, Schedule, ENVELOPE_NORM};
use crate::certificate::{certificate_core, certify, CertificateReport, CertifyInput, CertifyOptions, Observed, TsEvaluation};
use crate::controller::{
    adapt_update, adaptation_table, control_deriv, filter_deriv, on_switch, predictor_deriv_unchecked,
    AdaptationData, FilterRealization, L1State, ReinitPolicy,
};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{plant_deriv_unchecked, Mode, ModeSet, SwitchingSignal, UncertaintySets};
use crate::reference::{ideal_input, reference_initial};
use crate::trajectory::{ConvexPath, ReferenceSignal, UncertaintyTrajectory, WeightProfile};

#[derive(Debug, Clone)]
pub struct LinearScenario {
    pub modes: ModeSet,
    pub sets: UncertaintySets,
    pub filter: FilterRealization,
    pub reinit: ReinitPolicy,
    pub signal: SwitchingSignal,
    pub trajectory: UncertaintyTrajectory,
    pub reference: ReferenceSignal,
    pub x0: Vector,
    pub schedule: Schedule,
    /// Standard deviation of the state measurement noise applied at sample instants.
    pub noise_sigma: f64,
    pub seed: u64,
    pub envelope: f64,
    /// Integrate the homogeneous-plus-estimate part of x̃ between samples.
    pub track_annihilation: bool,
}

impl LinearScenario {
    pub fn new(
        modes: ModeSet,
        sets: UncertaintySets,
        filter: FilterRealization,
        signal: SwitchingSignal,
        reference: ReferenceSignal,
        x0: Vector,
        schedule: Schedule,
    ) -> Result<Self> {
        let (n, m) = (modes.n(), modes.m());
        let trajectory = UncertaintyTrajectory::zero(n, m, modes.len());
        let s = Self {
            modes,
            sets,
            filter,
            reinit: ReinitPolicy::Measured,
            signal,
            trajectory,
            reference,
            x0,
            schedule,
            noise_sigma: 0.0,
            seed: 0,
            envelope: ENVELOPE_NORM,
            track_annihilation: false,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.modes.n(), self.modes.m());
        self.sets.check_dims(n, m)?;
        if self.x0.len() != n {
            return Err(dim_err("x0 length differs from the state dimension"));
        }
        if self.filter.m() != m {
            return Err(dim_err("filter width differs from the input dimension"));
        }
        if self.reference.dim() != self.modes.get(0).k.ncols() {
            return Err(dim_err("reference dimension differs from the columns of k"));
        }
        if self.trajectory.omega.len() != self.modes.len() {
            return Err(dim_err("one omega per mode is required"));
        }
        if self.trajectory.theta_at(0.0).shape() != (n, m) || self.trajectory.d_at(0.0).len() != m {
            return Err(dim_err("uncertainty trajectory sizes"));
        }
        let steps = self.schedule.steps_for(self.schedule.ts)?;
        for &(t, mode) in &self.signal.events {
            if mode >= self.modes.len() {
                return Err(Error::Config(format!("switch to unknown mode {mode}")));
            }
            match self.schedule.index_of(t) {
                Some(i) if i % steps == 0 => {}
                _ => return Err(Error::Config(format!("switch at t={t} is not on the Ts grid"))),
            }
        }
        if let ReinitPolicy::Offset(v) = &self.reinit {
            if v.len() != n {
                return Err(dim_err("re-initialization offset length"));
            }
        }
        Ok(())
    }

    fn max_r(&self) -> f64 {
        self.reference.max_norm()
    }
}

/// `‖x̃‖` at one sample instant, before and after a re-initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub xtilde_pre: f64,
    pub xtilde_post: f64,
    pub switched: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub observed: Observed,
    pub samples: Vec<SampleRecord>,
    /// Largest `‖ζ1‖` at the end of a sampling interval, when tracked.
    pub annihilation_residual: Option<f64>,
    pub abort: Option<Abort>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    m: usize,
    nf: usize,
    x: usize,
    xhat: usize,
    uint: usize,
    xf: usize,
    xbar: usize,
    xid: usize,
    zeta: usize,
    len: usize,
}

impl Layout {
    fn new(n: usize, m: usize, nf: usize, zeta: bool) -> Self {
        let x = 0;
        let xhat = x + n;
        let uint = xhat + n;
        let xf = uint + m;
        let xbar = xf + nf;
        let xid = xbar + n + nf + m;
        let zeta_off = xid + n;
        let len = zeta_off + if zeta { n } else { 0 };
        Self { n, m, nf, x, xhat, uint, xf, xbar, xid, zeta: zeta_off, len }
    }

    fn get(&self, y: &Vector, off: usize, len: usize) -> Vector {
        y.rows(off, len).into_owned()
    }

    fn has_zeta(&self) -> bool {
        self.len > self.zeta
    }
}

struct Inputs {
    theta: Matrix,
    d: Vector,
    r: Vector,
}

impl Inputs {
    fn at(scn: &LinearScenario, t: f64) -> Self {
        Self { theta: scn.trajectory.theta_at(t), d: scn.trajectory.d_at(t), r: scn.reference.at(t) }
    }
}

struct Active<'a> {
    mode: &'a Mode,
    data: &'a AdaptationData,
    omega: &'a Matrix,
}

fn deriv(lay: &Layout, filter: &FilterRealization, act: &Active, eta: (&Vector, &Vector), inp: &Inputs, y: &Vector) -> Vector {
    let (n, m, nf) = (lay.n, lay.m, lay.nf);
    let mode = act.mode;
    let x = lay.get(y, lay.x, n);
    let xhat = lay.get(y, lay.xhat, n);
    let u_int = lay.get(y, lay.uint, m);
    let x_f = lay.get(y, lay.xf, nf);
    let mut dy = Vector::zeros(lay.len);

    let (du, dxf, u) = control_deriv(filter, &mode.k, &u_int, &x_f, eta.0, &inp.r);
    let dx = plant_deriv_unchecked(mode, &x, &u, &inp.theta, &inp.d, act.omega);
    let dxhat = predictor_deriv_unchecked(mode, &act.data.bperp, &xhat, &u, eta.0, eta.1);
    dy.rows_mut(lay.x, n).copy_from(&dx);
    dy.rows_mut(lay.xhat, n).copy_from(&dxhat);
    dy.rows_mut(lay.uint, m).copy_from(&du);
    if nf > 0 {
        dy.rows_mut(lay.xf, nf).copy_from(&dxf);
    }

    // Reference system in loop form; identical to Ā x̄ + B̄ d + Ē r.
    let xr = lay.get(y, lay.xbar, n);
    let xfr = lay.get(y, lay.xbar + n, nf);
    let u_ref = -lay.get(y, lay.xbar + n + nf, m);
    let dxr = plant_deriv_unchecked(mode, &xr, &u_ref, &inp.theta, &inp.d, act.omega);
    let mu_ref = act.omega * &u_ref + inp.theta.tr_mul(&xr) + &inp.d - &mode.k * &inp.r;
    let (dxi, dxfr) = filter_deriv(filter, &xfr, &mu_ref);
    dy.rows_mut(lay.xbar, n).copy_from(&dxr);
    if nf > 0 {
        dy.rows_mut(lay.xbar + n, nf).copy_from(&dxfr);
    }
    dy.rows_mut(lay.xbar + n + nf, m).copy_from(&dxi);

    let xid = lay.get(y, lay.xid, n);
    let dxid = &mode.a * &xid + &mode.b * (&mode.k * &inp.r);
    dy.rows_mut(lay.xid, n).copy_from(&dxid);

    if lay.has_zeta() {
        let z = lay.get(y, lay.zeta, n);
        let dz = predictor_deriv_unchecked(mode, &act.data.bperp, &z, &Vector::zeros(m), eta.0, eta.1);
        dy.rows_mut(lay.zeta, n).copy_from(&dz);
    }
    dy
}

fn columns(lay: &Layout, p: usize) -> Vec<String> {
    let (n, m) = (lay.n, lay.m);
    let mut c = vec!["t".to_string(), "mode".to_string(), "event".to_string()];
    c.extend(indexed("x", n));
    c.extend(indexed("xhat", n));
    c.extend(indexed("xtilde", n));
    c.extend(indexed("x_ref", n));
    c.extend(indexed("x_id", n));
    c.extend(indexed("u", m));
    c.extend(indexed("u_ref", m));
    c.extend(indexed("u_id", m));
    c.extend(indexed("eta1", m));
    c.extend(indexed("eta2", n - m));
    c.extend(indexed("r", p));
    for s in ["xtilde_norm", "x_norm", "u_norm", "e_norm", "eu_norm"] {
        c.push(s.to_string());
    }
    for s in ["sup_xtilde", "sup_x", "sup_u", "sup_e", "sup_eu"] {
        c.push(s.to_string());
    }
    c
}

/// Instantaneous `(‖x̃‖, ‖x‖, ‖u‖, ‖x_ref - x‖, ‖u_ref - u‖)`.
fn norms(lay: &Layout, y: &Vector) -> [f64; 5] {
    let (n, m, nf) = (lay.n, lay.m, lay.nf);
    let x = y.rows(lay.x, n);
    let xhat = y.rows(lay.xhat, n);
    let u = -y.rows(lay.uint, m);
    let xr = y.rows(lay.xbar, n);
    let u_ref = -y.rows(lay.xbar + n + nf, m);
    [(xhat - x).norm(), x.norm(), u.norm(), (xr - x).norm(), (u_ref - u).norm()]
}

#[allow(clippy::too_many_arguments)]
fn row(lay: &Layout, t: f64, mode_idx: usize, events: usize, mode: &Mode, y: &Vector, eta: (&Vector, &Vector), r: &Vector, sups: &[f64; 5]) -> Vec<f64> {
    let (n, m, nf) = (lay.n, lay.m, lay.nf);
    let mut out = Vec::with_capacity(8 * n + 8 * m + 13);
    out.push(t);
    out.push(mode_idx as f64);
    out.push(events as f64);
    let x = y.rows(lay.x, n);
    let xhat = y.rows(lay.xhat, n);
    out.extend(x.iter());
    out.extend(xhat.iter());
    out.extend((xhat - x).iter());
    out.extend(y.rows(lay.xbar, n).iter());
    out.extend(y.rows(lay.xid, n).iter());
    out.extend((-y.rows(lay.uint, m)).iter());
    out.extend((-y.rows(lay.xbar + n + nf, m)).iter());
    out.extend(ideal_input(mode, r).iter());
    out.extend(eta.0.iter());
    out.extend(eta.1.iter());
    out.extend(r.iter());
    out.extend(norms(lay, y));
    out.extend(sups);
    out
}

/// Integrates the closed loop over the schedule horizon.
///
/// At each sample instant the order is: switch and predictor
/// re-initialization, then the adaptive law with the (new) mode's data, then
/// trace output. Divergence stops the run and keeps the trace so far.
pub fn run_scenario(scn: &LinearScenario) -> Result<RunOutput> {
    scn.check()?;
    let sch = &scn.schedule;
    let (n, m, nf) = (scn.modes.n(), scn.modes.m(), scn.filter.nf());
    let lay = Layout::new(n, m, nf, scn.track_annihilation);
    let table = adaptation_table(&scn.modes, sch.ts)?;
    let per_ts = sch.steps_for(sch.ts)?;
    let per_rec = sch.steps_for(sch.record_dt)?;
    let total = sch.total_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);

    let mut switches: BTreeMap<usize, usize> = BTreeMap::new();
    for &(t, mode) in &scn.signal.events {
        // `check` guarantees grid alignment.
        switches.insert(sch.index_of(t).expect("aligned switch"), mode);
    }
    let mut mode_idx = switches.get(&0).copied().unwrap_or(0);

    let mut state = L1State::new(&scn.x0, m, nf);
    let mut y = Vector::zeros(lay.len);
    y.rows_mut(lay.x, n).copy_from(&scn.x0);
    y.rows_mut(lay.xhat, n).copy_from(&scn.x0);
    y.rows_mut(lay.xbar, n + nf + m).copy_from(&reference_initial(&scn.x0, nf, m));
    y.rows_mut(lay.xid, n).copy_from(&scn.x0);

    let mut trace = Trace::new(columns(&lay, scn.reference.dim()));
    let mut sups = [0.0f64; 5];
    let mut samples = Vec::new();
    let mut zeta_max: Option<f64> = if lay.has_zeta() { Some(0.0) } else { None };
    let mut pending_events = 0usize;
    let mut abort = None;

    let bump = |sups: &mut [f64; 5], y: &Vector| {
        for (s, v) in sups.iter_mut().zip(norms(&lay, y)) {
            *s = s.max(v);
        }
    };

    for i in 0..=total {
        let t = sch.time(i);
        if i % per_ts == 0 {
            let x = lay.get(&y, lay.x, n);
            let x_meas = if scn.noise_sigma > 0.0 {
                x.map(|v| v + scn.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            } else {
                x
            };
            let pre = (lay.get(&y, lay.xhat, n) - &x_meas).norm();
            if let Some(zm) = zeta_max.as_mut() {
                if i > 0 {
                    *zm = zm.max(lay.get(&y, lay.zeta, n).norm());
                }
            }
            let mut switched = false;
            if let Some(&next) = switches.get(&i) {
                if i > 0 && next != mode_idx {
                    trace.events.push(TraceEvent {
                        t,
                        kind: EventKind::Switch,
                        detail: format!("mode {mode_idx} -> {next}"),
                    });
                    pending_events += 1;
                    switched = true;
                }
                mode_idx = next;
                state.xhat = lay.get(&y, lay.xhat, n);
                if let Some(err) = on_switch(&mut state, &x_meas, &scn.reinit, &mut rng) {
                    y.rows_mut(lay.xhat, n).copy_from(&state.xhat);
                    if switched && err.norm() > 0.0 {
                        trace.events.last_mut().expect("switch event").detail +=
                            &format!(", reinit error {:.3e}", err.norm());
                    }
                }
            }
            let xtilde = lay.get(&y, lay.xhat, n) - &x_meas;
            let (e1, e2) = adapt_update(&table[mode_idx], &xtilde)?;
            state.eta1 = e1;
            state.eta2 = e2;
            if lay.has_zeta() {
                y.rows_mut(lay.zeta, n).copy_from(&xtilde);
            }
            samples.push(SampleRecord { t, xtilde_pre: pre, xtilde_post: xtilde.norm(), switched });
        }
        bump(&mut sups, &y);
        let mode = scn.modes.get(mode_idx);
        let inp0 = Inputs::at(scn, t);
        if i % per_rec == 0 || i == total {
            trace.push(row(&lay, t, mode_idx, pending_events, mode, &y, (&state.eta1, &state.eta2), &inp0.r, &sups));
            pending_events = 0;
        }
        if i == total {
            break;
        }

        let act = Active { mode, data: &table[mode_idx], omega: scn.trajectory.omega_for(mode_idx) };
        let inp_mid = Inputs::at(scn, t + 0.5 * sch.h);
        let inp1 = Inputs::at(scn, sch.time(i + 1));
        let eta = (&state.eta1, &state.eta2);
        let next = rk4_step(&y, sch.h, |frac, v| {
            let inp = if frac == 0.0 {
                &inp0
            } else if frac == 0.5 {
                &inp_mid
            } else {
                &inp1
            };
            deriv(&lay, &scn.filter, &act, eta, inp, v)
        });
        if let Some(reason) = check_envelope(&next, scn.envelope) {
            let t1 = sch.time(i + 1);
            log::warn!("run aborted at t={t1:.4}: {reason}");
            if trace.rows.last().map(|r| r[0]) != Some(t) {
                trace.push(row(&lay, t, mode_idx, pending_events, mode, &y, eta, &inp0.r, &sups));
            }
            trace.events.push(TraceEvent { t: t1, kind: EventKind::Abort, detail: reason.clone() });
            abort = Some(Abort { t: t1, reason });
            break;
        }
        y = next;
    }

    let observed = Observed { xtilde: sups[0], x: sups[1], u: sups[2], e: sups[3], e_u: sups[4] };
    Ok(RunOutput { trace, observed, samples, annihilation_residual: zeta_max, abort })
}

/// Runs the scenario and returns the trace with the observed suprema.
pub fn run_comparison(scn: &LinearScenario) -> Result<(Trace, Observed)> {
    let out = run_scenario(scn)?;
    if let Some(a) = out.abort {
        return Err(Error::Envelope { t: a.t, reason: a.reason });
    }
    Ok((out.trace, out.observed))
}

/// Margin applied to the vertex-sweep estimates of ρ_r and ρ_ur.
pub const EMPIRICAL_RHO_MARGIN: f64 = 1.2;

/// `sup ‖x_ref‖` and `sup ‖u_ref‖` over constant (θ, d, ω) vertex
/// realizations, each scaled by [`EMPIRICAL_RHO_MARGIN`].
pub fn empirical_rho(scn: &LinearScenario) -> Result<(f64, f64)> {
    scn.check()?;
    let sets = &scn.sets;
    let (mut rx, mut ru) = (0.0f64, 0.0f64);
    for th in &sets.theta {
        for d in &sets.d {
            for w in &sets.omega {
                let traj = UncertaintyTrajectory {
                    theta: ConvexPath::constant(th.clone()),
                    d: ConvexPath::new(
                        vec![Matrix::from_column_slice(d.len(), 1, d.as_slice())],
                        WeightProfile::Constant(vec![1.0]),
                    )?,
                    omega: vec![w.clone(); scn.modes.len()],
                };
                let (a, b) = reference_sups(scn, &traj)?;
                rx = rx.max(a);
                ru = ru.max(b);
            }
        }
    }
    Ok((EMPIRICAL_RHO_MARGIN * rx, EMPIRICAL_RHO_MARGIN * ru))
}

/// Reference system alone under one uncertainty realization.
fn reference_sups(scn: &LinearScenario, traj: &UncertaintyTrajectory) -> Result<(f64, f64)> {
    let sch = &scn.schedule;
    let (n, m, nf) = (scn.modes.n(), scn.modes.m(), scn.filter.nf());
    let mut y = reference_initial(&scn.x0, nf, m);
    let (mut sx, mut su) = (scn.x0.norm(), 0.0f64);
    let total = sch.total_steps();
    let mut switches: BTreeMap<usize, usize> = BTreeMap::new();
    for &(t, mode) in &scn.signal.events {
        switches.insert(sch.index_of(t).expect("aligned switch"), mode);
    }
    let mut mode_idx = 0;
    for i in 0..total {
        if let Some(&next) = switches.get(&i) {
            mode_idx = next;
        }
        let mode = scn.modes.get(mode_idx);
        let omega = traj.omega_for(mode_idx);
        let t = sch.time(i);
        let f = |frac: f64, v: &Vector| -> Vector {
            let tt = t + frac * sch.h;
            let (theta, d, r) = (traj.theta_at(tt), traj.d_at(tt), scn.reference.at(tt));
            let xr = v.rows(0, n).into_owned();
            let xfr = v.rows(n, nf).into_owned();
            let u_ref = -v.rows(n + nf, m).into_owned();
            let mut dv = Vector::zeros(v.len());
            dv.rows_mut(0, n).copy_from(&plant_deriv_unchecked(mode, &xr, &u_ref, &theta, &d, omega));
            let mu = omega * &u_ref + theta.tr_mul(&xr) + &d - &mode.k * &r;
            let (di, dxf) = filter_deriv(&scn.filter, &xfr, &mu);
            if nf > 0 {
                dv.rows_mut(n, nf).copy_from(&dxf);
            }
            dv.rows_mut(n + nf, m).copy_from(&di);
            dv
        };
        y = rk4_step(&y, sch.h, f);
        if let Some(reason) = check_envelope(&y, scn.envelope) {
            return Err(Error::Envelope { t: sch.time(i + 1), reason: format!("reference system: {reason}") });
        }
        sx = sx.max(y.rows(0, n).norm());
        su = su.max(y.rows(n + nf, m).norm());
    }
    Ok((sx, su))
}

/// Full certificate for a linear scenario, with the vertex-sweep ρ estimates attached.
pub fn certify_scenario(scn: &LinearScenario, options: CertifyOptions) -> Result<CertificateReport> {
    let empirical = match empirical_rho(scn) {
        Ok(v) => Some(v),
        Err(Error::Envelope { .. }) => None,
        Err(e) => return Err(e),
    };
    certify(&certify_input(scn, empirical, options))
}

/// Certificate at the scenario's Ts plus the δ's and Ts condition at each of
/// `ts_values`. The list is empty when the chain stops before the constants.
pub fn bounds_sweep(scn: &LinearScenario, options: CertifyOptions, ts_values: &[f64]) -> Result<(CertificateReport, Vec<TsEvaluation>)> {
    let report = certify_scenario(scn, options)?;
    let Some(core) = certificate_core(&certify_input(scn, None, options), &report) else {
        return Ok((report, Vec::new()));
    };
    let rows = ts_values.iter().map(|&ts| core.evaluate(&scn.modes, ts)).collect::<Result<Vec<_>>>()?;
    Ok((report, rows))
}

fn certify_input(scn: &LinearScenario, empirical: Option<(f64, f64)>, options: CertifyOptions) -> CertifyInput<'_> {
    CertifyInput {
        modes: &scn.modes,
        sets: &scn.sets,
        filter: &scn.filter,
        ts: scn.schedule.ts,
        signal: &scn.signal,
        x0: &scn.x0,
        r_max: scn.max_r(),
        empirical_rho: empirical,
        options,
    }
}
