//! Subcommand implementations. Every command writes its outputs under `--out`
//! and returns the process exit status through [`Failure`].

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use l1ac::certificate::{theorem1_report, CertificateReport, CertifyOptions};
use l1ac::config::{load, LoadedConfig};
use l1ac::l2f::flight::{window_max_abs_diff, window_rms};
use l1ac::l2f::{rate_loop_certificate, run_flight, FlightOutput, FlightScenario};
use l1ac::sim::{bounds_sweep, certify_scenario, monte_carlo_sweep, run_scenario, LinearScenario, Trace};

use crate::plot;
use crate::Common;

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_ENVELOPE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<l1ac::Error> for Failure {
    fn from(e: l1ac::Error) -> Self {
        let code = match e {
            l1ac::Error::Envelope { .. } => EXIT_ENVELOPE,
            l1ac::Error::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_CONFIG,
        };
        Self::new(code, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Loaded scenario with the resolved seed.
struct Job<'a> {
    common: &'a Common,
    loaded: LoadedConfig,
    seed: u64,
}

impl<'a> Job<'a> {
    fn open(common: &'a Common) -> Result<Self, Failure> {
        let loaded = load(&common.config)?;
        let seed = common.seed.unwrap_or(loaded.config.seed);
        std::fs::create_dir_all(&common.out)
            .map_err(|e| Failure::new(EXIT_CONFIG, format!("cannot create {}: {e}", common.out.display())))?;
        Ok(Self { common, loaded, seed })
    }

    fn name(&self) -> &str {
        &self.loaded.config.name
    }

    fn manifest(&self) -> String {
        format!(
            "l1ac {} scenario={} config_sha256={} seed={}",
            env!("CARGO_PKG_VERSION"),
            self.name(),
            self.loaded.hash,
            self.seed
        )
    }

    fn header(&self, command: &str) -> Value {
        json!({
            "tool": "l1ac",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "scenario": self.name(),
            "config": self.common.config.display().to_string(),
            "config_sha256": self.loaded.hash,
            "seed": self.seed,
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.common.out.join(file)
    }

    fn options(&self) -> CertifyOptions {
        let mut o = self.loaded.config.certificates.options();
        o.strict_norm_bounds |= self.common.strict_norm_bounds;
        o
    }

    fn linear(&self) -> Result<LinearScenario, Failure> {
        let mut scn = self.loaded.config.linear_scenario()?;
        scn.seed = self.seed;
        Ok(scn)
    }

    fn flight(&self) -> Result<FlightScenario, Failure> {
        let mut scn = self.loaded.config.flight_scenario()?;
        scn.seed = self.seed;
        Ok(scn)
    }

    /// Writes the trace and returns the SHA-256 of the written bytes.
    fn write_trace(&self, file: &str, trace: &Trace) -> Result<String, Failure> {
        let manifest = self.manifest();
        write_file(&self.path(file), trace.to_csv_string(&manifest).as_bytes())?;
        Ok(trace.csv_hash(&manifest))
    }

    fn write_json(&self, file: &str, header: Value, body: impl Serialize) -> Result<(), Failure> {
        let mut doc = header;
        let body = serde_json::to_value(body).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
            d.extend(b);
        }
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
        write_file(&self.path(file), format!("{text}\n").as_bytes())
    }

    fn plot(&self, file: &str, trace: &Trace, panels: &[plot::Panel<'_>]) -> Outcome {
        if self.common.plot {
            let p = self.path(file);
            plot::write(&p, trace, self.name(), panels)
                .map_err(|e| Failure::new(EXIT_CONFIG, format!("cannot write {}: {e}", p.display())))?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    std::fs::write(path, bytes).map_err(|e| Failure::new(EXIT_CONFIG, format!("cannot write {}: {e}", path.display())))
}

fn abort_failure(t: f64, reason: &str) -> Failure {
    Failure::new(EXIT_ENVELOPE, format!("envelope abort at t={t:.4} s: {reason}"))
}

fn infeasible(report: &CertificateReport) -> Failure {
    Failure::new(
        EXIT_INFEASIBLE,
        format!("certificate infeasible: {}", report.first_violation().unwrap_or("unknown condition")),
    )
}

pub fn simulate(common: &Common) -> Outcome {
    let job = Job::open(common)?;
    if job.loaded.config.is_l2f() {
        let out = run_flight(&job.flight()?)?;
        let hash = job.write_trace("trace.csv", &out.trace)?;
        job.plot("trace.svg", &out.trace, &plot::FLIGHT_PANELS)?;
        job.write_json("summary.json", job.header("simulate"), flight_summary(&out, &hash))?;
        println!("{}: {} rows, {} gain switches, trace sha256 {hash}", job.name(), out.trace.len(), out.gains.len() - 1);
        if let Some(a) = &out.abort {
            return Err(abort_failure(a.t, &a.reason));
        }
        return Ok(());
    }
    let out = run_scenario(&job.linear()?)?;
    let hash = job.write_trace("trace.csv", &out.trace)?;
    job.plot("trace.svg", &out.trace, &plot::LINEAR_PANELS)?;
    job.write_json(
        "summary.json",
        job.header("simulate"),
        json!({
            "observed": out.observed,
            "abort": out.abort,
            "events": out.trace.events,
            "rows": out.trace.len(),
            "trace_sha256": hash,
        }),
    )?;
    println!("{}: {} rows, sup |xtilde| {:.4e}, trace sha256 {hash}", job.name(), out.trace.len(), out.observed.xtilde);
    match &out.abort {
        Some(a) => Err(abort_failure(a.t, &a.reason)),
        None => Ok(()),
    }
}

fn flight_summary(out: &FlightOutput, hash: &str) -> Value {
    json!({
        "abort": out.abort,
        "tau_d": out.tau_d,
        "dwell_exceeds_cadence": out.dwell_exceeds_cadence,
        "publishes": out.publishes,
        "gains": out.gains,
        "learned": out.learned.as_ref().map(|l| l.key()),
        "gamma_clamped": out.gamma_clamped,
        "events": out.trace.events,
        "rows": out.trace.len(),
        "trace_sha256": hash,
    })
}

pub fn certify(common: &Common) -> Outcome {
    let job = Job::open(common)?;
    if job.loaded.config.is_l2f() {
        let scn = job.flight()?;
        let cert = rate_loop_certificate(&scn, job.options().a_star)?;
        job.write_json("certificate.json", job.header("certify"), &cert)?;
        println!(
            "{}: rate loop lambda {:.4} mu {:.4} tau_d {:.4} s (publish interval {} s{})",
            job.name(),
            cert.lambda,
            cert.mu,
            cert.tau_d,
            cert.publish_interval,
            if cert.dwell_exceeds_cadence { ", exceeded by the dwell time" } else { "" }
        );
        return Ok(());
    }
    let report = certify_scenario(&job.linear()?, job.options())?;
    job.write_json("certificate.json", job.header("certify"), &report)?;
    if let Some(c) = &report.constants {
        println!(
            "{}: lambda {:.4} mu {:.4} tau_d {:.4} s (required {:.4} s) delta0 {:.4e} delta1 {:.4e} delta2 {:.4e}",
            job.name(),
            c.lambda,
            c.mu,
            c.tau_d,
            c.tau_d_required,
            c.delta0,
            c.delta1,
            c.delta2
        );
    }
    if report.feasible {
        println!("certificate feasible");
        Ok(())
    } else {
        Err(infeasible(&report))
    }
}

/// Flight metrics shared by both sides of a comparison.
fn flight_metrics(out: &FlightOutput, horizon: f64, hash: &str) -> Value {
    let tr = &out.trace;
    let first = horizon.min(5.0);
    json!({
        "abort": out.abort,
        "pitch_excursion_first_5s": window_max_abs_diff(tr, "theta", "theta_cmd", 0.0, first),
        "roll_excursion_first_5s": window_max_abs_diff(tr, "phi", "phi_cmd", 0.0, first),
        "eta1_q_rms_first_5s": window_rms(tr, "eta1_q", 0.0, first),
        "eta1_q_rms_last_5s": window_rms(tr, "eta1_q", (horizon - 5.0).max(0.0), horizon),
        "gain_switches": out.gains.len() - 1,
        "publishes": out.publishes,
        "tau_d": out.tau_d,
        "learned": out.learned.as_ref().map(|l| l.key()),
        "trace_sha256": hash,
    })
}

pub fn compare(common: &Common) -> Outcome {
    let job = Job::open(common)?;
    if job.loaded.config.is_l2f() {
        let scn = job.flight()?;
        let horizon = scn.schedule.horizon;
        let with = run_flight(&scn)?;
        let base = run_flight(&scn.baseline())?;
        let h_with = job.write_trace("trace_with_l1.csv", &with.trace)?;
        let h_base = job.write_trace("trace_baseline.csv", &base.trace)?;
        job.plot("trace_with_l1.svg", &with.trace, &plot::FLIGHT_PANELS)?;
        job.plot("trace_baseline.svg", &base.trace, &plot::FLIGHT_PANELS)?;
        let with_m = flight_metrics(&with, horizon, &h_with);
        let base_m = flight_metrics(&base, horizon, &h_base);
        for (label, m) in [("baseline-only", &base_m), ("with-L1", &with_m)] {
            println!(
                "{label:>13}: pitch excursion {} eta1_q rms first/last {} / {} abort {}",
                m["pitch_excursion_first_5s"], m["eta1_q_rms_first_5s"], m["eta1_q_rms_last_5s"], m["abort"]
            );
        }
        job.write_json("compare.json", job.header("compare"), json!({ "baseline-only": base_m, "with-L1": with_m }))?;
        if let Some(a) = &with.abort {
            return Err(abort_failure(a.t, &a.reason));
        }
        return Ok(());
    }
    let scn = job.linear()?;
    let report = certify_scenario(&scn, job.options())?;
    let out = run_scenario(&scn)?;
    let hash = job.write_trace("trace.csv", &out.trace)?;
    job.plot("trace.svg", &out.trace, &plot::LINEAR_PANELS)?;
    let theorem = report.constants.as_ref().map(|c| {
        let dwell_ok = c.min_switch_gap.is_none_or(|g| g >= c.tau_d_required - 1e-9);
        theorem1_report(c, dwell_ok, &out.observed)
    });
    if let Some(th) = &theorem {
        for c in &th.checks {
            println!(
                "{:<20} bound {:>12.4e} observed {:>12.4e} {}",
                c.name,
                c.bound,
                c.observed,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        if let Some(f) = &th.flag {
            println!("{f}");
        }
    }
    job.write_json(
        "compare.json",
        job.header("compare"),
        json!({
            "feasible": report.feasible,
            "violations": report.violations,
            "observed": out.observed,
            "theorem1": theorem,
            "abort": out.abort,
            "trace_sha256": hash,
        }),
    )?;
    if let Some(a) = &out.abort {
        return Err(abort_failure(a.t, &a.reason));
    }
    if !report.feasible {
        return Err(infeasible(&report));
    }
    Ok(())
}

pub fn sweep(common: &Common, runs: Option<usize>) -> Outcome {
    let job = Job::open(common)?;
    if job.loaded.config.is_l2f() {
        return Err(Failure::new(EXIT_CONFIG, "sweep needs a linear-plant scenario"));
    }
    let scn = job.linear()?;
    let report = certify_scenario(&scn, job.options())?;
    let mut opts = job.loaded.config.sweep_options(job.seed);
    if let Some(n) = runs {
        if n == 0 {
            return Err(Failure::new(EXIT_CONFIG, "--runs must be at least 1"));
        }
        opts.n_runs = n;
    }
    let constants = report.constants.as_ref().filter(|_| report.feasible);
    let summary = monte_carlo_sweep(&scn, &opts, constants)?;
    for s in &summary.stats {
        let bound = s.bound.map_or("-".to_string(), |b| format!("{b:.4e}"));
        println!("{:<10} worst {:>12.4e} p95 {:>12.4e} bound {:>12} violations {}", s.name, s.worst, s.p95, bound, s.violations);
    }
    println!("{} runs, {} aborted, {} violations", summary.n_runs, summary.aborted, summary.total_violations);
    job.write_json("sweep.json", job.header("sweep"), json!({ "feasible": report.feasible, "sweep": summary }))
}

/// Parses `lo:hi:n` into `n` evenly spaced values.
pub fn parse_ts_sweep(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::new(EXIT_CONFIG, format!("--ts-sweep expects lo:hi:n, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

pub fn bounds(common: &Common, ts_sweep: Option<&str>) -> Outcome {
    let job = Job::open(common)?;
    if job.loaded.config.is_l2f() {
        return Err(Failure::new(EXIT_CONFIG, "bounds needs a linear-plant scenario"));
    }
    let scn = job.linear()?;
    let ts_values = match ts_sweep {
        Some(s) => parse_ts_sweep(s)?,
        None => vec![scn.schedule.ts],
    };
    let (report, rows) = bounds_sweep(&scn, job.options(), &ts_values)?;
    if rows.is_empty() {
        return Err(infeasible(&report));
    }
    println!("{:>12} {:>12} {:>12} {:>12} {:>12} {:>9}", "Ts", "lhs", "delta0", "delta1", "delta2", "satisfied");
    for r in &rows {
        println!(
            "{:>12.6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>9}",
            r.ts, r.lhs, r.delta0, r.delta1, r.delta2, r.satisfied
        );
    }
    job.write_json("bounds.json", job.header("bounds"), json!({ "rows": rows }))
}
