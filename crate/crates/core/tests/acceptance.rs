//! Acceptance criteria C1-C10. Each prints one PASS/FAIL line; the test fails
//! if any criterion fails.
//!
//!     cargo test -p l1ac-core --test acceptance

mod common;

use std::io::Write;
use std::time::Instant;

use common::{linear, loaded, random_hurwitz, random_spd, rel_err, rng};
use l1ac::certificate::lyapunov::{dwell_time, extract_q};
use l1ac::controller::ReinitPolicy;
use l1ac::l2f::flight::{identify_second_order, window_max_abs_diff, window_rms};
use l1ac::l2f::run_flight;
use l1ac::linalg::{self, Matrix, Vector};
use l1ac::sim::{certify_scenario, monte_carlo_sweep, run_scenario, LinearScenario, Schedule};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn constants(scn: &LinearScenario) -> l1ac::certificate::Constants {
    let cfg = loaded("benchmark").config;
    let rep = certify_scenario(scn, cfg.certificates.options()).unwrap();
    assert!(rep.feasible, "benchmark certificate: {:?}", rep.violations);
    rep.constants.unwrap()
}

fn c1_theorem_bounds() -> Outcome {
    let cfg = loaded("benchmark").config;
    let scn = cfg.linear_scenario().unwrap();
    let c = constants(&scn);
    let started = Instant::now();
    let summary = monte_carlo_sweep(&scn, &cfg.sweep_options(cfg.seed), Some(&c)).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let mut margins = vec![];
    for name in ["xtilde", "x_ref - x", "u_ref - u"] {
        let s = summary.stats.iter().find(|s| s.name == name).unwrap();
        margins.push(1.0 - s.worst / s.bound.unwrap());
    }
    let pass = summary.n_runs == 100 && summary.total_violations == 0 && summary.aborted == 0 && margins.iter().all(|m| *m > 0.0) && secs < 120.0;
    outcome(
        pass,
        format!(
            "{} runs, {} violations, margins d0 {:.3e} d1 {:.3e} d2 {:.3e}, {secs:.1} s",
            summary.n_runs, summary.total_violations, margins[0], margins[1], margins[2]
        ),
    )
}

fn c2_ts_convergence() -> Outcome {
    let base = linear("benchmark");
    let started = Instant::now();
    let sups: Vec<f64> = [0.02, 0.01, 0.005, 0.0025]
        .iter()
        .map(|&ts| {
            let mut scn = base.clone();
            scn.schedule = Schedule::new(ts, Some(1e-4), base.schedule.horizon, Some(0.02)).unwrap();
            run_scenario(&scn).unwrap().observed.xtilde
        })
        .collect();
    let secs = started.elapsed().as_secs_f64();
    let ratios: Vec<f64> = sups.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios.iter().all(|r| *r >= 1.5) && secs < 60.0;
    outcome(pass, format!("sup|xtilde| {}, ratios {ratios:.3?}, {secs:.1} s", sups.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" ")))
}

fn c3_one_step_recovery() -> Outcome {
    let mut scn = linear("benchmark");
    let bound = constants(&scn).sample_bound;
    let n = scn.modes.n();
    scn.reinit = ReinitPolicy::Offset(Vector::from_element(n, 10.0 * bound / (n as f64).sqrt()));
    let out = run_scenario(&scn).unwrap();
    let j = out.samples.iter().position(|s| s.switched).unwrap();
    let injected = out.samples[j].xtilde_post;
    let next = out.samples[j + 1].xtilde_pre;
    let pass = (injected / bound - 10.0).abs() < 1e-3 && next <= bound;
    outcome(pass, format!("injected {injected:.3e} at t={}, next sample {next:.3e}, bound {bound:.3e}", out.samples[j].t))
}

fn c4_annihilation() -> Outcome {
    let mut scn = linear("benchmark");
    scn.track_annihilation = true;
    let res = run_scenario(&scn).unwrap().annihilation_residual.unwrap();
    outcome(res < 1e-8, format!("max |zeta1| at sample ends {res:.3e}"))
}

fn c5_zero_uncertainty() -> Outcome {
    let scn = linear("zero_uncertainty");
    let out = run_scenario(&scn).unwrap();
    let mut eta_max: f64 = 0.0;
    for col in out.trace.columns.iter().filter(|c| c.starts_with("eta")) {
        eta_max = out.trace.column(col).unwrap().iter().fold(eta_max, |a, v| a.max(v.abs()));
    }
    let pass = scn.schedule.horizon >= 10.0 && out.observed.e < 1e-8 && eta_max == 0.0;
    outcome(pass, format!("sup |x - x_ref| {:.3e}, max |eta| {eta_max:.1e}", out.observed.e))
}

/// `Σ_k (A t)^k / k!` with scaling and squaring; accurate to rounding for moderate norms.
fn expm_taylor(a: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let norm = (a * t).norm();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let m = a * (t / 2f64.powi(s));
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..60 {
        term = &term * &m / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn c6_certificate_arithmetic() -> Outcome {
    let tau = dwell_time(1.0, std::f64::consts::E, 0.5).unwrap();
    let mut r = rng(606);
    let mut worst = [0.0f64; 4];
    for _ in 0..20 {
        let n = 4;
        let a = random_hurwitz(&mut r, n);
        let e = linalg::expm(&a, 0.7).unwrap();
        worst[0] = worst[0].max(rel_err(&e, &expm_taylor(&a, 0.7)));

        let q = random_spd(&mut r, n, 0.5);
        let x = linalg::lyap_solve(&a, &q).unwrap();
        let resid = a.transpose() * &x + &x * &a + &q;
        worst[1] = worst[1].max(resid.norm() / q.norm());

        // λmax(P, Q) against the symmetric eigenproblem of L⁻¹ P L⁻ᵀ.
        let p = random_spd(&mut r, n, 0.1);
        let l = q.clone().cholesky().unwrap().l();
        let li = l.try_inverse().unwrap();
        let sym = linalg::symmetrize(&(&li * &p * li.transpose()));
        let want = linalg::sym_max_eig(&sym);
        worst[2] = worst[2].max((linalg::gev_max(&p, &q).unwrap() - want).abs() / want);

        // Schur complement against the inverse of the bottom-right block of P̄⁻¹.
        let pbar = random_spd(&mut r, 7, 0.3);
        let parts = extract_q(&pbar, 3).unwrap();
        let inv = pbar.clone().try_inverse().unwrap();
        let oracle = inv.view((3, 3), (4, 4)).into_owned().try_inverse().unwrap();
        worst[3] = worst[3].max(rel_err(&parts.q, &oracle));
    }
    let tol = [1e-10, 1e-10, 1e-10, 1e-8];
    let pass = tau == 2.0 && worst.iter().zip(tol).all(|(w, t)| *w < t);
    outcome(pass, format!("dwell {tau}, expm {:.1e} lyap {:.1e} gev {:.1e} schur {:.1e}", worst[0], worst[1], worst[2], worst[3]))
}

fn c7_ndi_shaping() -> Outcome {
    let scn = loaded("l2f_step_response").config.flight_scenario().unwrap();
    let gains = scn.prior_gains().unwrap();
    let out = run_flight(&scn).unwrap();
    let tr = &out.trace;
    let (it, ith) = (tr.column_index("t").unwrap(), tr.column_index("theta").unwrap());
    let y: Vec<f64> = tr.rows.iter().filter(|r| r[it] >= 1.0 - 1e-9 && r[it] <= 4.0 + 1e-9).map(|r| r[ith]).collect();
    let (wn, zeta) = identify_second_order(&y, 0.02).unwrap();
    let target = gains.omega_n[1];
    let pass = out.abort.is_none() && ((wn - target) / target).abs() <= 0.1 && (zeta - 0.8).abs() <= 0.1;
    outcome(pass, format!("omega_n {wn:.3} (design {target:.3}), zeta {zeta:.3}"))
}

fn c8_rls_identifiability() -> Outcome {
    let scn = loaded("l2f_nominal").config.flight_scenario().unwrap();
    let out = run_flight(&scn).unwrap();
    let key = out.learned.unwrap().key();
    let truth = &scn.params.aero;
    let errs = [
        ((key.c_m_alpha - truth.c_m_alpha()) / truth.c_m_alpha()).abs(),
        ((key.c_l_da - truth.c_l_da()) / truth.c_l_da()).abs(),
        ((key.c_n_beta - truth.c_n_beta()) / truth.c_n_beta()).abs(),
    ];
    let pass = out.abort.is_none() && scn.schedule.horizon >= 10.0 && errs.iter().all(|e| *e <= 1e-4);
    outcome(pass, format!("relative errors cm_alpha {:.2e} cl_da {:.2e} cn_beta {:.2e}", errs[0], errs[1], errs[2]))
}

fn c9_destabilized_pitch() -> Outcome {
    let scn = loaded("l2f_pitch_destab_16").config.flight_scenario().unwrap();
    let with = run_flight(&scn).unwrap();
    let base = run_flight(&scn.baseline()).unwrap();
    let horizon = scn.schedule.horizon;
    let excursion = |tr| window_max_abs_diff(tr, "theta", "theta_cmd", 0.0, 5.0).unwrap();
    let (eb, el) = (excursion(&base.trace), excursion(&with.trace));
    let first = window_rms(&with.trace, "eta1_q", 0.0, 5.0).unwrap();
    let last = window_rms(&with.trace, "eta1_q", horizon - 5.0, horizon).unwrap();
    let pass = with.abort.is_none() && eb >= 3.0 * el && last <= 0.5 * first;
    outcome(
        pass,
        format!(
            "pitch excursion baseline {eb:.4} / with L1 {el:.4} = {:.2}, eta1_q rms last/first {:.3}{}",
            eb / el,
            last / first,
            base.abort.map(|a| format!(", baseline aborted at {:.2} s", a.t)).unwrap_or_default()
        ),
    )
}

fn c10_determinism() -> Outcome {
    let scn = linear("benchmark");
    let a = run_scenario(&scn).unwrap().trace.csv_hash("m");
    let b = run_scenario(&scn).unwrap().trace.csv_hash("m");
    let cfg = loaded("benchmark").config;
    let mut short = scn.clone();
    short.schedule = Schedule::new(scn.schedule.ts, Some(scn.schedule.h), 1.0, Some(0.01)).unwrap();
    let mut opts = cfg.sweep_options(cfg.seed);
    opts.n_runs = 8;
    let hashes = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| monte_carlo_sweep(&short, &opts, None).unwrap()).runs.into_iter().map(|r| r.trace_hash).collect::<Vec<_>>()
    };
    let (h1, h4) = (hashes(1), hashes(4));
    let f1 = run_flight(&loaded("l2f_nominal").config.flight_scenario().unwrap()).unwrap().trace.csv_hash("");
    let f2 = run_flight(&loaded("l2f_nominal").config.flight_scenario().unwrap()).unwrap().trace.csv_hash("");
    let pass = a == b && h1 == h4 && f1 == f2;
    outcome(pass, format!("trace {}, sweep 1 vs 4 threads equal {}, flight equal {}", &a[..12], h1 == h4, f1 == f2))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("C1 theorem bounds over 100-run sweep", c1_theorem_bounds),
        ("C2 x-tilde convergence in Ts", c2_ts_convergence),
        ("C3 one-step recovery after re-init", c3_one_step_recovery),
        ("C4 annihilation at sample instants", c4_annihilation),
        ("C5 zero-uncertainty equivalence", c5_zero_uncertainty),
        ("C6 certificate arithmetic", c6_certificate_arithmetic),
        ("C7 NDI second-order shaping", c7_ndi_shaping),
        ("C8 RLS identifiability", c8_rls_identifiability),
        ("C9 destabilized pitch scenario", c9_destabilized_pitch),
        ("C10 determinism", c10_determinism),
    ];
    let mut failed = vec![];
    for (name, run) in criteria {
        let o = run();
        // Written past the test harness capture so the lines show in a plain `cargo test` log.
        let mut out = std::io::stdout().lock();
        writeln!(out, "{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail).unwrap();
        out.flush().unwrap();
        if !o.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
