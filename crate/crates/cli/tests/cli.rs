use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

fn l1ac(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l1ac"))
        .args(args)
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn l1ac")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn file_sha256(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = l1ac(&["simulate"], &missing, dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
}

#[test]
fn simulate_benchmark_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = l1ac(&["simulate"], &config("benchmark"), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = text.lines();
    let manifest = lines.next().unwrap();
    assert!(manifest.starts_with("# l1ac ") && manifest.contains("scenario=benchmark") && manifest.contains("seed=7"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let want = [
        "t", "mode", "event", "x_0", "x_1", "xhat_0", "xhat_1", "xtilde_0", "xtilde_1", "x_ref_0", "x_ref_1", "x_id_0", "x_id_1",
        "u_0", "u_ref_0", "u_id_0", "eta1_0", "eta2_0", "r_0", "xtilde_norm", "x_norm", "u_norm", "e_norm", "eu_norm",
        "sup_xtilde", "sup_x", "sup_u", "sup_e", "sup_eu",
    ];
    assert_eq!(header, want);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 601);
    assert!(rows.iter().all(|r| r.split(',').count() == want.len()));
    // Two switches, at 2.5 s and 5 s.
    let events: f64 = rows.iter().map(|r| r.split(',').nth(2).unwrap().parse::<f64>().unwrap()).sum();
    assert_eq!(events, 2.0);

    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["trace_sha256"].as_str().unwrap(), file_sha256(&dir.path().join("trace.csv")));
    assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));
    let cfg_hash = file_sha256(&config("benchmark"));
    assert_eq!(summary["config_sha256"].as_str().unwrap(), cfg_hash);
}

#[test]
fn fixed_seed_reproduces_the_trace() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = Command::new(env!("CARGO_BIN_EXE_l1ac"))
            .args(["simulate", "--seed", "99"])
            .arg(config("benchmark"))
            .arg("--out")
            .arg(d.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
    }
    let (ha, hb) = (file_sha256(&a.path().join("trace.csv")), file_sha256(&b.path().join("trace.csv")));
    assert_eq!(ha, hb);
    assert!(std::fs::read_to_string(a.path().join("trace.csv")).unwrap().starts_with("# l1ac"));
    assert_eq!(json(&a.path().join("summary.json"))["seed"], 99);
}

#[test]
fn certify_zero_uncertainty() {
    let dir = tempfile::tempdir().unwrap();
    let o = l1ac(&["certify"], &config("zero_uncertainty"), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = &json(&dir.path().join("certificate.json"))["constants"];
    assert_eq!(c["mu"].as_f64().unwrap(), 1.0);
    assert_eq!(c["tau_d"].as_f64().unwrap(), 0.0);
}

#[test]
fn certify_benchmark_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = l1ac(&["certify"], &config("benchmark"), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&dir.path().join("certificate.json"));
    assert_eq!(rep["feasible"], true);
    let c = &rep["constants"];
    assert!((c["tau_d"].as_f64().unwrap() - 1.4703).abs() < 1e-4, "{}", c["tau_d"]);
    assert!((c["tau_d_required"].as_f64().unwrap() - 1.8610).abs() < 1e-4, "{}", c["tau_d_required"]);
    assert!(c["min_switch_gap"].as_f64().unwrap() >= c["tau_d_required"].as_f64().unwrap());
    assert!((c["sample_bound"].as_f64().unwrap() / 8.059e-4 - 1.0).abs() < 1e-3, "{}", c["sample_bound"]);
    assert!(c["ts_condition"]["satisfied"].as_bool().unwrap());
}

#[test]
fn certify_negative_examples() {
    let cases = [
        ("filter_gain_zero", "reference Lyapunov"),
        ("dwell_violated", "dwell time"),
        ("ts_too_large", "Ts condition"),
    ];
    for (name, first) in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = l1ac(&["certify"], &config(name), dir.path());
        assert_eq!(code(&o), 3, "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(first), "{name}: {}", stderr(&o));
        let rep = json(&dir.path().join("certificate.json"));
        assert_eq!(rep["feasible"], false);
        assert!(rep["violations"][0].as_str().unwrap().starts_with(first), "{name}");
    }
}

#[test]
fn every_shipped_config_runs_its_command() {
    let expected = [
        ("benchmark", "compare", 0),
        ("zero_uncertainty", "compare", 0),
        ("dwell_violated", "simulate", 0),
        ("ts_too_large", "simulate", 0),
        ("filter_gain_zero", "simulate", 0),
        ("l2f_nominal", "simulate", 0),
        ("l2f_step_response", "simulate", 0),
        ("l2f_pitch_destab_10", "compare", 0),
        ("l2f_pitch_destab_16", "compare", 0),
        ("l2f_roll_destab", "compare", 0),
    ];
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let shipped = std::fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "toml")).count();
    assert_eq!(shipped, expected.len(), "a shipped config has no designated command");
    for (name, cmd, want) in expected {
        let out = tempfile::tempdir().unwrap();
        let o = l1ac(&[cmd], &config(name), out.path());
        assert_eq!(code(&o), want, "{cmd} {name}: {}", stderr(&o));
    }
}

#[test]
fn envelope_abort_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("l2f_pitch_destab_16"))
        .unwrap()
        .replace("l1 = true", "l1 = false")
        .replace("[aircraft.learner]\n", "[aircraft.learner]\nenabled = false\n");
    let path = dir.path().join("stale.toml");
    std::fs::write(&path, text).unwrap();
    let o = l1ac(&["simulate"], &path, dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("envelope abort"));
    // The partial trace is still written.
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn bounds_single_point_and_monotone_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = l1ac(&["certify"], &config("benchmark"), dir.path());
    assert_eq!(code(&o), 0);
    let c = json(&dir.path().join("certificate.json"))["constants"].clone();

    let o = l1ac(&["bounds", "--ts-sweep", "0.001:0.001:1"], &config("benchmark"), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = json(&dir.path().join("bounds.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 1);
    for k in ["delta0", "delta1", "delta2"] {
        assert_eq!(rows[0][k], c[k], "{k}");
    }

    let o = l1ac(&["bounds", "--ts-sweep", "0.0005:0.003:6"], &config("benchmark"), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = json(&dir.path().join("bounds.json"))["rows"].as_array().unwrap().clone();
    let d1: Vec<f64> = rows.iter().map(|r| r["delta1"].as_f64().unwrap()).collect();
    assert!(d1.windows(2).all(|w| w[0] <= w[1]), "{d1:?}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("delta1"));
}

#[test]
fn compare_l2f_reports_both_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = l1ac(&["compare", "--plot"], &config("l2f_pitch_destab_16"), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&dir.path().join("compare.json"));
    let (base, with) = (&rep["baseline-only"], &rep["with-L1"]);
    assert!(base["pitch_excursion_first_5s"].as_f64().unwrap() > with["pitch_excursion_first_5s"].as_f64().unwrap());
    assert!(with["abort"].is_null());
    for f in ["trace_with_l1.csv", "trace_baseline.csv", "trace_with_l1.svg", "trace_baseline.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let svg = std::fs::read_to_string(dir.path().join("trace_with_l1.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn sweep_runs_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = l1ac(&["sweep", "--runs", "2"], &config("zero_uncertainty"), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&dir.path().join("sweep.json"));
    assert_eq!(rep["sweep"]["n_runs"], 2);
    assert_eq!(rep["sweep"]["total_violations"], 0);
    let o = l1ac(&["sweep", "--runs", "0"], &config("zero_uncertainty"), dir.path());
    assert_eq!(code(&o), 1);
}
