use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drdamp::dro::{Status, TuningReport};
use drdamp::pipeline::{self, read_report};
use drdamp::sslin::Interval;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Small search so the CLI tests stay fast.
fn write_config(dir: &Path, extra: Value) -> PathBuf {
    let mut cfg = json!({
        "seed": 11,
        "testbed": data("testbed_default.json"),
        "samples": data("samples_default.csv"),
        "output_dir": dir.join("out"),
        "tuning": { "grid_per_axis": 5, "tolerance": 0.02, "pce_samples": 25 },
        "ro_ranges": [{ "lo": -0.25, "hi": 0.25 }, { "lo": -1.0, "hi": 1.0 }],
        "sobol": { "n_base": 64, "top_k": 2 },
        "pce": { "validation_size": 200, "mc_samples": 5000, "bins": 20 },
        "scenarios": { "count": 100 }
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn drdamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drdamp")).args(args).output().unwrap()
}

fn run_ok(cmd: &str, config: &Path, extra: &[&str]) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = drdamp(&args);
    assert!(out.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn analyze_lists_weak_critical_mode_first() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    run_ok("analyze", &cfg, &[]);
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/analysis.json")).unwrap()).unwrap();
    let first = &v["open_loop"][0];
    assert_eq!(first["oscillatory"], true);
    let zeta = first["damping"].as_f64().unwrap();
    assert!(zeta > 0.0 && zeta < 0.05, "zeta {zeta}");
    assert_eq!(v["critical_open_loop"], 0);
}

#[test]
fn zero_radius_drdoc_matches_so() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({ "radius": 0.0 }));
    run_ok("tune", &cfg, &["--method", "drdoc"]);
    run_ok("tune", &cfg, &["--method", "so"]);
    let d = read_report(&dir.path().join("out/report_drdoc.json")).unwrap();
    let s = read_report(&dir.path().join("out/report_so.json")).unwrap();
    assert!((d.objective.unwrap() - s.objective.unwrap()).abs() < 1e-6);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let collect = |sub: &str| {
        let out = dir.path().join(sub);
        for cmd in ["analyze", "sobol", "pce", "tune", "simulate"] {
            run_ok(cmd, &cfg, &["--out", out.to_str().unwrap()]);
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let a = collect("a");
    let b = collect("b");
    assert!(a.len() > 8);
    assert_eq!(a, b);
}

#[test]
fn errors_are_single_json_lines_and_leave_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({ "samples": dir.path().join("missing.csv") }));
    let out = drdamp(&["tune", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim().lines().count(), 1);
    let v: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(v["error"].is_string() && v["message"].is_string());
    let left: Vec<_> = fs::read_dir(dir.path().join("out")).unwrap().collect();
    assert!(left.is_empty(), "{left:?}");

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "e_pu\n0.1\nzz\n").unwrap();
    let cfg = write_config(dir.path(), json!({ "samples": bad }));
    let out = drdamp(&["pce", "--config", cfg.to_str().unwrap()]);
    let v: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "malformed_input");
    assert!(v["message"].as_str().unwrap().contains("line 3"));
}

#[test]
fn missing_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({ "seed": null }));
    let out = drdamp(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    run_ok("analyze", &cfg, &["--seed", "5"]);
}

#[test]
fn infeasible_ro_report_has_no_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    run_ok("tune", &cfg, &["--method", "ro"]);
    let text = fs::read_to_string(dir.path().join("out/report_ro_-1_1.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["status"], "infeasible");
    assert!(v.get("params").is_none());
    assert!(!v["constraints"].as_array().unwrap().is_empty());
    let summary = fs::read_to_string(dir.path().join("out/tune_summary.csv")).unwrap();
    assert!(summary.contains(",infeasible,"));
}

#[test]
fn report_round_trips_and_csv_trace_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    run_ok("tune", &cfg, &["--method", "drdoc"]);
    let path = dir.path().join("out/report_drdoc.json");
    let r = read_report(&path).unwrap();
    assert_eq!(r.status, Status::Optimal);
    let again = dir.path().join("again.json");
    pipeline::emit_report(&r, pipeline::Format::Json, &again).unwrap();
    assert_eq!(read_report(&again).unwrap(), r);

    let trace = fs::read_to_string(dir.path().join("out/trace_drdoc.csv")).unwrap();
    assert_eq!(trace.lines().count(), r.trace.len() + 1);
    assert!(trace.starts_with("iteration,phase,k_m,t_1,objective,feasible,step"));

    let empty = TuningReport { trace: Vec::new(), ..r };
    let p = dir.path().join("empty.csv");
    pipeline::emit_report(&empty, pipeline::Format::Csv, &p).unwrap();
    assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 1);
}

#[test]
fn validate_writes_rates_for_each_method_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    run_ok("validate", &cfg, &["--format", "csv"]);
    let table = fs::read_to_string(dir.path().join("out/validation.csv")).unwrap();
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["drdoc", "so", "ro", "baseline"]);
    let scenarios = fs::read_to_string(dir.path().join("out/scenarios.csv")).unwrap();
    assert_eq!(scenarios.lines().count(), 101);
}

#[test]
fn simulate_writes_step_response() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({ "simulate": { "horizon_s": 2.0, "dt_s": 0.01 } }));
    run_ok("simulate", &cfg, &[]);
    let text = fs::read_to_string(dir.path().join("out/step_response.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "time_s,speed_open_loop,speed_closed_loop");
    assert!(text.lines().count() > 150);
}

#[test]
fn large_synthetic_sample_file_keeps_its_moments() {
    let dir = tempfile::tempdir().unwrap();
    let (mu, sigma, n) = (0.05, 0.2, 10_000usize);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
    let nd = Normal::new(mu, sigma).unwrap();
    let mut text = String::from("e_pu\n");
    for _ in 0..n {
        let x: f64 = nd.sample(&mut rng);
        text.push_str(&format!("{x}\n"));
    }
    let p = dir.path().join("big.csv");
    fs::write(&p, text).unwrap();
    let s = pipeline::load_samples(&p, Interval::new(-1.0, 1.0)).unwrap();
    let m = s.values.iter().sum::<f64>() / n as f64;
    let sd = (s.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((m - mu).abs() < 3.0 * sigma / (n as f64).sqrt());
    // standard error of the sample std is about σ/√(2n)
    assert!((sd - sigma).abs() < 3.0 * sigma / (2.0 * n as f64).sqrt());
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    fs::create_dir_all(dir.path().join("out")).unwrap();
    fs::write(dir.path().join("out/.drdamp.lock"), "").unwrap();
    let out = drdamp(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
    // the sentinel belongs to the other run and stays
    assert!(dir.path().join("out/.drdamp.lock").exists());
}
