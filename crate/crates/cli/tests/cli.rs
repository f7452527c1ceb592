use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbsde"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_config(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut c = bin();
    c.arg(cmd).arg("--config").arg(cfg).arg("--out").arg(out).args(extra);
    c.output().expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

#[test]
fn simulate_writes_one_row_per_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("simulate", &config("simulate_brownian.json"), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("brownian_batch.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1000);
    assert!(csv.starts_with("path_id,tau_hat,exit_coord_0,exited"));
    let m = read_json(&dir.path().join("brownian_manifest.json"));
    assert_eq!(m["files"], serde_json::json!(["brownian_batch.csv"]));
    assert_eq!(m["seed"], 1);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn boundary_start_without_noise_exits_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "domain": {"interval": {"a": 0.0, "b": 1.0}},
        "coefficients": {"family": "constant_drift", "v": [1.0], "s": 0.0},
        "x": [1.0],
        "solver": {"n_paths": 5}
    });
    let p = write_config(dir.path(), "c.json", &cfg);
    let o = run_config("simulate", &p, dir.path(), &[]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("run_batch.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "0");
        assert_eq!(cols[3], "true");
    }
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ not json").unwrap();
    let o = run_config("simulate", &p, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let cfg = serde_json::json!({"domain": {"interval": {"a": 1.0, "b": 0.0}}, "x": [0.5]});
    let p = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(run_config("simulate", &p, dir.path(), &[]).status.code(), Some(2));

    // blow-up point off the boundary
    let cfg = serde_json::json!({
        "domain": {"interval": {"a": 0.0, "b": 1.0}},
        "generator": {"kind": "power", "q": 1.0, "kappa": 1.0},
        "boundary": {"blowup": [{"point": {"at": [0.5]}}]}
    });
    let p = write_config(dir.path(), "c2.json", &cfg);
    assert_eq!(run_config("solve-pde", &p, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn linear_pde_reproduces_affine_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("solve-pde", &config("pde_linear.json"), dir.path(), &["--emit-plots"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("linear_field.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[2] - (1.0 + 2.0 * v[0] + 0.5 * v[1])).abs() < 1e-9, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 17 * 33);
    let m = read_json(&dir.path().join("linear_manifest.json"));
    assert_eq!(m["files"], serde_json::json!(["linear_field.csv", "linear_ladder.json", "linear_plot.gp"]));
}

#[test]
fn blowup_ladder_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("solve-pde", &config("pde_blowup.json"), dir.path(), &[]);
    assert!(o.status.success());
    let l = read_json(&dir.path().join("blowup_q2_ladder.json"));
    let levels = l["ladder"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 11);
    for lv in &levels[1..] {
        assert!(lv["min_increment"].as_f64().unwrap() >= -1e-9);
    }
}

#[test]
fn unknown_keys_warn() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&config("pde_linear.json"));
    cfg["future_option"] = serde_json::json!(true);
    cfg["solver"]["preconditioner"] = serde_json::json!("ilu");
    let p = write_config(dir.path(), "c.json", &cfg);
    let o = run_config("solve-pde", &p, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("future_option") && err.contains("solver.preconditioner"), "{err}");
}

#[test]
fn pure_ode_and_transport() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_config("solve-bsde", &config("bsde_pure_ode.json"), dir.path(), &[]).status.success());
    let j = read_json(&dir.path().join("pure_ode_bsde.json"));
    assert!((j["y0_mean"].as_f64().unwrap() - 2.0 / 3.0).abs() < 0.01);

    assert!(run_config("solve-bsde", &config("bsde_transport.json"), dir.path(), &[]).status.success());
    let j = read_json(&dir.path().join("transport_bsde.json"));
    // (0.7 + 1/2)^{-1}
    assert!((j["y0_mean"].as_f64().unwrap() - 1.0 / 1.2).abs() < 5e-3);
}

#[test]
fn brownian_bsde_json_fields_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = run_config("solve-bsde", &config("bsde_brownian.json"), d, &["--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let j = read_json(&a.join("brownian_g1_bsde.json"));
    for k in ["config", "y0_mean", "y0_stderr", "unexited_fraction", "per_level", "phi0", "diagnostics"] {
        assert!(j.get(k).is_some(), "missing {k}");
    }
    assert_eq!(j["config"]["seed"], 7);
    assert!(j["phi0"]["mean"].as_f64().unwrap() >= -3.0 * j["phi0"]["stderr"].as_f64().unwrap());
    let fa = std::fs::read(a.join("brownian_g1_bsde.json")).unwrap();
    let fb = std::fs::read(b.join("brownian_g1_bsde.json")).unwrap();
    assert_eq!(fa, fb);
    let (ma, mb) = (read_json(&a.join("brownian_g1_manifest.json")), read_json(&b.join("brownian_g1_manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["seed"], 7);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    for t in ["1", "3"] {
        let out = dir.path().join(t);
        let o = run_config("solve-bsde", &config("bsde_brownian.json"), &out, &["--threads", t]);
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("1/brownian_g1_bsde.json")).unwrap();
    let b = std::fs::read(dir.path().join("3/brownian_g1_bsde.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn verify_exit_codes() {
    let o = run(&["verify", "--suite", "medium"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["verify", "--suite", "full", "--check", "no_such_check"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let args = ["verify", "--suite", "full", "--check", "degenerate_sigma", "--check", "minimality_comparison", "--seed", "1"];
    let o1 = bin().args(args).arg("--out").arg(dir.path()).output().unwrap();
    let o2 = run(&args);
    assert_eq!(o1.status.code(), Some(0), "{}", String::from_utf8_lossy(&o1.stderr));
    assert_eq!(o1.stdout, o2.stdout);
    let text = String::from_utf8(o1.stdout).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l["verdict"] == "pass"));
    assert!(dir.path().join("verify_full_reports.jsonl").exists());
    assert!(String::from_utf8_lossy(&o1.stderr).contains("aggregate: PASS"));
}

#[test]
fn sweep_runs_each_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("sweep", &config("sweep_pde.json"), dir.path(), &["--command", "solve-pde"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let idx = read_json(&dir.path().join("sweep_index.json"));
    let idx = idx.as_array().unwrap();
    assert_eq!(idx.len(), 4);
    for (k, e) in idx.iter().enumerate() {
        let sub = dir.path().join(format!("sweep_{k:03}"));
        let m = read_json(&sub.join("sweep_manifest.json"));
        assert_eq!(m["files"].as_array().unwrap().len(), 2);
        let l = read_json(&sub.join("sweep_ladder.json"));
        assert_eq!(l["config"]["generator"]["q"], e["assignments"]["generator.q"]);
        assert!(l["config"].get("sweep").is_none());
    }
    let top = read_json(&dir.path().join("sweep_manifest.json"));
    assert_eq!(top["files"], serde_json::json!(["sweep_index.json"]));
}
