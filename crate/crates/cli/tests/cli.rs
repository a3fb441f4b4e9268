use std::fs;
use std::path::Path;
use std::process::Command;

fn ccp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ccp")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.in.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "plate": {"nx": 30, "ny": 60},
  "crack": {"max_steps": 6},
  "holes": [[30, 75, 8]]
}"#;

/// Steps table without the wall-clock column.
fn steps_without_timing(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ccp(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["path.csv", "fields.csv", "path.svg", "manifest.json", "config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(steps_without_timing(&a.join("steps.csv")), steps_without_timing(&b.join("steps.csv")));
    let path = fs::read_to_string(a.join("path.csv")).unwrap();
    assert!(path.starts_with("step,x_mm,y_mm\n"));
    assert_eq!(path.lines().count(), 1 + 2 + 6);
    assert!(fs::read_to_string(a.join("fields.csv")).unwrap().starts_with("node,x_mm,y_mm,ux_mm,uy_mm,von_mises_mpa\n"));

    // the echoed configuration reproduces the run
    let echo = a.join("config.json");
    let c = dir.path().join("c");
    assert!(ccp(&["simulate", "--config", echo.to_str().unwrap(), "--out", c.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(a.join("path.csv")).unwrap(), fs::read(c.join("path.csv")).unwrap());
}

#[test]
fn verify_reports_exact_reanalysis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"plate": {"nx": 30, "ny": 60}, "crack": {"max_steps": 8}}"#);
    let out = dir.path().join("v");
    let o = ccp(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("verify.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("step,disp_rel_err,stress_rel_err,t_full_ms,t_dur_ms"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[1] <= 1e-9 && r[2] <= 1e-8), "{table}");
}

#[test]
fn bad_configs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    for body in [r#"{"target_key_points": [[10, 60], [61, 60]]}"#, r#"{"crack": {"increment_mm": -1}}"#, r#"{"plate": {"nx": "x"}}"#] {
        let cfg = write_config(dir.path(), body);
        let o = ccp(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    }
}

#[test]
fn sample_train_and_surrogate_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
  "plate": {"nx": 30, "ny": 60},
  "crack": {"max_steps": 6},
  "record_fields": false,
  "target_key_points": [[13, 60], [16, 60.3]],
  "design_space": {"x_min": 14, "x_max": 56, "y_min": 64, "y_max": 100},
  "surrogate": {"n_train": 16, "n_test": 8, "epochs": 100},
  "pso": {"particles": 6, "max_generations": 4},
  "max_holes": 1
}"#,
    );
    let out = dir.path().join("run");
    let outs = out.to_str().unwrap();
    for cmd in ["sample", "train"] {
        let o = ccp(&[cmd, "--config", &cfg, "--out", outs]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let ds = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert!(ds.starts_with("x1_mm,y1_mm,r1_mm,fitness_mm,split\n"));
    assert_eq!(ds.lines().count(), 25);
    assert!(fs::read_to_string(out.join("model.txt")).unwrap().starts_with("ccp-bpnn 1\nlayers 3 5 5 1\n"));

    let o = ccp(&["optimize", "--config", &cfg, "--out", outs, "--inner", "bpnn-pso", "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(conv.starts_with("generation,gbest_mm,true_evals,surrogate_evals\n"));
    let timing: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    assert!(timing["modeling_s"].as_f64().unwrap() > 0.0);
    assert!(timing["optimization_s"].as_f64().unwrap() > 0.0);
    assert_eq!(timing["true_evals"], 25);
    assert!(out.join("best_design.csv").exists() && out.join("path.svg").exists());
}
