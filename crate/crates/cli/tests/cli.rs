use std::path::Path;
use std::process::{Command, Output};

use pbsim_core::harness::{ExperimentConfig, ExperimentSummary};
use pbsim_core::quadratic::{dominant_magnitude, QuadMethodSpec};

fn pbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbsim"))
        .args(args)
        .env_remove("PBSIM_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pipeline_utilization_bound() {
    let o = pbsim(&["util", "--pipeline", "N=1", "S=50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0.009901");
    let o = pbsim(&["util", "--pipeline", "N=4", "S=4"]);
    assert_eq!(stdout(&o).trim(), "0.333333");
}

#[test]
fn bad_flags_exit_two() {
    assert_eq!(pbsim(&["util", "--pipeline", "N=1"]).status.code(), Some(2));
    assert_eq!(pbsim(&["util", "--pipeline", "N=x", "S=2"]).status.code(), Some(2));
    assert_eq!(pbsim(&["quad-heatmap", "--method", "adam"]).status.code(), Some(2));
    assert_eq!(pbsim(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_config_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = pbsim(&["--out", out.to_str().unwrap(), "pb-train", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(ExperimentConfig::toy()).unwrap();
    v["optimizer"]["nesterov"] = serde_json::json!(true);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let o = pbsim(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nesterov"), "{}", stderr(&o));
}

#[test]
fn heatmap_cells_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = pbsim(&["--out", out, "quad-heatmap", "--method", "gdm", "--delay", "1", "--m-points", "7", "--el-points", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("heatmap_gdm_d1.json")).unwrap()).unwrap();
    let method: QuadMethodSpec = serde_json::from_value(spec["method"].clone()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("heatmap_gdm_d1.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["m", "eta_lambda", "r_max", "stable"]);
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let m: f64 = rec[0].parse().unwrap();
        let el: f64 = rec[1].parse().unwrap();
        let r: f64 = rec[2].parse().unwrap();
        let expect = dominant_magnitude(&method.recurrence(m, el, 1).char_poly()).unwrap();
        assert_eq!(r, expect);
        assert_eq!(&rec[3], if expect < 1.0 { "true" } else { "false" });
        n += 1;
    }
    assert_eq!(n, 63);
}

#[test]
fn halflife_and_sweep_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = pbsim(&["--out", out, "quad-halflife", "--kappa", "100", "--m-points", "20", "--methods", "gdm,gsc", "--delays", "0,2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv::Reader::from_path(dir.path().join("halflife.csv")).unwrap().records().count();
    assert_eq!(rows, 4);
    let o = pbsim(&["--out", out, "quad-sweep", "--kappa", "100", "--m-points", "10", "--delay", "2", "--t-scales", "1,2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv::Reader::from_path(dir.path().join("quad_sweep.csv")).unwrap().records().count();
    assert_eq!(rows, 20);
    assert!(dir.path().join("quad_sweep.json").exists());
}

fn summary(dir: &Path) -> ExperimentSummary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn train_honors_seed_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pbsim"))
        .args(["delay-train", "--steps", "300", "--seed", "9", "--delay", "4", "--consistency", "consistent"])
        .env("PBSIM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(dir.path());
    assert_eq!(s.runs.len(), 1);
    assert_eq!(s.runs[0].seed, 9);
    assert_eq!(s.steps, 300);
    assert!(dir.path().join("uniform_delay-seed9.trace.csv").exists());
    let cfg = ExperimentConfig::load(&dir.path().join("config.json")).unwrap();
    assert_eq!(cfg.pipeline.uniform_delay, Some(4));
}

#[test]
fn pb_train_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = pbsim(&["--out", d.path().to_str().unwrap(), "pb-train", "--steps", "200", "--seed", "1"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(summary(a.path()), summary(b.path()));
    let trace = |d: &Path| std::fs::read(d.join("pipelined-seed1.trace.csv")).unwrap();
    assert_eq!(trace(a.path()), trace(b.path()));
}

#[test]
fn divergence_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::toy();
    cfg.optimizer.eta = Some(50.0);
    cfg.steps = 5000;
    cfg.seeds = vec![0];
    let path = dir.path().join("hot.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    let o = pbsim(&["--out", dir.path().to_str().unwrap(), "train", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(summary(dir.path()).diverged == 1);
}

#[test]
fn sweep_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = pbsim(&["--out", out, "sweep", "--steps", "100", "--seed", "0", "--param", "optimizer.momentum", "--values", "0.5", "0.9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    assert_eq!(csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap().records().count(), 2);
    let o = pbsim(&["--out", out, "sweep", "--param", "optimizer.nope", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
