use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tourney(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tourney"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|r| r.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn body(dir: &Path, prefix: &str) -> Value {
    let name = files(dir)
        .into_iter()
        .find(|f| f.starts_with(prefix) && f.ends_with(".json") && !f.ends_with(".meta.json"))
        .unwrap();
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

/// Every non-meta file in `dir`, keyed by name.
fn bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    files(dir)
        .into_iter()
        .filter(|f| !f.ends_with(".meta.json"))
        .map(|f| {
            let b = fs::read(dir.join(&f)).unwrap();
            (f, b)
        })
        .collect()
}

#[test]
fn solve_then_verify_on_uniform_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("ta_uniform.json");
    let c = cfg.to_str().unwrap();
    let o = tourney(&["solve", "--config", c], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = tourney(&["verify", "--config", c], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let names = files(tmp.path());
    let csv = names.iter().find(|f| f.starts_with("verify_") && f.ends_with("_bid.csv")).unwrap();
    let text = fs::read_to_string(tmp.path().join(csv)).unwrap();
    assert!(text.starts_with("v,b,b_prime\n") && !text.contains('\r'));
    let doc = body(tmp.path(), "verify_");
    assert!(doc["result"]["best_response"]["max_regret"].as_f64().unwrap() <= 1e-4);
    assert_eq!(doc["result"]["overbidding_violations"], 0);
    assert_eq!(doc["result"]["cross_check"]["agree"], true);
    let hash = doc["config_hash"].as_str().unwrap();
    assert!(names.iter().all(|f| f.contains(hash) || f.starts_with("solve_")));
    assert!(names.iter().all(|f| f.contains("_s7")));
}

#[test]
fn sweep_p6_default_gap_shrinks() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tourney(&["sweep", "--prop", "P6"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = files(tmp.path()).into_iter().find(|f| f.ends_with("_table.csv")).unwrap();
    let text = fs::read_to_string(tmp.path().join(csv)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "l,R_mean,R_se,S_mean,S_se,target,gap,solver_method,max_regret");
    let gaps: Vec<f64> = lines.map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert_eq!(gaps.len(), 8);
    assert!(gaps[4..].windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn reruns_and_thread_counts_give_identical_bodies() {
    let cfg = configs().join("sweep_p10.json");
    let c = cfg.to_str().unwrap();
    let disc = configs().join("discrete.json");
    let d = disc.to_str().unwrap();
    let run = |threads: &str| {
        let tmp = tempfile::tempdir().unwrap();
        for args in [
            vec!["sweep", "--config", c],
            vec!["simulate", "--config", d],
            vec!["simulate", "--n", "50000"],
            vec!["oa", "--n", "50000"],
        ] {
            let mut a = args.clone();
            a.extend(["--threads", threads]);
            let o = tourney(&a, tmp.path());
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let b = bodies(tmp.path());
        (tmp, b)
    };
    let (_a, one) = run("1");
    let (_b, eight) = run("8");
    let (_c, again) = run("8");
    assert_eq!(one.len(), 6);
    assert_eq!(one, eight);
    assert_eq!(eight, again);
}

#[test]
fn discrete_simulation_reports_pk_and_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("discrete.json");
    let o = tourney(&["simulate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let doc = body(tmp.path(), "simulate_");
    let r = &doc["result"]["revenue"];
    let (mean, se) = (r["mean"].as_f64().unwrap(), r["se"].as_f64().unwrap());
    assert!((mean - 1.5).abs() <= 3.0 * se, "{mean} ± {se}");
    let draws = files(tmp.path()).into_iter().find(|f| f.ends_with("_draws.csv")).unwrap();
    assert_eq!(fs::read_to_string(tmp.path().join(draws)).unwrap().lines().count(), 21);
}

#[test]
fn invalid_config_lists_every_violation_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"version": 1, "N": 1,
            "F": {"kind": "uniform", "params": [], "support": [0, 1]},
            "strong": {"kind": "uniform", "params": [], "support": [0, 2]},
            "mechanism": {"kind": "SA_RESERVE", "reserve": 0.5}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = tourney(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    let msgs = err["messages"].as_array().unwrap();
    assert!(msgs.len() >= 2, "{msgs:?}");
    assert!(msgs.iter().any(|m| m.as_str().unwrap().contains("r >= v̄")));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_schema_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"version": 1, "N": 2, "speed": "fast"}"#).unwrap();
    let o = tourney(&["solve", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "schema");
    assert!(err["messages"][0].as_str().unwrap().starts_with("speed"));
}

#[test]
fn solver_failure_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("pic.json");
    fs::write(
        &cfg,
        r#"{"version": 1, "N": 2,
            "F": {"kind": "uniform", "params": [], "support": [0, 1]},
            "strong": {"kind": "piecewise-linear-density", "params": [0, 0.2, 2, 0.8], "support": [0, 2]},
            "solver": {"method": "picard", "picard_max_iter": 2}}"#,
    )
    .unwrap();
    let o = tourney(&["solve", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn coarse_schedule_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("bump_coarse_picard.json");
    let o = tourney(&["verify", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(4));
    let doc = body(tmp.path(), "verify_");
    assert_eq!(doc["result"]["passed"], false);
}

#[test]
fn family_checks_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tourney(&["check-family", "--family", "fast_drain"], tmp.path());
    assert!(o.status.success());
    let doc = body(tmp.path(), "check-family_");
    assert_eq!(doc["result"]["drains_slowly"], false);
    let o = tourney(&["sweep", "--prop", "P7", "--L", "6"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = tourney(&["sweep", "--prop", "P6", "--family", "fast_drain"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = tourney(&["report"], tmp.path());
    assert!(o.status.success());
    let doc = body(tmp.path(), "report_");
    assert_eq!(doc["result"]["runs"].as_array().unwrap().len(), 2);
}
