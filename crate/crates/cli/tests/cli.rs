use serde_json::Value;
use std::process::{Command, Output};

fn wavediag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavediag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn enumerate_prints_counts() {
    for (m, count) in [(1, "1"), (2, "3"), (3, "12"), (4, "55")] {
        let o = wavediag(&["enumerate", "--m", &m.to_string()]);
        assert!(o.status.success());
        assert_eq!(stdout(&o).lines().next(), Some(count));
    }
}

#[test]
fn product_counts_and_empty_set() {
    let o = wavediag(&["enumerate", "--m", "1", "--n", "0"]);
    assert_eq!(stdout(&o), "diagrams 1\nfeynman 0\ntrue 0\n");
    let o = wavediag(&["enumerate", "--m", "1", "--n", "1"]);
    let text = stdout(&o);
    assert!(text.starts_with("diagrams 1\nfeynman 2\n"), "{text}");
}

#[test]
fn empty_feynman_set_evaluates_to_exact_zero() {
    let v = json(&wavediag(&["evaluate", "--m", "0", "--n", "1"]));
    let total = &v["result"]["total"];
    assert_eq!(total["method"], "exact");
    assert_eq!(total["value"], serde_json::json!([0.0, 0.0]));
    assert!(total["note"].as_str().unwrap().contains("empty"));
}

#[test]
fn golden_regression_passes() {
    let o = wavediag(&["regress84"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn exit_codes() {
    assert_eq!(wavediag(&["pairings", "--m", "1", "--n", "1", "--id", "x"]).status.code(), Some(2));
    assert_eq!(
        wavediag(&["evaluate", "--m", "1", "--n", "1", "--d", "2", "--s", "0"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        wavediag(&["evaluate", "--m", "1", "--n", "1", "--theta", "indicator", "--T", "inf"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(wavediag(&["evaluate", "--m", "1", "--n", "1", "--nu", "-1"]).status.code(), Some(2));
    assert_eq!(wavediag(&["bogus"]).status.code(), Some(2));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 9\nsamples = 4000\n[model]\nd = 2\nnu = 0.25\ngamma0 = [1.0]\n").unwrap();
    let c = cfg.to_str().unwrap();
    let v = json(&wavediag(&["--config", c, "evaluate", "--m", "1", "--n", "1", "--nu", "0.125"]));
    let run = &v["config"]["run"];
    assert_eq!(run["seed"], 9);
    assert_eq!(run["model"]["d"], 2);
    assert_eq!(run["model"]["nu"], 0.125);
    assert_eq!(run["model"]["gamma0"], serde_json::json!([1.0]));

    std::fs::write(&cfg, "colour = 3\n").unwrap();
    assert_eq!(
        wavediag(&["--config", c, "evaluate", "--m", "1", "--n", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for jobs in ["1", "4"] {
        let p = dir.path().join(format!("sweep-{jobs}.csv"));
        let o = wavediag(&[
            "--jobs",
            jobs,
            "--out",
            p.to_str().unwrap(),
            "sweep",
            "--m",
            "1",
            "--n",
            "1",
            "--samples",
            "40000",
            "--from",
            "2",
            "--to",
            "6",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(std::fs::read(&p).unwrap());
        let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join(format!("sweep-{jobs}.csv.meta.json"))).unwrap()).unwrap();
        assert!(meta["summary"]["fit"]["preferred"]["p"].is_number());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn cycles_validate_and_dot_renders() {
    let v = json(&wavediag(&["cycle", "--m", "2", "--n", "1", "--all"]));
    assert_eq!(v["result"].as_array().unwrap().len(), 20);
    let o = wavediag(&["export-dot", "--m", "1", "--n", "1", "--id", "1-1:0.0", "--kind", "feynman"]);
    let text = stdout(&o);
    assert!(text.starts_with("graph ") && text.trim_end().ends_with('}'));
}

#[test]
fn quotient_sweep_reports_log() {
    let o = wavediag(&["quotient", "--name", "antidiag-d1", "--samples", "100000"]);
    assert!(o.status.success());
    let meta: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(meta["summary"]["predicted"]["log_count"], 1);
    assert_eq!(meta["summary"]["fit"]["preferred"]["q"], 1);
    assert_eq!(stdout(&o).lines().count(), 8);
}
