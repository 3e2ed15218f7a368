use std::path::Path;
use std::process::{Command, Output};

use driftbench::bench::RunManifest;

fn driftbench(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftbench"));
    cmd.args(args).env_remove("DRIFTBENCH_OUT");
    if let Some(p) = env_out {
        cmd.env("DRIFTBENCH_OUT", p);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FAST: &str = r#"{"epochs": 1, "batches_per_epoch": 6, "inner_steps": 2}"#;

#[test]
fn pipeline_from_data_to_plot_under_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("env-root");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, FAST).unwrap();

    ok(&driftbench(&["gen-data", "--variant", "s2", "--seed", "1", "--episodes", "10"], Some(&root)));
    let data = root.join("data/s2-seed-1.json");
    assert!(data.exists());

    let static_dir = dir.path().join("static");
    ok(&driftbench(
        &["train", "--variant", "static", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&static_dir)],
        Some(&root),
    ));
    let base = static_dir.join("model.json");
    // --out wins over the environment.
    assert!(base.exists() && !root.join("model.json").exists());

    ok(&driftbench(
        &["train", "--variant", "lora", "--dataset", s(&data), "--config", s(&cfg), "--base", s(&base)],
        Some(&root),
    ));
    let lora = root.join("model.json");
    assert!(lora.exists() && root.join("run_log.json").exists());

    let evals = dir.path().join("evals");
    for (model, label) in [(&base, "static"), (&lora, "lora")] {
        ok(&driftbench(
            &[
                "eval", "--model", s(model), "--dataset", s(&data), "--episodes", "3", "--config", s(&cfg),
                "--label", label, "--out", s(&evals.join(label)),
            ],
            None,
        ));
    }
    let table_dir = dir.path().join("table");
    ok(&driftbench(&["table", s(&evals), "--out", s(&table_dir)], None));
    let csv = std::fs::read_to_string(table_dir.join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");

    let svg = dir.path().join("ep.svg");
    ok(&driftbench(
        &["plot", "--model", s(&lora), "--dataset", s(&data), "--episode", "2", "--config", s(&cfg), "--out", s(&svg)],
        None,
    ));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.json");
    ok(&driftbench(&["gen-data", "--episodes", "4", "--out", s(&data)], None));
    let out = driftbench(&["train", "--variant", "lora", "--dataset", s(&data), "--out", s(dir.path())], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("base"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"beta": 0.0}"#).unwrap();
    let out = driftbench(&["train", "--variant", "dynamic", "--dataset", s(&data), "--config", s(&bad)], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn incomplete_table_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftbench(&["table", s(dir.path()), "--out", s(dir.path())], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn theory_probes_write_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    for probe in ["pl", "regret", "expressivity"] {
        ok(&driftbench(&["theory", "--probe", probe, "--out", s(dir.path())], None));
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{probe}.json"))).unwrap()).unwrap();
        assert!(json.is_object());
    }
    assert!(dir.path().join("pl-trace-0.csv").exists());
    assert!(dir.path().join("regret-trace-4096.csv").exists());
    assert!(dir.path().join("expressivity-trace.csv").exists());
}

#[test]
fn repro_writes_a_verifiable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"adapt": {FAST}, "eval_episodes": 2, "variants": [
            {{"label": "dynamic", "tag": "dynamic"}},
            {{"label": "dynamic*", "tag": "dynamic", "inner_steps": 3}},
            {{"label": "lora", "tag": "lora"}},
            {{"label": "static", "tag": "static"}}]}}"#),
    )
    .unwrap();
    let root = dir.path().join("out");
    let out = driftbench(
        &["repro", "--config", s(&cfg), "--datasets", "s1", "--seeds", "5", "--out", s(&root), "--check"],
        None,
    );
    // Too short a run to pass the ordering checks reliably; either outcome is a clean exit.
    assert!(matches!(out.status.code(), Some(0) | Some(4)), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")).count(), 4);
    let manifest = RunManifest::load(&root).unwrap();
    assert_eq!(manifest.runs.len(), 4);
    assert!(manifest.verify(&root).is_empty());
}
