use std::path::Path;
use std::process::{Command, Output};

use dnnate::dgp::{generate, DgpConfig};
use dnnate::ingest::save_csv;

const SMALL: &[&str] = &[
    "--set", "dgp.p=5",
    "--set", "experiment.n=50",
    "--set", "experiment.c=1",
    "--set", "experiment.replications=2",
    "--set", "outcome.hidden=[8]",
    "--set", "outcome.epochs=5",
    "--set", "propensity.hidden=[4]",
    "--set", "propensity.epochs=5",
];

fn dnnate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnnate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = dnnate(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    o
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn export_dgp(path: &Path, n: usize, p: usize) {
    let d = generate(&DgpConfig {
        n,
        p,
        seed: 11,
        ..DgpConfig::default()
    })
    .unwrap();
    save_csv(&d, path).unwrap();
}

#[test]
fn simulate_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate_small(dir.path(), &[]);
    let text = stdout(&o);
    assert!(text.starts_with("n1,estimator,activation,mean,median,sd,mse,coverage,ks_p\n"), "{text}");

    let aggregate = String::from_utf8(read(dir.path(), "aggregate.csv")).unwrap();
    let rows: Vec<&str> = aggregate.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "{aggregate}");
    assert!(rows[1].starts_with("50,split,sigmoid,"));
    assert!(rows[2].starts_with("50,dr_split,sigmoid,"));
    assert!(aggregate.contains("# config_hash: "));

    let jsonl = String::from_utf8(read(dir.path(), "replications.jsonl")).unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 2);
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["replication"], i);
        assert_eq!(v["results"].as_array().unwrap().len(), 2);
    }

    let config = String::from_utf8(read(dir.path(), "config.toml")).unwrap();
    assert!(config.contains("experiment.n = 50"));
    for name in ["kde_split.csv", "kde_dr_split.csv"] {
        let kde = String::from_utf8(read(dir.path(), name)).unwrap();
        let rows: Vec<&str> = kde.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "x,density");
        assert_eq!(rows.len(), 257);
    }
}

#[test]
fn saved_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_small(a.path(), &["--seed", "4"]);
    let saved = a.path().join("config.toml");
    let o = dnnate(&["simulate", "--config", saved.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["aggregate.csv", "replications.jsonl", "config.toml"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn seed_changes_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_small(a.path(), &["--seed", "1"]);
    simulate_small(b.path(), &["--seed", "2"]);
    assert_ne!(read(a.path(), "replications.jsonl"), read(b.path(), "replications.jsonl"));
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_small(a.path(), &["--threads", "1"]);
    simulate_small(b.path(), &["--threads", "3"]);
    for name in ["aggregate.csv", "replications.jsonl", "kde_split.csv", "kde_dr_split.csv", "config.toml"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn oracle_simulation_labels_activation() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate_small(
        dir.path(),
        &["--set", "experiment.nuisance=\"oracle\"", "--set", "experiment.estimators=[\"dr_split\"]"],
    );
    assert!(stdout(&o).contains("50,dr_split,oracle,"), "{}", stdout(&o));
}

#[test]
fn estimate_single_repeat_prints_full_results() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    export_dgp(&csv, 300, 4);
    let out = dir.path().join("out");
    let o = dnnate(&[
        "estimate",
        "--data", csv.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "--repeats", "1",
        "--fractions", "0.5",
        "--set", "outcome.hidden=[8]",
        "--set", "outcome.epochs=5",
        "--set", "propensity.hidden=[4]",
        "--set", "propensity.epochs=5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["data"]["n"], 300);
    assert_eq!(doc["data"]["p"], 4);
    let fraction = &doc["fractions"][0];
    assert_eq!(fraction["n_inference"], 150);
    assert_eq!(fraction["n_train"], 150);
    let estimators = fraction["estimators"].as_array().unwrap();
    assert_eq!(estimators.len(), 2);
    for e in estimators {
        let r = &e["results"][0];
        for field in ["method", "estimate", "variance", "n_inference", "ci_level", "ci_lo", "ci_hi", "flags"] {
            assert!(!r[field].is_null(), "missing {field} in {r}");
        }
        assert!(r["ci_lo"].as_f64().unwrap() <= r["ci_hi"].as_f64().unwrap());
        assert_eq!(e["median"], r["estimate"]);
    }
    let saved: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(saved, doc);
}

#[test]
fn estimate_with_many_repeats_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    export_dgp(&csv, 200, 3);
    let o = dnnate(&[
        "estimate",
        "--data", csv.to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
        "--repeats", "3",
        "--fractions", "0.2,0.4",
        "--set", "outcome.hidden=[4]",
        "--set", "outcome.epochs=2",
        "--set", "estimate.estimators=[\"split\"]",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let fractions = doc["fractions"].as_array().unwrap();
    assert_eq!(fractions.len(), 2);
    assert_eq!(fractions[0]["n_inference"], 40);
    assert_eq!(fractions[1]["n_inference"], 80);
    assert!(fractions[0]["estimators"][0].get("results").is_none());
    assert!(fractions[0]["estimators"][0]["robust_sd"].as_f64().unwrap() >= 0.0);
}

#[test]
fn missing_treatment_column_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    export_dgp(&csv, 50, 3);
    let o = dnnate(&[
        "estimate",
        "--data", csv.to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
        "--set", "data.treatment_column=\"treated\"",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("treated"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn missing_data_file_is_an_input_error() {
    let o = dnnate(&["estimate", "--data", "/nonexistent/data.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/data.csv"));
}

#[test]
fn unknown_keys_are_rejected() {
    let o = dnnate(&["config", "--set", "outcome.epoch=5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "dgp.q = 3\n").unwrap();
    let o = dnnate(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_values_are_rejected_before_running() {
    let o = dnnate(&["simulate", "--set", "experiment.c=0", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = dnnate(&["simulate", "--ci-level", "1.5", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn help_documents_every_key() {
    let o = dnnate(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = stdout(&o);
    let dump = stdout(&dnnate(&["config"]));
    let keys: Vec<&str> = dump
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(" = ").next().unwrap())
        .collect();
    assert!(keys.len() > 40);
    for key in keys {
        assert!(help.contains(key), "--help does not mention {key}");
    }
}

#[test]
fn config_round_trips_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let first = dnnate(&["config", "--set", "outcome.hidden=[7, 3]", "--seed", "9"]);
    assert_eq!(first.status.code(), Some(0));
    let path = dir.path().join("c.toml");
    std::fs::write(&path, &first.stdout).unwrap();
    let second = dnnate(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&second).contains("run.seed = 9"));
}

#[test]
fn check_runs_only_selected_suites() {
    let o = dnnate(&["check", "--only", "formulas,adam-golden"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("PASS formulas:"));
    assert!(lines[1].starts_with("PASS adam-golden:"));

    let o = dnnate(&["check", "--only", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn broken_adam_fails_only_its_suite() {
    let o = dnnate(&["check", "--only", "adam-golden,gradient", "--adam-beta1", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL adam-golden:"), "{text}");
    assert!(text.contains("PASS gradient:"), "{text}");
}
