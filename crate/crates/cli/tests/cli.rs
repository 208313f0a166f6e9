// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn permachain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permachain"))
        .args(args)
        .env_remove("PERMACHAIN_SEED")
        .output()
        .expect("spawn permachain")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_inputs(dir: &Path) -> std::path::PathBuf {
    std::fs::write(
        dir.join("nodes.csv"),
        "NodeID,Authority,Location,Data,Byzantine\n\
         1,1,Portland,,0\n2,1,Minneapolis,,0\n3,1,Honolulu,,0\n4,1,Yokohama,,0\n5,0,Chicago,,0\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("load.json"),
        r#"{"days": [{"day": 1, "loads": {"5": 40}}, {"day": 2, "loads": {"1": 7}}]}"#,
    )
    .unwrap();
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{"protocol": "pbft", "block_capacity": 10, "nodes": "nodes.csv", "transactions": "load.json"}"#,
    )
    .unwrap();
    config
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path());
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = permachain(&[
            "--config",
            config.to_str().unwrap(),
            "--protocol",
            "poa",
            "--seed",
            "42",
            "--emit-csv",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("timeseries.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn overrides_are_echoed_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path());
    let out = dir.path().join("o");
    let o = permachain(&[
        "--config",
        config.to_str().unwrap(),
        "--protocol",
        "poet",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["protocol"], "poet");
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["config"]["block_capacity"], 10);
    assert!(!out.join("timeseries.csv").exists());
}

#[test]
fn env_seed_applies_only_when_nothing_else_sets_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path());
    let seed_of = |extra: &[&str], out: &str| {
        let out = dir.path().join(out);
        let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_permachain"))
            .args(&args)
            .env("PERMACHAIN_SEED", "77")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        report["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], "env"), 77);
    assert_eq!(seed_of(&["--seed", "3"], "flag"), 3);
}

#[test]
fn missing_config_fails_with_io_exit_code() {
    let o = permachain(&["--config", "definitely/missing.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));
}

#[test]
fn schema_violation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"block_capacity": 0}"#).unwrap();
    let o = permachain(&["--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("block_capacity"), "{}", stderr(&o));
}

#[test]
fn bad_byzantine_code_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_inputs(dir.path());
    std::fs::write(
        dir.path().join("nodes.csv"),
        "NodeID,Authority,Location,Data,Byzantine\n1,1,Portland,,3\n",
    )
    .unwrap();
    let o = permachain(&["--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 1"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_rejected() {
    let o = permachain(&["--frobnicate"]);
    assert!(!o.status.success());
}

#[test]
fn situation1_commits_nothing_on_benign_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let o = permachain(&["--scenario", "situation1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("benign_committed=0"), "{line}");
    assert!(line.contains("txs_committed=0/8868"), "{line}");
}

#[test]
fn lists_all_presets() {
    let o = permachain(&["--list-scenarios"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in [
        "situation1",
        "situation2",
        "situation3",
        "situation4",
        "pbft-viewchange",
        "poa-baseline",
        "poet-baseline",
    ] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn preset_files_match_their_documented_shape() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let load = |name: &str| -> permachain::Scenario {
        permachain::Scenario::from_json_str(
            &std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap(),
        )
        .unwrap()
    };
    use permachain::ByzantineType::*;
    let s1 = load("situation1");
    assert_eq!(s1.nodes.authorities().len(), 13);
    assert_eq!(s1.nodes.followers().len(), 2);
    assert_eq!(s1.schedule.total(), 8868);
    let count = |s: &permachain::Scenario, t| s.nodes.nodes.iter().filter(|n| n.byzantine == t).count();
    assert_eq!(count(&s1, Active), 5);
    assert_eq!(count(&s1, Honest), 10);
    assert_eq!(count(&load("situation3"), Passive), 4);
    let poa = load("poa-baseline");
    assert_eq!(poa.nodes.nodes.len(), 12);
    assert_eq!(poa.nodes.byzantine_count(), 0);
    assert_eq!(poa.nodes.nodes[0].location, "Portland");
    assert_eq!(poa.nodes.nodes[11].location, "Taipei");
}
