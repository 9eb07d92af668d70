use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
[topology]
n_servers = 1
n_vms = 9

[traffic]
duration_s = 7200

[seed]
value = 11

[[attackers.groups]]
kind = "blackhole"
nodes = ["v8"]

[[attackers.groups]]
kind = "greyhole"
nodes = ["v9"]
drop_prob = 0.6

[detection]
rule = "rr_only"
collusion_phase = false
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_er-sentinel"));
    c.env_remove("ER_SENTINEL_OUT");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    ok(&run(&["simulate", "--scenario", "small.toml", "--out", "run"], dir.path()));
    dir
}

fn score(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("score.json")).unwrap()).unwrap()
}

#[test]
fn perfect_verdicts_score_one() {
    let dir = setup();
    let d = dir.path();
    let labels: Value = serde_json::from_str(&std::fs::read_to_string(d.join("run/labels.json")).unwrap()).unwrap();
    let mut lines = String::new();
    for (node, label) in labels.as_object().unwrap() {
        let bad = label != "honest";
        lines.push_str(&format!(
            "{{\"node\":\"{node}\",\"window_id\":0,\"classification\":\"{}\",\"rr\":1.0,\"sr\":0.0,\"reputation\":1.0,\"blacklisted\":{bad}}}\n",
            if bad { "individual_attacker" } else { "benign" }
        ));
    }
    std::fs::write(d.join("perfect.jsonl"), lines).unwrap();
    ok(&run(&["evaluate", "--verdicts", "perfect.jsonl", "--labels", "run/labels.json", "--out", "eval"], d));
    let s = score(&d.join("eval"));
    assert_eq!(
        (s["precision"].as_f64(), s["recall"].as_f64(), s["f_score"].as_f64()),
        (Some(1.0), Some(1.0), Some(1.0))
    );
    assert_eq!(s["tp"], 2);
}

#[test]
fn disjoint_node_sets_fail() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(
        d.join("other.jsonl"),
        "{\"node\":\"v99\",\"window_id\":0,\"classification\":\"benign\",\"rr\":1.0,\"sr\":0.0,\"reputation\":1.0,\"blacklisted\":false}\n",
    )
    .unwrap();
    let out = run(&["evaluate", "--verdicts", "other.jsonl", "--labels", "run/labels.json", "--out", "eval"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("v99"));
}

#[test]
fn table_one_sweep_writes_three_rows() {
    let dir = setup();
    let d = dir.path();
    ok(&run(&["sweep", "--scenario", "small.toml", "--out", "run"], d));
    let csv = std::fs::read_to_string(d.join("run/sweep_rr_individual.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "threshold,precision,recall,f_score");
    let thresholds: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(thresholds, ["0.4375", "0.5375", "0.5875"]);
}

#[test]
fn sweep_equals_chained_detect_and_evaluate() {
    let dir = setup();
    let d = dir.path();
    ok(&run(&["sweep", "--scenario", "small.toml", "--out", "run", "--jobs", "3"], d));
    let csv = std::fs::read_to_string(d.join("run/sweep_rr_individual.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let t = row.split(',').next().unwrap();
        let out = format!("chain-{t}");
        let trace = "run/trace.jsonl";
        ok(&run(&["detect", "--scenario", "small.toml", "--trace", trace, "--rr-threshold", t, "--out", &out], d));
        ok(&run(
            &["evaluate", "--verdicts", &format!("{out}/verdicts.jsonl"), "--labels", "run/labels.json", "--out", &out],
            d,
        ));
        let s = score(&d.join(&out));
        let chained = format!(
            "{t},{:.3},{:.3},{:.3}",
            s["precision"].as_f64().unwrap(),
            s["recall"].as_f64().unwrap(),
            s["f_score"].as_f64().unwrap()
        );
        assert_eq!(chained, row);
    }
}

#[test]
fn malformed_trace_line_is_a_data_error() {
    let dir = setup();
    let d = dir.path();
    let trace = std::fs::read_to_string(d.join("run/trace.jsonl")).unwrap();
    let mut lines: Vec<&str> = trace.lines().collect();
    lines[16] = "{\"type\":\"er\",\"t_ms\":";
    std::fs::write(d.join("run/bad.jsonl"), lines.join("\n")).unwrap();
    let out = run(&["detect", "--trace", "run/bad.jsonl", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:17:"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("zero.toml"), "[traffic]\nduration_s = 0\n").unwrap();
    let out = run(&["simulate", "--scenario", "zero.toml", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("traffic.duration"));

    std::fs::write(d.join("typo.toml"), "[trafic]\n").unwrap();
    assert_eq!(run(&["simulate", "--scenario", "typo.toml"], d).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--jobs", "0"], d).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--bogus"], d).status.code(), Some(1));
    assert_eq!(run(&["detect", "--trace", "missing.jsonl"], d).status.code(), Some(2));
}

#[test]
fn detect_ignores_labels() {
    let dir = setup();
    let d = dir.path();
    ok(&run(&["detect", "--scenario", "small.toml", "--trace", "run/trace.jsonl", "--out", "plain"], d));
    let out = run(
        &[
            "detect",
            "--scenario",
            "small.toml",
            "--trace",
            "run/trace.jsonl",
            "--labels",
            "run/labels.json",
            "--out",
            "with",
        ],
        d,
    );
    ok(&out);
    let a = std::fs::read(d.join("plain/verdicts.jsonl")).unwrap();
    let b = std::fs::read(d.join("with/verdicts.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_summary_and_repeatability() {
    let dir = setup();
    let d = dir.path();
    let stdout = ok(&run(&["simulate", "--scenario", "small.toml", "--out", "again"], d));
    assert!(stdout.contains("simulated 10 nodes"), "{stdout}");
    assert_eq!(std::fs::read(d.join("run/trace.jsonl")).unwrap(), std::fs::read(d.join("again/trace.jsonl")).unwrap());

    ok(&run(&["simulate", "--scenario", "small.toml", "--out", "seeded", "--seed", "12"], d));
    assert_ne!(std::fs::read(d.join("run/trace.jsonl")).unwrap(), std::fs::read(d.join("seeded/trace.jsonl")).unwrap());
}

#[test]
fn output_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tiny.toml"), "[topology]\nn_vms = 3\n[traffic]\nduration_s = 600\n").unwrap();
    let out = bin()
        .args(["simulate", "--scenario", "tiny.toml"])
        .env("ER_SENTINEL_OUT", "from-env")
        .current_dir(d)
        .output()
        .unwrap();
    ok(&out);
    assert!(d.join("from-env/trace.jsonl").exists());

    std::fs::write(
        d.join("dir.toml"),
        "[topology]\nn_vms = 3\n[traffic]\nduration_s = 600\n[output]\ndir = \"from-file\"\n",
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--scenario", "dir.toml"])
        .env("ER_SENTINEL_OUT", "from-env")
        .current_dir(d)
        .output()
        .unwrap();
    ok(&out);
    assert!(d.join("from-file/trace.jsonl").exists());
}

#[test]
fn run_all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    ok(&run(&["run-all", "--scenario", "small.toml", "--out", "all"], d));
    for f in [
        "trace.jsonl",
        "labels.json",
        "keyring.json",
        "verdicts.jsonl",
        "score.json",
        "summary.csv",
        "sweep_rr_individual.csv",
        "sweep_sr_individual.csv",
        "sweep_rr_collusion.csv",
        "sweep_sr_collusion.csv",
    ] {
        assert!(d.join("all").join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(d.join("all/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}
