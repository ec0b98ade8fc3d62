//! The command-line surface: config files, subcommands, flags, exit
//! codes, and the artifacts each command leaves behind.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn planrag(args: &[&str], extra: &[(&str, &Path)]) -> Output {
    let mut command = Command::new(env!("CARGO_BIN_EXE_planrag"));
    command.args(args);
    for (flag, path) in extra {
        command.arg(flag).arg(path);
    }
    command.output().expect("binary runs")
}

fn write_config(dir: &Path, out: &Path) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    let text = format!(
        r#"
output_dir = "{}"
concurrency = 2
base_seed = 7

strategies = ["one-retrieval", "one-retrieval-2x", "plan-var-b"]

[backends]
mode = "synthetic"

[backends.synthetic]
n_entities = 2
facts_per_entity = 4
generic_coverage = 1

[strategy.one-retrieval]
variant = "one_retrieval"
num_runs = 2

[strategy.one-retrieval-2x]
variant = "one_retrieval"
k_initial_multiplier = 2
num_runs = 2

[strategy.plan-var-b]
variant = "plan_var_b"
num_runs = 2
"#,
        out.display()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_subcommand_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &out);

    let output = planrag(&["run"], &[("--config", &config)]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let labels: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(labels, vec!["one-retrieval", "one-retrieval-2x", "plan-var-b"]);
    assert!(out.join("rows.jsonl").is_file());
    assert_eq!(fs::read_to_string(out.join("errors.log")).unwrap(), "");
    // 3 strategies x 2 entities x 2 runs
    let records: Vec<_> = walkdir::WalkDir::new(out.join("records"))
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .collect();
    assert_eq!(records.len(), 12);
}

#[test]
fn unknown_strategy_label_fails_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(
        &config,
        r#"
output_dir = "out"
strategies = ["mystery-method"]
[backends]
mode = "synthetic"
[strategy.one-retrieval]
variant = "one_retrieval"
"#,
    )
    .unwrap();
    let output = planrag(&["run"], &[("--config", &config)]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("mystery-method"), "stderr: {stderr}");
}

#[test]
fn ablate_subcommand_writes_paired_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &out);

    let output = planrag(&["ablate"], &[("--config", &config)]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for table in [
        "second_search.csv",
        "second_search.md",
        "unanswerable.csv",
        "outline.csv",
        "evidence_set.csv",
    ] {
        assert!(out.join("ablations").join(table).is_file(), "{table}");
    }
    let second = fs::read_to_string(out.join("ablations").join("second_search.csv")).unwrap();
    assert!(second.contains("plan-var-b (w/o 2nd search)"));
}

#[test]
fn score_subcommand_rescores_against_union() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &out);
    assert!(planrag(&["run"], &[("--config", &config)]).status.success());

    let rescore_out = dir.path().join("rescored");
    let output = planrag(
        &["score"],
        &[
            ("--config", &config),
            ("--records", &out.join("records").join("one-retrieval")),
            ("--union-with", &out.join("records").join("plan-var-b")),
            ("--out", &rescore_out),
        ],
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let micro_of = |csv: &str, label: &str| -> f64 {
        csv.lines()
            .skip(1)
            .find(|l| l.starts_with(label))
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .unwrap()
    };
    let original = fs::read_to_string(out.join("report.csv")).unwrap();
    let rescored = fs::read_to_string(rescore_out.join("rescore_report.csv")).unwrap();
    assert!(micro_of(&rescored, "rescored") >= micro_of(&original, "one-retrieval"));
}

#[test]
fn score_accepts_threshold_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &out);
    assert!(planrag(&["run"], &[("--config", &config)]).status.success());

    let rescore_out = dir.path().join("rescored");
    let output = Command::new(env!("CARGO_BIN_EXE_planrag"))
        .args(["score", "--nli-threshold", "0.9"])
        .arg("--config")
        .arg(&config)
        .arg("--records")
        .arg(out.join("records").join("one-retrieval"))
        .arg("--out")
        .arg(&rescore_out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(rescore_out.join("rescored_rows.jsonl").is_file());

    // out-of-range threshold is rejected
    let output = Command::new(env!("CARGO_BIN_EXE_planrag"))
        .args(["score", "--nli-threshold", "1.5"])
        .arg("--config")
        .arg(&config)
        .arg("--records")
        .arg(out.join("records").join("one-retrieval"))
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn offline_flag_forces_synthetic_backends() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = dir.path().join("live.toml");
    // http config pointing nowhere; --offline must ignore it entirely
    fs::write(
        &config,
        format!(
            r#"
dataset = "unused.txt"
output_dir = "{}"
strategies = ["one-retrieval"]

[backends]
mode = "http"

[backends.generation]
url = "http://127.0.0.1:1/generate"

[backends.entail]
url = "http://127.0.0.1:1/entail"

[backends.search]
url = "http://127.0.0.1:1/search"

[strategy.one-retrieval]
variant = "one_retrieval"
num_runs = 1
"#,
            out.display()
        ),
    )
    .unwrap();
    let output = planrag(&["run", "--offline"], &[("--config", &config)]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("report.csv").is_file());
}

#[test]
fn demo_seed_flag_changes_world() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(planrag(&["demo", "--seed", "1", "--entities", "2"], &[("--out", &out_a)])
        .status
        .success());
    assert!(planrag(&["demo", "--seed", "2", "--entities", "2"], &[("--out", &out_b)])
        .status
        .success());
    let rows_a = fs::read_to_string(out_a.join("rows.jsonl")).unwrap();
    let rows_b = fs::read_to_string(out_b.join("rows.jsonl")).unwrap();
    assert_ne!(rows_a, rows_b, "different seeds build different worlds");
}
