//! Integration tests for the command-line interface: exit codes, output
//! schemas, and cross-command flows.

use std::path::Path;
use std::process::Command;

fn veriseek() -> Command {
    Command::new(env!("CARGO_BIN_EXE_veriseek"))
}

/// Writes a small synthetic task plus a fast training config into `dir`.
fn write_small_task(dir: &Path) -> veriseek::harness::RunConfig {
    let task = veriseek::synthetic::SyntheticTaskConfig {
        pool_size: 120,
        holdout_size: 30,
        corpus_size: 60,
        seed: 5,
        ..Default::default()
    };
    let mut config = veriseek::harness::write_synthetic_task(dir, &task).unwrap();
    config.curriculum.budget = 40;
    config.grpo.epochs_per_iteration = 6;
    config.max_iterations = 1;
    std::fs::write(
        dir.join("run.toml"),
        toml::to_string_pretty(&config).unwrap(),
    )
    .unwrap();
    config
}

#[test]
fn usage_errors_exit_two() {
    let out = veriseek().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = veriseek().args(["eval", "search"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing required --benchmark");
}

#[test]
fn runtime_failures_exit_one_with_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path());
    let out = veriseek()
        .args(["rollout", "run"])
        .args(["--pool", "/nonexistent/pool.jsonl"])
        .args(["--config", dir.path().join("run.toml").to_str().unwrap()])
        .args(["--out", dir.path().join("out.jsonl").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or("");
    let parsed: serde_json::Value = serde_json::from_str(line).expect("structured error line");
    assert!(parsed["error"].is_string());
}

#[test]
fn grpo_check_passes_on_fresh_checkout() {
    let out = veriseek()
        .args(["grpo", "check", "--seed", "17"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gradient check passed"));
}

#[test]
fn eval_search_n1_strategies_coincide() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path());
    let report_path = dir.path().join("report.json");
    let out = veriseek()
        .args(["eval", "search"])
        .args([
            "--benchmark",
            dir.path().join("benchmark.jsonl").to_str().unwrap(),
        ])
        .args(["--strategy", "all", "--n", "1"])
        .args(["--report", report_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let accuracy = report["strategy_accuracy"].as_object().unwrap();
    let values: Vec<f64> = accuracy.values().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(values.len(), 4);
    assert!(
        values.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12),
        "{values:?}"
    );
    assert_eq!(report["skipped"], 0);
}

#[test]
fn index_build_then_rollout_run_schema() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path());

    let out = veriseek()
        .args(["index", "build"])
        .args([
            "--corpus",
            dir.path().join("corpus.jsonl").to_str().unwrap(),
        ])
        .args(["--out", dir.path().join("idx").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("idx/index.json").exists());

    let rollouts_path = dir.path().join("rollouts.jsonl");
    let out = veriseek()
        .args(["rollout", "run"])
        .args(["--pool", dir.path().join("holdout.jsonl").to_str().unwrap()])
        .args(["--config", dir.path().join("run.toml").to_str().unwrap()])
        .args(["--out", rollouts_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Validate every line against the documented schema.
    let text = std::fs::read_to_string(&rollouts_path).unwrap();
    let mut lines = 0;
    for line in text.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "instance_id",
            "rollout_index",
            "raw_text",
            "reward",
            "terminal",
            "retrieval_calls",
        ] {
            assert!(record.get(key).is_some(), "missing {key} in {line}");
        }
        for key in ["correctness", "format", "total"] {
            assert!(record["reward"].get(key).and_then(|v| v.as_f64()).is_some());
        }
        assert!(record["terminal"].is_boolean());
        lines += 1;
    }
    // 30 holdout instances × group size 8.
    assert_eq!(lines, 30 * 8);
}

#[test]
fn curriculum_filter_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path());
    let manifest_path = dir.path().join("manifest.json");
    let out = veriseek()
        .args(["curriculum", "filter"])
        .args(["--pool", dir.path().join("pool.jsonl").to_str().unwrap()])
        .args(["--config", dir.path().join("run.toml").to_str().unwrap()])
        .args(["--out", manifest_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    for key in [
        "iteration",
        "seed",
        "config",
        "config_hash",
        "retained_instance_ids",
        "stats",
    ] {
        assert!(manifest.get(key).is_some(), "missing {key}");
    }
    let stats = &manifest["stats"];
    let examined = stats["examined"].as_u64().unwrap();
    let partition = stats["retained"].as_u64().unwrap()
        + stats["all_correct"].as_u64().unwrap()
        + stats["all_wrong"].as_u64().unwrap()
        + stats["degenerate_other"].as_u64().unwrap();
    assert_eq!(examined, partition);
}

#[test]
fn train_iterate_runs_and_is_rerun_stable() {
    let dir = tempfile::tempdir().unwrap();
    write_small_task(dir.path());
    let config_arg = dir.path().join("run.toml");

    let out = veriseek()
        .args(["train", "iterate", "--config", config_arg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records_path = dir.path().join("runs/records.json");
    let first = std::fs::read(&records_path).unwrap();

    // A rerun over a completed run changes nothing.
    let out = veriseek()
        .args(["train", "iterate", "--config", config_arg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("resuming"));
    assert_eq!(std::fs::read(&records_path).unwrap(), first);
}
