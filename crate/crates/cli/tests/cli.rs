//! End-to-end runs of the `deeptravel` binary: world generation, the data
//! pipeline, training with ablations, evaluation, and inspection.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deeptravel"))
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env_remove("DEEPTRAVEL_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn digest_line(output: &Output) -> String {
    stdout(output)
        .lines()
        .find(|l| l.starts_with("digest "))
        .expect("digest line")
        .to_string()
}

fn gen_world(dir: &Path, seed: u64) -> PathBuf {
    let world = dir.join(format!("world-{seed}.jsonl"));
    let output = run(&[
        "gen-world",
        "--seed",
        &seed.to_string(),
        "--cities",
        "4",
        "--days",
        "15",
        "--out",
        world.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    world
}

/// Small data pipeline shared by the train/eval/inspect tests.
fn gen_data(dir: &Path, world: &Path) -> PathBuf {
    let out = dir.join("data");
    let output = run(&[
        "gen-data",
        "--world",
        world.to_str().unwrap(),
        "--splits",
        "bench=unconstrained:2/0/0",
        "--probe",
        "oracle",
        "--probe-samples",
        "2",
        "--date-offsets",
        "2",
        "--trip-lengths",
        "1",
        "--train-count",
        "6",
        "--val-count",
        "2",
        "--teacher-count",
        "6",
        "--max-constrained-pool",
        "150",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    out
}

fn count_lines(path: &Path) -> usize {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
}

#[test]
fn gen_world_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&[
        "gen-world",
        "--seed",
        "7",
        "--cities",
        "4",
        "--days",
        "10",
        "--out",
        dir.path().join("a.jsonl").to_str().unwrap(),
    ]);
    let second = run(&[
        "gen-world",
        "--seed",
        "7",
        "--cities",
        "4",
        "--days",
        "10",
        "--out",
        dir.path().join("b.jsonl").to_str().unwrap(),
    ]);
    let third = run(&[
        "gen-world",
        "--seed",
        "8",
        "--cities",
        "4",
        "--days",
        "10",
        "--out",
        dir.path().join("c.jsonl").to_str().unwrap(),
    ]);
    assert!(first.status.success());
    assert_eq!(digest_line(&first), digest_line(&second));
    assert_ne!(digest_line(&first), digest_line(&third));
}

#[test]
fn gen_world_missing_out_is_usage_error() {
    let output = run(&["gen-world", "--seed", "7"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn gen_world_zero_cities_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "gen-world",
        "--cities",
        "0",
        "--out",
        dir.path().join("w.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("city count"));
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let flagged = run(&[
        "gen-world",
        "--seed",
        "42",
        "--cities",
        "4",
        "--days",
        "10",
        "--out",
        dir.path().join("a.jsonl").to_str().unwrap(),
    ]);
    let env = bin()
        .args([
            "gen-world",
            "--seed",
            "7",
            "--cities",
            "4",
            "--days",
            "10",
            "--out",
            dir.path().join("b.jsonl").to_str().unwrap(),
        ])
        .env("DEEPTRAVEL_SEED", "42")
        .output()
        .unwrap();
    assert!(env.status.success(), "{}", stderr(&env));
    assert_eq!(digest_line(&flagged), digest_line(&env));
    assert!(stdout(&env).contains("seed 42"));
}

#[test]
fn gen_data_writes_exact_counts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(dir.path(), 7);
    let data = gen_data(dir.path(), &world);

    assert_eq!(count_lines(&data.join("bench.jsonl")), 2);
    assert_eq!(count_lines(&data.join("train.jsonl")), 6);
    assert_eq!(count_lines(&data.join("validation.jsonl")), 2);
    assert!(data.join("teacher.jsonl").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["counts"]["bench"], 2);
    assert_eq!(manifest["counts"]["train"], 6);
    assert!(manifest["world_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn gen_data_empty_spec_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(dir.path(), 7);
    let out = dir.path().join("empty");
    let output = run(&[
        "gen-data",
        "--world",
        world.to_str().unwrap(),
        "--splits",
        "",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(!out.exists());
}

#[test]
fn gen_data_duplicate_split_names_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(dir.path(), 7);
    let output = run(&[
        "gen-data",
        "--world",
        world.to_str().unwrap(),
        "--splits",
        "x=unconstrained:1/0/0,x=constrained:1/0/0",
        "--out-dir",
        dir.path().join("dup").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("duplicate split name"));
}

#[test]
fn train_eval_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(dir.path(), 7);
    let data = gen_data(dir.path(), &world);

    // Train briefly with a cold start.
    let out = dir.path().join("run");
    let output = run(&[
        "train",
        "--world",
        world.to_str().unwrap(),
        "--data",
        data.join("train.jsonl").to_str().unwrap(),
        "--cold-start",
        data.join("teacher.jsonl").to_str().unwrap(),
        "--set",
        "total_steps=4",
        "--set",
        "batch_size=4",
        "--set",
        "group_size=4",
        "--set",
        "checkpoint_every=2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("cold start: cloned"));
    assert_eq!(count_lines(&out.join("metrics.jsonl")), 4);
    assert_eq!(count_lines(&out.join("metrics.csv")), 5); // header + 4 rows
    assert!(out.join("checkpoint-00002.json").exists());
    assert!(out.join("checkpoint-00004.json").exists());

    // Evaluate the trained parameters against the benchmark split.
    let report = dir.path().join("report.json");
    let output = run(&[
        "eval",
        "--params",
        out.join("params.json").to_str().unwrap(),
        "--world",
        world.to_str().unwrap(),
        "--benchmark",
        data.join("bench.jsonl").to_str().unwrap(),
        "--benchmark",
        data.join("validation.jsonl").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("final pass rate"));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed["overall"]["total"].as_u64().unwrap() >= 4);

    // The cold-started policy should beat fresh zero parameters, which
    // answer immediately and score zero.
    let fresh = dir.path().join("fresh.json");
    deeptravel_core::policy::PolicyParams::default()
        .save(&fresh)
        .unwrap();
    let output = run(&[
        "eval",
        "--params",
        fresh.to_str().unwrap(),
        "--world",
        world.to_str().unwrap(),
        "--benchmark",
        data.join("bench.jsonl").to_str().unwrap(),
        "--report",
        dir.path().join("fresh-report.json").to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let fresh_report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("fresh-report.json")).unwrap(),
    )
    .unwrap();
    let trained_rate = parsed["overall"]["pass_rate"].as_f64().unwrap();
    let fresh_rate = fresh_report["overall"]["pass_rate"].as_f64().unwrap();
    assert!(
        trained_rate >= fresh_rate,
        "trained {trained_rate} should not lose to untrained {fresh_rate}"
    );

    // Inspect the first distilled teacher trace: stored reward is 1.
    let output = run(&[
        "inspect",
        "--trajectory",
        data.join("teacher.jsonl").to_str().unwrap(),
        "--index",
        "0",
        "--queries",
        data.join("teacher_queries.jsonl").to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("stored reward 1"), "{text}");
    assert!(text.contains("reward 1"), "{text}");

    // Out-of-range index is a runtime error.
    let output = run(&[
        "inspect",
        "--trajectory",
        data.join("teacher.jsonl").to_str().unwrap(),
        "--index",
        "9999",
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("out of range"));
}

#[test]
fn ablation_no_er_buffer_never_shrinks() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(dir.path(), 7);
    let data = gen_data(dir.path(), &world);
    let out = dir.path().join("no-er");
    let output = run(&[
        "train",
        "--world",
        world.to_str().unwrap(),
        "--data",
        data.join("train.jsonl").to_str().unwrap(),
        "--ablation",
        "no-er",
        "--set",
        "total_steps=6",
        "--set",
        "batch_size=4",
        "--set",
        "group_size=4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let metrics = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    let sizes: Vec<u64> = metrics
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["buffer_size"]
                .as_u64()
                .unwrap()
        })
        .collect();
    assert!(
        sizes.windows(2).all(|w| w[1] >= w[0]),
        "buffer shrank without replay: {sizes:?}"
    );
}

#[test]
fn eval_empty_benchmark_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(dir.path(), 7);
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let params = dir.path().join("params.json");
    deeptravel_core::policy::PolicyParams::default()
        .save(&params)
        .unwrap();
    let output = run(&[
        "eval",
        "--params",
        params.to_str().unwrap(),
        "--world",
        world.to_str().unwrap(),
        "--benchmark",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("no queries"));
}

#[test]
fn train_resume_matches_uninterrupted_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(dir.path(), 7);
    let data = gen_data(dir.path(), &world);
    let train_data = data.join("train.jsonl");
    let common = |out: &Path, extra: &[&str]| -> Output {
        let mut args = vec![
            "train",
            "--world",
            world.to_str().unwrap(),
            "--data",
            train_data.to_str().unwrap(),
            "--set",
            "total_steps=6",
            "--set",
            "batch_size=4",
            "--set",
            "group_size=4",
            "--set",
            "checkpoint_every=3",
            "--set",
            "seed=11",
        ];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", out.to_str().unwrap()]);
        run(&args)
    };
    let full_out = dir.path().join("full");
    assert!(common(&full_out, &[]).status.success());
    let resumed_out = dir.path().join("resumed");
    let ckpt = full_out.join("checkpoint-00003.json");
    assert!(ckpt.exists());
    let resume_args = ["--resume", ckpt.to_str().unwrap()];
    assert!(common(&resumed_out, &resume_args).status.success());

    let tail = |path: &Path, from: u64| -> Vec<String> {
        std::fs::read_to_string(path.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .filter(|l| {
                serde_json::from_str::<serde_json::Value>(l).unwrap()["step"]
                    .as_u64()
                    .unwrap()
                    > from
            })
            .map(str::to_string)
            .collect()
    };
    assert_eq!(tail(&full_out, 3), tail(&resumed_out, 3));
}
