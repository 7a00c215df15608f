use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn entcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entcl"))
        .args(args)
        .env_remove("ENTCL_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = entcl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = [
    "--set",
    "synth.entity_sentence_count=400",
    "--set",
    "synth.none_sentence_count=80",
    "--set",
    "synth.sts_pair_count=60",
];

const TINY: [&str; 12] = [
    "--set",
    "total_steps=6",
    "--set",
    "eval_every=3",
    "--set",
    "batch_size=8",
    "--set",
    "encoder.hidden_dim=16",
    "--set",
    "encoder.layer_count=1",
    "--set",
    "encoder.head_count=2",
];

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("data-{seed}"));
    let mut args = vec!["--out", s(&out), "--seed", seed, "synth"];
    args.extend(SMALL);
    ok(&args);
    out
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "7");
    let b = dir.path().join("again");
    let mut args = vec!["--out", s(&b), "--seed", "7", "synth"];
    args.extend(SMALL);
    ok(&args);
    let manifest = |d: &Path| fs::read_to_string(d.join("manifest.json")).unwrap();
    assert_eq!(manifest(&a), manifest(&b));
    let c = synth(dir.path(), "8");
    assert_ne!(manifest(&a), manifest(&c));
    let run = fs::read_to_string(a.join("run.toml")).unwrap();
    assert!(run.contains("seed = 7"));
    assert!(fs::read_to_string(a.join("config.toml")).unwrap().contains("entity_sentence_count = 400"));
}

#[test]
fn train_then_eval_agree_and_snapshot_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "1");
    let run = dir.path().join("run");
    let mut args = vec!["--out", s(&run), "--seed", "3", "train", "--data", s(&data)];
    args.extend(TINY);
    ok(&args);
    let trace = fs::read_to_string(run.join("trace.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(trace.lines().last().unwrap()).unwrap();
    let test_pairs = data.join("sts_test.tsv");
    let report_path = dir.path().join("report.json");
    let plot = dir.path().join("plot.svg");
    let printed = ok(&[
        "eval",
        "--checkpoint",
        s(&run.join("last.ckpt")),
        "--pairs",
        s(&test_pairs),
        "--pooling",
        "first_last_avg",
        "--report",
        s(&report_path),
        "--plot",
        s(&plot),
    ]);
    let report: serde_json::Value = serde_json::from_str(&printed).unwrap();
    assert_eq!(report["srocc"].as_f64(), last["test_srocc"].as_f64());
    assert_eq!(fs::read_to_string(&report_path).unwrap().trim(), printed.trim());
    assert!(fs::read_to_string(&plot).unwrap().starts_with("<svg"));

    // Re-running from the snapshot reproduces the trace byte for byte.
    let again = dir.path().join("again");
    ok(&[
        "--out",
        s(&again),
        "--seed",
        "3",
        "train",
        "--data",
        s(&data),
        "--config",
        s(&run.join("config.toml")),
    ]);
    assert_eq!(fs::read(run.join("trace.jsonl")).unwrap(), fs::read(again.join("trace.jsonl")).unwrap());
}

#[test]
fn config_errors_exit_two_with_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "2");
    for (bad, key) in [("lamda=0.1", "lamda"), ("encoder.depth=3", "encoder.depth"), ("pooling=max", "pooling")] {
        let out = entcl(&["--out", s(&dir.path().join("x")), "train", "--data", s(&data), "--set", bad]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], "config");
        assert_eq!(err["key"], key);
        assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
    }
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[encoder]\nwidth = 3\n").unwrap();
    let out = entcl(&["--out", s(&dir.path().join("x")), "train", "--data", s(&data), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let out = entcl(&["--out", s(&dir.path().join("y")), "synth", "--set", "synth.entities=3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tsv");
    for args in [
        vec!["eval", "--checkpoint", s(&missing), "--pairs", s(&missing)],
        vec!["stats", "--split", s(&missing)],
        vec!["simulate-duplicates", "--distribution", s(&missing)],
        vec!["train", "--data", s(dir.path())],
        vec!["report", "--grid", s(&missing)],
    ] {
        let out = entcl(&args);
        assert_eq!(out.status.code(), Some(3), "{args:?}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], "missing_file");
    }
}

#[test]
fn duplicate_simulation() {
    let printed = ok(&["simulate-duplicates", "--uniform", "1000", "--batch-size", "32", "--trials", "100000"]);
    let v: serde_json::Value = serde_json::from_str(&printed).unwrap();
    let p = v["p_any_duplicate"].as_f64().unwrap();
    assert!((p - 0.392).abs() < 0.01, "{p}");
    assert!((v["analytic_uniform"].as_f64().unwrap() - 0.394_252).abs() < 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "4");
    let stats_dir = dir.path().join("stats");
    let stats: serde_json::Value =
        serde_json::from_str(&ok(&["--out", s(&stats_dir), "stats", "--split", s(&data.join("split.jsonl"))])).unwrap();
    assert!(stats["top_decile_share"].as_f64().unwrap() > 0.5);
    let freq = stats_dir.join("entity_frequencies.tsv");
    let printed = ok(&["simulate-duplicates", "--distribution", s(&freq), "--trials", "2000"]);
    let v: serde_json::Value = serde_json::from_str(&printed).unwrap();
    // Zipfian usage makes in-batch duplicates near certain.
    assert!(v["p_any_duplicate"].as_f64().unwrap() > 0.9);
}

#[test]
fn preprocess_matches_synth_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "5");
    let out = dir.path().join("pre");
    ok(&[
        "--out",
        s(&out),
        "preprocess",
        "--documents",
        s(&data.join("documents.txt")),
        "--dictionary",
        s(&data.join("dictionary.jsonl")),
    ]);
    assert_eq!(fs::read(out.join("split.jsonl")).unwrap(), fs::read(data.join("split.jsonl")).unwrap());
}

#[test]
fn grid_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "6");
    let grid_file = dir.path().join("grid.toml");
    fs::write(
        &grid_file,
        r#"name = "demo"
axis = { kind = "strategy", values = ["naive", "replace"] }
"#,
    )
    .unwrap();
    let out = dir.path().join("grid");
    let mut args = vec!["--out", s(&out), "grid", "--grid", s(&grid_file), "--data", s(&data), "--set", "seeds=[0]"];
    args.extend(TINY);
    let table = ok(&args);
    assert!(table.contains("strategy=naive") && table.contains("strategy=replace"));
    let csv_path = dir.path().join("out.csv");
    let rendered = ok(&["report", "--grid", s(&out.join("grid.json")), "--csv", s(&csv_path)]);
    assert_eq!(rendered, table);
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv, fs::read_to_string(out.join("grid.csv")).unwrap());
    assert_eq!(csv.lines().count(), 3);
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("name = \"demo\""));

    let bad = entcl(&["--out", s(&out), "grid", "--recipe", "nonsense", "--data", s(&data)]);
    assert_eq!(bad.status.code(), Some(2));
}
