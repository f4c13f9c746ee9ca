use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bnfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnfuse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bnfuse(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "--generate.n", "1000", "--generate.seed", "7"];
    ok(dir.path(), &args);
    let first = files(&dir.path().join("data"));
    assert_eq!(first.len(), 6);
    fs::remove_dir_all(dir.path().join("data")).unwrap();
    ok(dir.path(), &args);
    assert_eq!(files(&dir.path().join("data")), first);
    let manifest = json(&dir.path().join("data/manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn evaluate_bn_only_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--generate.n", "1000"]);
    let run = [
        "--variants",
        r#"["bn-only"]"#,
        "--sizes",
        "[100]",
        "--seeds",
        "[0, 1]",
    ];
    ok(d, &[&["train"][..], &run].concat());
    let table = ok(d, &[&["evaluate"][..], &run].concat());
    assert!(table.contains("bn-only"));
    let report = json(&d.join("output/report.json"));
    let pairs: BTreeSet<(String, String)> = report["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["symptom"].as_str().unwrap().into(),
                e["variant"].as_str().unwrap().into(),
            )
        })
        .collect();
    assert_eq!(pairs.len(), 5);
    assert!(pairs.iter().all(|(_, v)| v == "bn-only"));
    let metrics = json(&d.join("output/100/1/metrics.json"));
    assert_eq!(metrics["seed"], 1);
    assert_eq!(metrics["n"], 100);
    assert_eq!(metrics["config_hash"], report["config_hash"]);
}

#[test]
fn evaluate_before_train_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--generate.n", "1000"]);
    let out = bnfuse(
        dir.path(),
        &["evaluate", "--sizes", "[100]", "--seeds", "[0]"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));
}

#[test]
fn changed_config_does_not_reuse_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--generate.n", "1000"]);
    ok(d, &["train", "--sizes", "[100]", "--seeds", "[0]"]);
    let out = bnfuse(
        d,
        &[
            "evaluate",
            "--sizes",
            "[100]",
            "--seeds",
            "[0]",
            "--ground-truth",
            "true",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        bnfuse(d, &["train", "--mlp.hiden", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(
        bnfuse(d, &["train", "--variants", r#"["nope"]"#])
            .status
            .code(),
        Some(2)
    );
    fs::write(d.join("bad.json"), "{ not json").unwrap();
    assert_eq!(
        bnfuse(d, &["train", "-c", "bad.json"]).status.code(),
        Some(2)
    );
    // data errors are 3
    assert_eq!(
        bnfuse(d, &["train", "--sizes", "[100]"]).status.code(),
        Some(3)
    );
}

#[test]
fn config_file_and_print() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.json"),
        r#"{"sizes": [100], "mlp": {"hidden": 8}}"#,
    )
    .unwrap();
    let printed: Value = serde_json::from_str(&ok(
        d,
        &[
            "train",
            "-c",
            "run.json",
            "--seeds",
            "[3]",
            "--print-config",
        ],
    ))
    .unwrap();
    assert_eq!(printed["sizes"], serde_json::json!([100]));
    assert_eq!(printed["seeds"], serde_json::json!([3]));
    assert_eq!(printed["mlp"]["hidden"], 8);
    assert_eq!(printed["mlp"]["patience"], 10);
}

#[test]
fn channel_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--generate.n", "1000"]);
    let run = [
        "--sizes",
        "[654]",
        "--seeds",
        "[0,1,2,3,4,5,6,7,8,9]",
        "--jobs",
        "2",
    ];
    ok(d, &[&["train"][..], &run].concat());
    ok(d, &[&["evaluate"][..], &run].concat());
    let report = json(&d.join("output/report.json"));
    let entries = report["entries"].as_array().unwrap();
    let scenarios: BTreeSet<&str> = entries
        .iter()
        .map(|e| e["scenario"].as_str().unwrap())
        .collect();
    assert_eq!(scenarios, BTreeSet::from(["original", "shifted"]));
    let subsets: BTreeSet<String> = entries.iter().map(|e| e["subset"].to_string()).collect();
    assert_eq!(subsets.len(), 5);
    assert!(!report["comparisons"].as_array().unwrap().is_empty());
    let csv = fs::read_to_string(d.join("output/report.csv")).unwrap();
    assert!(csv.lines().count() > entries.len());
    assert!(d.join("output/report.txt").exists());
}

#[test]
fn embedding_pipeline_with_infer_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let emb = [
        "--paths.embeddings",
        "data/emb.bin",
        "--paths.shifted-embeddings",
        "data/emb_shifted.bin",
        "--generate.embedding-dim",
        "12",
    ];
    ok(
        d,
        &[&["generate", "--generate.n", "600"][..], &emb].concat(),
    );
    assert!(d.join("data/emb.bin.ids").exists());
    let run = [
        &emb[..],
        &[
            "--variants",
            r#"["bn-only","text-only","c-bn-text","v-bn-text","v-c-bn-text","concat"]"#,
            "--sizes",
            "[150]",
            "--seeds",
            "[0]",
            "--mlp.hidden",
            "8",
            "--mlp.max-epochs",
            "15",
        ][..],
    ]
    .concat();
    ok(d, &[&["train"][..], &run].concat());
    let cell = d.join("output/150/0");
    for name in [
        "network.json",
        "consistency.json",
        "text_models.json",
        "concat.json",
    ] {
        assert!(cell.join(name).exists(), "{name}");
    }
    let first = files(&d.join("output"));
    ok(d, &[&["train"][..], &run].concat());
    assert_eq!(files(&d.join("output")), first);

    ok(d, &[&["evaluate"][..], &run].concat());
    let report = json(&d.join("output/report.json"));
    let variants: BTreeSet<&str> = report["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["variant"].as_str().unwrap())
        .collect();
    assert_eq!(variants.len(), 6);

    let tabular = fs::read_to_string(d.join("data/tabular.csv")).unwrap();
    let patients: String = tabular.lines().take(4).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("patients.csv"), patients).unwrap();
    let out = ok(
        d,
        &[&["infer", "patients.csv", "--out", "post.json"][..], &run].concat(),
    );
    assert!(out.contains("post.json"));
    let post = json(&d.join("post.json"));
    let rows = post["data"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let fever = &rows[0]["variants"]["v-c-bn-text"]["fever"];
    let total: f64 = fever
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn mask_notes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--generate.n", "40"]);
    let tabular = fs::read_to_string(d.join("data/tabular.csv")).unwrap();
    let ids: Vec<String> = tabular
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    let mut notes = String::new();
    let mut spans = String::new();
    for id in &ids {
        let text = "Seen today. Reports a dry cough. Plan: rest.";
        notes.push_str(&serde_json::json!({"id": id, "text": text}).to_string());
        notes.push('\n');
        spans.push_str(
            &serde_json::json!({"id": id, "symptom": "cough", "start": 22, "end": 31}).to_string(),
        );
        spans.push('\n');
    }
    fs::write(d.join("data/notes.jsonl"), notes).unwrap();
    fs::write(d.join("data/spans.jsonl"), spans).unwrap();
    let args = [
        "mask",
        "--paths.notes",
        "data/notes.jsonl",
        "--paths.spans",
        "data/spans.jsonl",
        "--mask.seed",
        "3",
    ];
    ok(d, &args);
    let masked = fs::read_to_string(d.join("data/masked/notes.jsonl")).unwrap();
    assert_eq!(masked.lines().count(), 40);
    let dropped = masked.lines().filter(|l| !l.contains("cough")).count();
    assert!(dropped > 5 && dropped < 35, "{dropped}");
    assert!(masked
        .lines()
        .all(|l| l.contains("Seen today.") && l.contains("Plan: rest.")));
    let log = fs::read_to_string(d.join("data/masked/drop_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 41);
    let first = files(&d.join("data/masked"));
    ok(d, &args);
    assert_eq!(files(&d.join("data/masked")), first);

    let out = bnfuse(d, &["mask"]);
    assert_eq!(out.status.code(), Some(2));
}
