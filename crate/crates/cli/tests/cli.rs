use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const SMALL: &str = r#"{
  "page_limit": 45,
  "synth": { "num_docs": 12, "noise": 0.2 },
  "train": { "epochs": 1, "eval_every_steps": 2 },
  "split": { "validation_docs": 2, "test_docs": 2 }
}"#;

fn pts(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pts"))
        .args(args)
        .env("PTS_WORKDIR", workdir)
        .output()
        .expect("spawn pts")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(workdir: &Path, args: &[&str]) -> String {
    let out = pts(workdir, args);
    assert_eq!(
        code(&out),
        0,
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const STAGES: [&[&str]; 8] = [
    &["synth"],
    &["preprocess"],
    &["align", "--metric", "all"],
    &["teacher"],
    &["train"],
    &["summarize"],
    &["evaluate"],
    &["gradcheck"],
];

fn run_pipeline(workdir: &Path, config: &Path) {
    let config = config.to_str().unwrap();
    for stage in STAGES {
        let mut args = stage.to_vec();
        args.extend(["--config", config]);
        run_ok(workdir, &args);
    }
}

fn hashes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(fs::read(&path).unwrap()).to_vec();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), digest);
            }
        }
    }
    out
}

#[test]
fn full_pipeline_succeeds_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let config = write_config(dir.path(), SMALL);
    run_pipeline(&work, &config);
    for name in [
        "corpus.jsonl",
        "gold.jsonl",
        "paginated.jsonl",
        "rejections.json",
        "embedder.json",
        "alignments/embed-cosine.jsonl",
        "alignments/rouge1.jsonl",
        "alignments/rouge2.jsonl",
        "alignments/rougeL.jsonl",
        "alignment_comparison.json",
        "distributions.jsonl",
        "checkpoint.bin",
        "train_log.jsonl",
        "validation.jsonl",
        "train_report.json",
        "summaries.jsonl",
        "references.jsonl",
        "report.json",
        "gradcheck.json",
        "effective_config.json",
    ] {
        assert!(work.join(name).is_file(), "missing {name}");
    }
    let first = hashes(&work);
    run_pipeline(&work, &config);
    assert_eq!(first, hashes(&work));
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let config = write_config(dir.path(), SMALL);
    run_pipeline(&a, &config);
    let effective = dir.path().join("effective.json");
    fs::copy(a.join("effective_config.json"), &effective).unwrap();
    run_pipeline(&b, &effective);
    let (mut ha, mut hb) = (hashes(&a), hashes(&b));
    for h in [&mut ha, &mut hb] {
        h.remove(Path::new("effective_config.json"));
        h.remove(Path::new("corpus.jsonl"));
    }
    assert_eq!(ha, hb);
    assert_eq!(
        fs::read(a.join("corpus.jsonl")).unwrap(),
        fs::read(b.join("corpus.jsonl")).unwrap()
    );
}

#[test]
fn missing_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("empty");
    for stage in [
        &["preprocess"][..],
        &["align"],
        &["teacher"],
        &["train"],
        &["summarize"],
        &["evaluate"],
    ] {
        let out = pts(&work, stage);
        assert_eq!(
            code(&out),
            2,
            "{stage:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = pts(&work, &["synth", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_settings_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let bad = write_config(dir.path(), r#"{ "no_such_field": 1 }"#);
    let cases: [&[&str]; 6] = [
        &["synth", "--config", bad.to_str().unwrap()],
        &["train", "--lambda", "1.5"],
        &["align", "--metric", "bleu"],
        &["teacher", "--metric", "all"],
        &["preprocess", "--bogus-flag"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = pts(&work, args);
        assert_eq!(
            code(&out),
            1,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(dir.path(), &["gradcheck"]);
    assert!(out.contains("PASS"), "{out}");
    let out = pts(dir.path(), &["gradcheck", "--corrupt-gradient"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn summarize_rejects_a_foreign_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let config = write_config(dir.path(), SMALL);
    let config = config.to_str().unwrap();
    run_pipeline(&a, Path::new(config));
    let other = write_config(
        dir.path(),
        r#"{ "page_limit": 45, "synth": { "num_docs": 4, "vocab_size": 400, "seed": 99 } }"#,
    );
    let other = other.to_str().unwrap();
    for stage in [&["synth"][..], &["preprocess"]] {
        let mut args = stage.to_vec();
        args.extend(["--config", other]);
        run_ok(&b, &args);
    }
    let checkpoint = a.join("checkpoint.bin");
    let out = pts(
        &b,
        &[
            "summarize",
            "--config",
            other,
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluate_reports_id_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.jsonl");
    let refs = dir.path().join("refs.jsonl");
    fs::write(&sys, "{\"doc_id\":\"a\",\"tokens\":[\"x\"]}\n").unwrap();
    fs::write(&refs, "{\"doc_id\":\"b\",\"tokens\":[\"x\"]}\n").unwrap();
    let out = pts(
        dir.path(),
        &[
            "evaluate",
            "--system",
            sys.to_str().unwrap(),
            "--references",
            refs.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains('a'));
}

#[test]
fn evaluating_references_against_themselves_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let refs = dir.path().join("refs.jsonl");
    fs::write(
        &refs,
        "{\"doc_id\":\"a\",\"tokens\":[\"the\",\"cat\",\"sat\"]}\n{\"doc_id\":\"b\",\"tokens\":[\"a\",\"dog\"]}\n",
    )
    .unwrap();
    let r = refs.to_str().unwrap();
    run_ok(dir.path(), &["evaluate", "--system", r, "--references", r]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let means = &report["means"];
    for key in ["rouge1", "rouge2", "rougeL", "embed_f1"] {
        let v = means[key]
            .as_f64()
            .unwrap_or_else(|| panic!("missing {key} in {means}"));
        assert!((v - 1.0).abs() <= 1e-12, "{key} = {v}");
    }
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = pts(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("gradcheck"));
}
