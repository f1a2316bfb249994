use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "seed": 3,
  "train": {"learning_rate": 0.001, "validation_every": 50, "max_steps": 200},
  "synth": {"examples_per_cell": 40},
  "paths": {"out": "out"}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paramfactor"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), config).unwrap();
    dir
}

fn trained() -> tempfile::TempDir {
    let dir = workspace(SMALL);
    ok(dir.path(), &["--config", "cfg.json", "synth"]);
    ok(dir.path(), &["--config", "cfg.json", "train"]);
    dir
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut stack = vec![root.to_path_buf()];
    let mut out = Vec::new();
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            stack.extend(fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()));
        } else {
            out.push(p.strip_prefix(root).unwrap().to_path_buf());
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_grid() {
    let dir = workspace("{}");
    ok(dir.path(), &["--config", "cfg.json", "synth"]);
    let out = dir.path().join("out");
    for f in ["grid.tsv", "truth.bin", "lang_features.txt", "config.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let corpora = fs::read_dir(out.join("corpora")).unwrap().count();
    assert_eq!(corpora, 18);
}

#[test]
fn synth_same_seed_identical_bytes() {
    let a = workspace(SMALL);
    let b = workspace(SMALL);
    ok(a.path(), &["--config", "cfg.json", "synth"]);
    ok(b.path(), &["--config", "cfg.json", "synth"]);
    let (ra, rb) = (a.path().join("out"), b.path().join("out"));
    let fa = files(&ra);
    assert_eq!(fa, files(&rb));
    for f in &fa {
        assert_eq!(
            fs::read(ra.join(f)).unwrap(),
            fs::read(rb.join(f)).unwrap(),
            "{f:?}"
        );
    }
}

#[test]
fn zero_tasks_is_usage_error() {
    let dir = workspace(r#"{"synth": {"n_tasks": 0, "class_counts": []}}"#);
    assert_eq!(
        run(dir.path(), &["--config", "cfg.json", "synth"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unknown_key_is_usage_error() {
    let dir = workspace(r#"{"trian": {}}"#);
    assert_eq!(
        run(dir.path(), &["--config", "cfg.json", "synth"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn train_writes_checkpoint_and_log() {
    let dir = trained();
    let out = dir.path().join("out");
    assert!(out.join("checkpoint.bin").is_file());
    let log = fs::read_to_string(out.join("train.log")).unwrap();
    assert!(log.lines().count() > 1);
    let last = log.lines().last().unwrap();
    assert!(
        last.starts_with("# final") && last.contains("best_dev"),
        "{last}"
    );
}

#[test]
fn resume_continues_at_recorded_step() {
    let dir = trained();
    let longer = SMALL.replace("\"max_steps\": 200", "\"max_steps\": 260");
    fs::write(dir.path().join("long.json"), longer).unwrap();
    let stdout = ok(
        dir.path(),
        &[
            "--config",
            "long.json",
            "train",
            "--resume",
            "out/checkpoint.bin",
        ],
    );
    assert!(stdout.contains("resuming at step 200"), "{stdout}");
    let log = fs::read_to_string(dir.path().join("out/train.log")).unwrap();
    let steps: Vec<u64> = log
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(steps, (1..=260).collect::<Vec<_>>());
}

#[test]
fn corrupted_checkpoint_names_entry() {
    let dir = trained();
    let path = dir.path().join("out/checkpoint.bin");
    let mut bytes = fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0xff;
    fs::write(&path, bytes).unwrap();
    let out = run(dir.path(), &["--config", "cfg.json", "eval"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("entry `") && err.contains("checksum"), "{err}");
}

#[test]
fn eval_accuracies_in_unit_interval() {
    let dir = trained();
    let stdout = ok(dir.path(), &["--config", "cfg.json", "eval"]);
    let mut seen = 0;
    for line in stdout.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        let acc: f64 = f[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        seen += usize::from(f[2] == "seen-test");
    }
    assert!(seen > 0);
    let summary = dir.path().join("out/eval_factor/summary_seen.tsv");
    assert!(summary.is_file());
}

#[test]
fn entropy_rows_match_tokens_or_examples() {
    let dir = trained();
    ok(dir.path(), &["--config", "cfg.json", "entropy"]);
    ok(
        dir.path(),
        &["--config", "cfg.json", "entropy", "--per-example"],
    );
    let base = dir.path().join("out/entropy_factor");
    let rows = |f: &str| {
        fs::read_to_string(base.join(f))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count()
    };
    // Unseen cells are scored on their whole corpus.
    let part = fs::read_to_string(dir.path().join("out/partition.tsv")).unwrap();
    let (mut tokens, mut examples) = (0, 0);
    for line in part.lines().filter(|l| l.ends_with("unseen")) {
        let f: Vec<&str> = line.split('\t').collect();
        let corpus = dir
            .path()
            .join(format!("out/corpora/{}_{}.tsv", f[0], f[1]));
        let text = fs::read_to_string(corpus).unwrap();
        tokens += text.lines().filter(|l| !l.trim().is_empty()).count();
        examples += text.split("\n\n").filter(|b| !b.trim().is_empty()).count();
    }
    assert_eq!(rows("per_token.tsv"), tokens);
    assert_eq!(rows("per_example.tsv"), examples);
}

#[test]
fn ns_without_features_is_usage_error() {
    let dir = trained();
    let out = run(
        dir.path(),
        &["--config", "cfg.json", "baseline", "--system", "ns"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));
}

#[test]
fn unknown_system_is_usage_error() {
    let dir = workspace(SMALL);
    let out = run(
        dir.path(),
        &["--config", "cfg.json", "eval", "--system", "xx"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_runtime_error() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["--config", "cfg.json", "synth"]);
    assert_eq!(
        run(dir.path(), &["--config", "cfg.json", "eval"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn reruns_are_idempotent() {
    let dir = trained();
    let ckpt = dir.path().join("out/checkpoint.bin");
    let first = fs::read(&ckpt).unwrap();
    ok(dir.path(), &["--config", "cfg.json", "eval", "--bma", "3"]);
    let report = dir.path().join("out/eval_factor_bma3/summary_unseen.tsv");
    let a = fs::read(&report).unwrap();
    ok(dir.path(), &["--config", "cfg.json", "train"]);
    assert_eq!(fs::read(&ckpt).unwrap(), first);
    ok(dir.path(), &["--config", "cfg.json", "eval", "--bma", "3"]);
    assert_eq!(fs::read(&report).unwrap(), a);
}
