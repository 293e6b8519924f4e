use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qfsum(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfsum"))
        .arg("--out-dir")
        .arg(root)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Run and return the run directory printed on stdout.
fn ok(root: &Path, args: &[&str]) -> PathBuf {
    let out = qfsum(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().lines().last().unwrap().trim())
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn synth(root: &Path) -> PathBuf {
    ok(root, &["--seed", "5", "synth", "--questions", "24", "--dim", "8", "--contextual"])
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn crossval_firstn_has_one_entry_per_fold() {
    let root = tempfile::tempdir().unwrap();
    let data = synth(root.path());
    let corpus = data.join("corpus.json");
    let run = ok(root.path(), &["--seed", "1", "crossval", "--corpus", s(&corpus), "--method", "firstn", "--k", "10"]);
    let report = json(&run.join("report.json"));
    assert_eq!(report[0]["entries"].as_array().unwrap().len(), 10);
    assert!(fs::read_to_string(run.join("report.txt")).unwrap().contains(" ± "));
}

#[test]
fn identical_manifests_give_identical_metric_files() {
    let root = tempfile::tempdir().unwrap();
    let data = synth(root.path());
    let again = synth(root.path());
    assert_eq!(fs::read(data.join("corpus.json")).unwrap(), fs::read(again.join("corpus.json")).unwrap());
    let corpus = data.join("corpus.json");
    let vectors = data.join("vectors.txt");
    let contextual = data.join("contextual-token.bin");
    let runs: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (
            vec!["--seed", "2", "train", "--corpus", s(&corpus), "--embeddings", s(&vectors), "--epochs", "2", "--batch-size", "32"],
            vec!["model.ckpt", "train_log.jsonl"],
        ),
        (
            vec![
                "--seed", "2", "train", "--corpus", s(&corpus), "--embeddings", s(&contextual),
                "--variant", "contextual-lstm", "--epochs", "1", "--batch-size", "64", "--hidden-dim", "6",
            ],
            vec!["model.ckpt", "train_log.jsonl"],
        ),
        (
            vec!["--seed", "3", "evaluate", "--corpus", s(&corpus), "--method", "nnc", "--embeddings", s(&vectors), "--epochs", "1"],
            vec!["report.json", "per_question.jsonl"],
        ),
        (
            vec!["--seed", "4", "crossval", "--corpus", s(&corpus), "--method", "random", "--k", "3"],
            vec!["report.json", "report.txt"],
        ),
        (
            vec![
                "--seed", "5", "--jobs", "1", "rl-train", "--corpus", s(&corpus), "--embeddings", s(&vectors),
                "--timesteps", "400", "--horizon", "200", "--eval-interval", "200", "--policy-hidden", "8",
            ],
            vec!["policy.ckpt", "curve.jsonl", "rl_report.json"],
        ),
    ];
    for (args, files) in runs {
        let a = ok(root.path(), &args);
        let b = ok(root.path(), &args);
        assert_ne!(a, b);
        for f in files.iter().chain(&["manifest.json"]) {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{args:?}: {f} differs");
        }
    }
}

#[test]
fn trained_model_feeds_summarize_and_evaluate() {
    let root = tempfile::tempdir().unwrap();
    let data = synth(root.path());
    let corpus = data.join("corpus.json");
    let vectors = data.join("vectors.txt");
    let train = ok(root.path(), &["--seed", "1", "train", "--corpus", s(&corpus), "--embeddings", s(&vectors), "--epochs", "1"]);
    let model = train.join("model.ckpt");
    let sum = ok(root.path(), &["summarize", "--corpus", s(&corpus), "--model", s(&model), "--embeddings", s(&vectors)]);
    let answers = json(&sum.join("answers.json"));
    assert_eq!(answers["questions"].as_array().unwrap().len(), 24);
    let audit = fs::read_to_string(sum.join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 24);
    let eval = ok(root.path(), &["evaluate", "--corpus", s(&corpus), "--model", s(&model), "--embeddings", s(&vectors)]);
    let f1 = json(&eval.join("report.json"))[0]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    let firstn = ok(root.path(), &["summarize", "--corpus", s(&corpus)]);
    assert!(firstn.join("answers.json").exists());
}

#[test]
fn ingest_label_and_rl_eval_chain() {
    let root = tempfile::tempdir().unwrap();
    let data = synth(root.path());
    let ingest = ok(root.path(), &["ingest", "--input", s(&data.join("corpus.json"))]);
    let dump = ingest.join("corpus.jsonl");
    assert_eq!(json(&ingest.join("ingest.json"))["questions"], 24);
    let labels = ok(root.path(), &["label", "--corpus", s(&dump)]).join("labels.jsonl");
    assert_eq!(fs::read_to_string(&labels).unwrap().lines().count(), 24);
    let vectors = data.join("vectors.txt");
    ok(
        root.path(),
        &["--seed", "1", "train", "--corpus", s(&dump), "--labels", s(&labels), "--embeddings", s(&vectors), "--epochs", "1"],
    );
    let rl = ok(
        root.path(),
        &[
            "--seed", "1", "rl-train", "--corpus", s(&dump), "--embeddings", s(&vectors), "--timesteps", "200",
            "--horizon", "100", "--eval-interval", "100", "--policy-hidden", "4",
        ],
    );
    let eval = ok(
        root.path(),
        &["rl-eval", "--corpus", s(&dump), "--policy", s(&rl.join("policy.ckpt")), "--embeddings", s(&vectors)],
    );
    assert_eq!(fs::read_to_string(eval.join("per_question.jsonl")).unwrap().lines().count(), 24);
}

#[test]
fn exit_codes_and_no_partial_output() {
    let root = tempfile::tempdir().unwrap();
    let data = synth(root.path());
    let corpus = data.join("corpus.json");
    let before = fs::read_dir(root.path()).unwrap().count();

    let missing_seed = qfsum(root.path(), &["train", "--corpus", s(&corpus), "--embeddings", s(&data.join("vectors.txt"))]);
    assert_eq!(missing_seed.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&missing_seed.stderr).trim().lines().count(), 1);

    let bad = root.path().join("bad.json");
    fs::write(&bad, "{\"questions\": [{\"id\": 1}]}").unwrap();
    assert_eq!(qfsum(root.path(), &["ingest", "--input", s(&bad)]).status.code(), Some(3));

    let missing = qfsum(root.path(), &["--seed", "1", "train", "--corpus", s(&corpus), "--embeddings", "nope.txt"]);
    assert_eq!(missing.status.code(), Some(3));

    assert_eq!(qfsum(root.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(fs::read_dir(root.path()).unwrap().count(), before + 1, "only bad.json was added");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let root = tempfile::tempdir().unwrap();
    let data = synth(root.path());
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, "seed = 9\n[scorer]\nepochs = 1\nbatch_size = 16\n").unwrap();
    let run = ok(
        root.path(),
        &[
            "--config", s(&cfg), "train", "--corpus", s(&data.join("corpus.json")), "--embeddings",
            s(&data.join("vectors.txt")), "--batch-size", "8",
        ],
    );
    let m = json(&run.join("manifest.json"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["scorer"]["epochs"], 1);
    assert_eq!(m["config"]["scorer"]["batch_size"], 8);
    assert_eq!(m["config"]["scorer"]["dropout"], 0.3);
    assert!(m.get("timestamp").is_none());

    fs::write(&cfg, "[scorer]\nepohcs = 1\n").unwrap();
    let out = qfsum(
        root.path(),
        &["--config", s(&cfg), "--seed", "1", "train", "--corpus", s(&data.join("corpus.json")), "--embeddings", s(&data.join("vectors.txt"))],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rouge_command_scores_text_files() {
    let root = tempfile::tempdir().unwrap();
    let c = root.path().join("c.txt");
    let r = root.path().join("r.txt");
    fs::write(&c, "a b c").unwrap();
    fs::write(&r, "a b c").unwrap();
    let run = ok(root.path(), &["rouge", "--candidate", s(&c), "--reference", s(&r)]);
    assert_eq!(json(&run.join("rouge.json"))["f1"], 1.0);
}
