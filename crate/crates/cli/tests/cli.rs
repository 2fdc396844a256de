use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ap"))
        .args(args)
        .env_remove("AP_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let out = ap(&["synth-corpus", "--train", "80", "--val", "20", "--out", s(dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

/// The machine-readable run line on stderr.
fn run_log(out: &Output) -> Value {
    let line = stderr(out)
        .lines()
        .find(|l| l.starts_with("{\"event\":\"run\""))
        .expect("run log line")
        .to_string();
    serde_json::from_str(&line).unwrap()
}

#[test]
fn help_for_every_subcommand() {
    let commands: &[&[&str]] = &[
        &[],
        &["ingest"],
        &["index"],
        &["index", "w2v"],
        &["index", "sem"],
        &["propose"],
        &["eval"],
        &["eval", "recall"],
        &["eval", "rankdist"],
        &["eval", "vqa"],
        &["train-classifier"],
        &["answer"],
        &["gradcheck"],
        &["experiment"],
        &["experiment", "choice-swap"],
        &["synth-corpus"],
    ];
    for cmd in commands {
        let mut args = cmd.to_vec();
        args.push("--help");
        let out = ap(&args);
        assert_eq!(code(&out), 0, "{cmd:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage:"), "{cmd:?}");
    }
    assert_eq!(code(&ap(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&ap(&[])), 1);
    assert_eq!(code(&ap(&["frobnicate"])), 1);
    assert_eq!(code(&ap(&["propose"])), 1);
    assert_eq!(code(&ap(&["gradcheck", "--networks", "many"])), 1);

    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let q = dir.path().join("corpus.jsonl");
    let out = ap(&["propose", "--questions", s(&q), "--model", "nope"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--model"));
    // the W2V proposer cannot run without embeddings
    let out = ap(&["propose", "--questions", s(&q), "--model", "w2v"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_knob = 3\n").unwrap();
    assert_eq!(code(&ap(&["--config", s(&cfg), "gradcheck"])), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ap(&["ingest", "--questions", s(&dir.path().join("missing.jsonl"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.jsonl"));

    let bad = dir.path().join("bad.jsonl");
    let good = r#"{"qid":"a","image_id":"i","question":"What is it?","answers":["x","x","x","x","x","x","x","x","x","x"],"split":"train"}"#;
    let short = r#"{"qid":"b","image_id":"i","question":"What is it?","answers":["x","x","x","x","x","x","x","x","x"],"split":"train"}"#;
    std::fs::write(&bad, format!("{good}\n{short}\n")).unwrap();
    let out = ap(&["ingest", "--questions", s(&bad)]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("bad.jsonl:2"), "{err}");
    assert!(err.contains("got 9"), "{err}");

    let garbage = dir.path().join("garbage.txt");
    std::fs::write(&garbage, "not an index\n").unwrap();
    synth(dir.path());
    let out = ap(&[
        "propose",
        "--questions",
        s(&dir.path().join("corpus.jsonl")),
        "--embeddings",
        s(&dir.path().join("embeddings.txt")),
        "--model",
        "w2v",
        "--w2v-index",
        s(&garbage),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn run_log_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let (corpus, emb) = (dir.path().join("corpus.jsonl"), dir.path().join("embeddings.txt"));
    let base = [
        "propose",
        "--questions",
        s(&corpus),
        "--embeddings",
        s(&emb),
        "--model",
        "w2v",
    ];
    let longest = |out: &Output| -> usize {
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap()["proposals"].as_array().unwrap().len())
            .max()
            .unwrap()
    };

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "cutoff = 4\nseed = 9\n").unwrap();
    let mut args = vec!["--config", s(&cfg)];
    args.extend(base);
    let from_file = ap(&args);
    assert_eq!(code(&from_file), 0, "{}", stderr(&from_file));
    assert_eq!(longest(&from_file), 4);

    args.extend(["--cutoff", "2"]);
    let from_flag = ap(&args);
    assert_eq!(longest(&from_flag), 2);

    let log = run_log(&from_flag);
    assert_eq!(log["command"], "propose");
    assert_eq!(log["config"]["pipeline"]["cutoff"], 2);
    assert_eq!(log["config_hash"].as_str().unwrap().len(), 16);
    assert!(log["seed"].is_u64());
    assert_ne!(log["config_hash"], run_log(&from_file)["config_hash"]);
    // same configuration, same hash
    assert_eq!(run_log(&ap(&args))["config_hash"], log["config_hash"]);

    let defaults = ap(&base);
    assert!(longest(&defaults) <= 100);
}

#[test]
fn gradcheck_reports_pass() {
    let out = ap(&["gradcheck", "--networks", "20"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["networks"].as_array().unwrap().len(), 20);
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn choice_swap_needs_choices() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    // strip the choices from the corpus
    let path = dir.path().join("corpus.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("choices");
            format!("{v}\n")
        })
        .collect();
    std::fs::write(&path, stripped).unwrap();
    let out = ap(&[
        "experiment",
        "choice-swap",
        "--questions",
        s(&path),
        "--embeddings",
        s(&dir.path().join("embeddings.txt")),
        "--image-features",
        s(&dir.path().join("features.txt")),
        "--lexicon",
        s(&dir.path().join("lexicon.tsv")),
        "--ontology",
        s(&dir.path().join("ontology.tsv")),
        "--epochs",
        "1",
        "--hidden",
        "4",
        "--out",
        s(&dir.path().join("swap")),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("choices"));
}
