use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn argbound(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_argbound"))
        .args(args)
        .current_dir(dir)
        .env_remove("ARGBOUND_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

/// Small synthetic workspace: 60 train / 20 test sentences, 2 epochs.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = argbound(
        dir.path(),
        &["synth", "--out-dir", ".", "--seed", "3", "--train-sentences", "60", "--test-sentences", "20", "--epochs", "2"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn write_config(dir: &Path, name: &str, model: &str, overrides: serde_json::Value) {
    let mut cfg = serde_json::json!({
        "model": model, "hidden": 8, "attention_hidden": 4, "embedding_dim": 16, "epochs": 2,
        "batch_size": 10, "learning_rate": 0.01, "seed": 1, "train_path": "train.conll",
        "embeddings_path": "embeddings.txt"
    });
    if let serde_json::Value::Object(extra) = overrides {
        cfg.as_object_mut().unwrap().extend(extra);
    }
    fs::write(dir.join(name), cfg.to_string()).unwrap();
}

fn train(dir: &Path, model: &str, out: &str) {
    let cfg = format!("{model}.cfg.json");
    write_config(dir, &cfg, model, serde_json::json!({}));
    let o = argbound(dir, &["train", "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains(&format!("checkpoint={out}")));
}

#[test]
fn synth_and_stats() {
    let ws = workspace();
    let d = ws.path();
    for f in ["train.conll", "test.conll", "embeddings.txt", "config.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let o = argbound(d, &["stats", "--input", "train.conll"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert_eq!(value(&s, "sentences"), 60.0);
    assert_eq!(value(&s, "argumentative_sentences") + value(&s, "non_argumentative_sentences"), 60.0);
}

#[test]
fn train_predict_evaluate_round() {
    let ws = workspace();
    let d = ws.path();
    let o = argbound(d, &["train", "--config", "config.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.iter().filter(|l| l.starts_with("epoch=")).count(), 2);
    assert!(d.join("model.json").exists());

    for out in ["p1.conll", "p2.conll"] {
        let o = argbound(d, &["predict", "--model", "model.json", "--input", "test.conll", "--output", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let p1 = fs::read_to_string(d.join("p1.conll")).unwrap();
    assert_eq!(p1, fs::read_to_string(d.join("p2.conll")).unwrap());
    assert_eq!(p1.lines().filter(|l| l.starts_with("# arg_prob=")).count(), 20);

    for mode in ["token", "span", "classify"] {
        let o = argbound(d, &["evaluate", "--gold", "test.conll", "--pred", "p1.conll", "--mode", mode]);
        assert_eq!(code(&o), 0, "{mode}: {}", stderr(&o));
    }

    // Re-predicting from a prediction file replaces the arg_prob comments.
    let o = argbound(d, &["predict", "--model", "model.json", "--input", "p1.conll", "--output", "p3.conll"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(d.join("p3.conll")).unwrap(), p1);
}

#[test]
fn tagger_predictions_keep_the_line_count() {
    let ws = workspace();
    let d = ws.path();
    for model in ["bilstm", "bilstm-crf"] {
        let ckpt = format!("{model}.json");
        train(d, model, &ckpt);
        let o = argbound(d, &["predict", "--model", &ckpt, "--input", "test.conll", "--output", "p.conll"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let input = fs::read_to_string(d.join("test.conll")).unwrap();
        let pred = fs::read_to_string(d.join("p.conll")).unwrap();
        assert_eq!(input.lines().count(), pred.lines().count());
        for (a, b) in input.lines().zip(pred.lines()) {
            assert_eq!(a.split('\t').next(), b.split('\t').next());
        }
    }
}

#[test]
fn classifier_prediction_feeds_classification_mode() {
    let ws = workspace();
    let d = ws.path();
    train(d, "classifier", "cls.json");
    let o = argbound(d, &["predict", "--model", "cls.json", "--input", "test.conll", "--output", "p.conll"]);
    assert_eq!(code(&o), 0);
    let pred = fs::read_to_string(d.join("p.conll")).unwrap();
    assert!(pred.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).all(|l| l.ends_with("\tO")));
    let o = argbound(d, &["evaluate", "--gold", "test.conll", "--pred", "p.conll", "--mode", "classify"]);
    assert_eq!(code(&o), 0);
    let acc = value(&stdout(&o), "accuracy");
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn evaluate_against_itself_and_known_values() {
    let ws = workspace();
    let d = ws.path();
    for mode in ["token", "span", "classify"] {
        let o = argbound(d, &["evaluate", "--gold", "test.conll", "--pred", "test.conll", "--mode", mode]);
        assert_eq!(code(&o), 0);
        let key = if mode == "token" { "macro_f1" } else { "f1" };
        assert_eq!(value(&stdout(&o), key), 1.0, "{mode}");
    }

    fs::write(d.join("g.conll"), "a\tB\nb\tI\nc\tO\nd\tO\n").unwrap();
    fs::write(d.join("p.conll"), "a\tB\nb\tO\nc\tO\nd\tO\n").unwrap();
    let o = argbound(d, &["evaluate", "--gold", "g.conll", "--pred", "p.conll"]);
    let s = stdout(&o);
    assert!((value(&s, "macro_f1") - 0.6).abs() < 1e-6);
    assert!((value(&s, "f1_O") - 0.8).abs() < 1e-6);

    // Boundary off by one: no exact span match.
    fs::write(d.join("p.conll"), "a\tO\nb\tB\nc\tO\nd\tO\n").unwrap();
    let o = argbound(d, &["evaluate", "--gold", "g.conll", "--pred", "p.conll", "--mode", "span"]);
    assert!(value(&stdout(&o), "f1") < 1.0);

    fs::write(d.join("p.conll"), "a\tO\nb\tI\nc\tO\nd\tO\n").unwrap();
    let o = argbound(d, &["evaluate", "--gold", "g.conll", "--pred", "p.conll", "--mode", "span"]);
    assert_eq!(value(&stdout(&o), "repaired_spans"), 1.0);
}

#[test]
fn exit_codes() {
    let ws = workspace();
    let d = ws.path();

    write_config(d, "bad.json", "joint", serde_json::json!({"dropout": 2.0}));
    assert_eq!(code(&argbound(d, &["train", "--config", "bad.json"])), 2);
    fs::write(d.join("typo.json"), r#"{"hiden": 3}"#).unwrap();
    assert_eq!(code(&argbound(d, &["train", "--config", "typo.json"])), 2);
    assert_eq!(code(&argbound(d, &["train", "--config", "missing.json"])), 2);

    fs::write(d.join("broken.conll"), "a\tB\nb\tX\n").unwrap();
    write_config(d, "ok.json", "joint", serde_json::json!({}));
    let o = argbound(d, &["train", "--config", "ok.json", "--train", "broken.conll"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert_eq!(code(&argbound(d, &["stats", "--input", "nope.conll"])), 3);

    fs::write(d.join("junk.json"), "{}").unwrap();
    let o = argbound(d, &["predict", "--model", "junk.json", "--input", "test.conll", "--output", "p.conll"]);
    assert_eq!(code(&o), 4);

    fs::write(d.join("g.conll"), "a\tB\nb\tI\n").unwrap();
    fs::write(d.join("p.conll"), "a\tB\nc\tI\n").unwrap();
    let o = argbound(d, &["evaluate", "--gold", "g.conll", "--pred", "p.conll"]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("sentence 1 token 2"), "{}", stderr(&o));
    fs::write(d.join("p.conll"), "a\tB\nb\tI\n\nc\tO\n").unwrap();
    assert_eq!(code(&argbound(d, &["evaluate", "--gold", "g.conll", "--pred", "p.conll"])), 5);
}

#[test]
fn mismatched_embeddings_are_a_model_error() {
    let ws = workspace();
    let d = ws.path();
    train(d, "bilstm", "m.json");
    let mut ckpt: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    ckpt["config"]["hidden"] = serde_json::json!(9);
    fs::write(d.join("m.json"), ckpt.to_string()).unwrap();
    let o = argbound(d, &["predict", "--model", "m.json", "--input", "test.conll", "--output", "p.conll"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn zero_epochs_and_binary_sidecar() {
    let ws = workspace();
    let d = ws.path();
    write_config(d, "zero.json", "joint", serde_json::json!({"epochs": 0}));
    let o = argbound(d, &["train", "--config", "zero.json", "--out", "z.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let z: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("z.json")).unwrap()).unwrap();
    assert_eq!(z["epoch"], 0);
    assert!(z["best_score"].is_null());

    let o = argbound(d, &["train", "--config", "config.json", "--out", "b.json", "--binary"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.join("b.json.bin").exists());
    let o = argbound(d, &["train", "--config", "config.json", "--out", "j.json"]);
    assert_eq!(code(&o), 0);
    for (model, out) in [("b.json", "pb.conll"), ("j.json", "pj.conll")] {
        let o = argbound(d, &["predict", "--model", model, "--input", "test.conll", "--output", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(d.join("pb.conll")).unwrap(), fs::read(d.join("pj.conll")).unwrap());
}

#[test]
fn gradcheck_reports() {
    let dir = tempfile::tempdir().unwrap();
    for model in ["bilstm", "bilstm-crf", "classifier", "joint"] {
        let o = argbound(dir.path(), &["gradcheck", "--model", model]);
        assert_eq!(code(&o), 0, "{model}: {}", stdout(&o));
        assert!(stdout(&o).ends_with("PASS\n"));
    }
    let o = argbound(dir.path(), &["gradcheck", "--model", "joint", "--detach-p"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("p-path: skipped"));
    assert_eq!(code(&argbound(dir.path(), &["gradcheck", "--model", "bilstm", "--detach-p"])), 2);
}

#[test]
fn seed_comes_from_the_environment() {
    let ws = workspace();
    let d = ws.path();
    let cfg = fs::read_to_string(d.join("config.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&cfg).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    fs::write(d.join("noseed.json"), v.to_string()).unwrap();
    let run = |seed: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_argbound"))
            .args(["train", "--config", "noseed.json", "--out", out])
            .current_dir(d)
            .env("ARGBOUND_SEED", seed)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(d.join(out)).unwrap()
    };
    assert_eq!(run("4", "a.json"), run("4", "b.json"));
    assert_ne!(run("4", "a.json"), run("5", "c.json"));
}
