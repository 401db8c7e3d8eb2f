//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use argbound::corpus::{split_validation, LabeledSentence};
use argbound::crf::{brute_force_best, brute_force_partition, log_partition, viterbi};
use argbound::eval::{exact_match_prf, token_prf, Span};
use argbound::models::{small_config, small_instance};
use argbound::synthetic::{generate, SyntheticData, SyntheticOptions};
use argbound::training::{fit_batch, train, validation_score, SelectionMetric, TrainConfig};
use argbound::{Model, ModelKind, Prng, Tag, Tensor};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Prng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
}

fn crf_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Prng::new(2024);
    let mut worst: f64 = 0.0;
    let mut path_mismatches = 0;
    for _ in 0..200 {
        let t = 1 + rng.below(6);
        let k = 1 + rng.below(4);
        let p = random_matrix(t, k, &mut rng);
        let a = random_matrix(k + 2, k + 2, &mut rng);
        let z = log_partition(&p, &a).unwrap();
        let z_brute = brute_force_partition(&p, &a).unwrap();
        worst = worst.max((z - z_brute).abs());
        let (path, _) = viterbi(&p, &a).unwrap();
        let (best, _) = brute_force_best(&p, &a).unwrap();
        path_mismatches += usize::from(path != best);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && path_mismatches == 0 && within(elapsed, 10),
        format!(
            "200 instances, max |log Z - brute force| = {worst:.2e} (< 1e-8), viterbi mismatches = {path_mismatches}, {:.2?} (< 10 s)",
            elapsed
        ),
    )
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let variants = [
        ("bilstm", ModelKind::Tagger, false),
        ("bilstm-crf", ModelKind::BilstmCrf, false),
        ("classifier", ModelKind::Classifier, false),
        ("joint", ModelKind::Joint, false),
        ("joint+detach_p", ModelKind::Joint, true),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, kind, detach) in variants {
        let mut worst: f64 = 0.0;
        for seed in 0..3 {
            let mut cfg = small_config(kind);
            cfg.detach_p = detach;
            let (mut model, sentence) = small_instance(cfg, seed).unwrap();
            assert!(sentence.len() <= 6);
            let (report, _) = model.gradient_check(&sentence, 1e-5, 0.001).unwrap();
            worst = worst.max(report.max_relative_error);
        }
        ok &= worst < 1e-4;
        parts.push(format!("{label} {worst:.1e}"));
    }
    let elapsed = start.elapsed();
    outcome(
        ok && within(elapsed, 60),
        format!(
            "max relative error per model (< 1e-4, eps 1e-5, d=8 H=5 da=6 k=3 T=5): {}, {:.2?} (< 60 s)",
            parts.join(", "),
            elapsed
        ),
    )
}

fn synthetic() -> SyntheticData {
    generate(&SyntheticOptions::default()).unwrap()
}

fn overfit(data: &SyntheticData) -> Outcome {
    let start = Instant::now();
    let batch: Vec<LabeledSentence> = data.train.sentences().take(8).cloned().collect();
    let cfg = TrainConfig {
        hidden: 16,
        attention_hidden: 8,
        embedding_dim: 16,
        dropout: 0.0,
        ..TrainConfig::for_model(ModelKind::Joint)
    };
    let mut model = Model::new(cfg.model_config(), data.embeddings.clone(), &mut Prng::new(0)).unwrap();
    let mut losses = fit_batch(&mut model, &batch, 500, 0.001, 0.0).unwrap();
    let after: f64 = batch.iter().map(|s| model.loss(s).unwrap()).sum::<f64>() / batch.len() as f64;
    losses.push(after);
    let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();
    outcome(
        best < 0.01 && within(elapsed, 60),
        format!(
            "joint loss on 8 sentences, 500 Adam steps at lr 0.001: start {:.4}, final {after:.4}, best {best:.4} (< 0.01), {:.2?} (< 60 s)",
            losses[0], elapsed
        ),
    )
}

/// Held-out token macro-F1 per (model, oracle, seed) run, trained for 50 epochs.
struct Runs<'a> {
    data: &'a SyntheticData,
    train: Vec<LabeledSentence>,
    val: Vec<LabeledSentence>,
    test: Vec<LabeledSentence>,
    cache: HashMap<(ModelKind, bool, u64), f64>,
}

impl<'a> Runs<'a> {
    fn new(data: &'a SyntheticData) -> Self {
        let all: Vec<LabeledSentence> = data.train.sentences().cloned().collect();
        let (train, val) = split_validation(&all, 0.1, &mut Prng::new(0)).unwrap();
        Runs {
            data,
            train,
            val,
            test: data.test.sentences().cloned().collect(),
            cache: HashMap::new(),
        }
    }

    fn f1(&mut self, kind: ModelKind, oracle: bool, seed: u64) -> f64 {
        if let Some(&f) = self.cache.get(&(kind, oracle, seed)) {
            return f;
        }
        let cfg = TrainConfig {
            hidden: 16,
            attention_hidden: 8,
            embedding_dim: 16,
            dropout: 0.1,
            l2: 0.0001,
            learning_rate: 0.01,
            batch_size: 10,
            epochs: 50,
            seed,
            oracle_mode: oracle,
            ..TrainConfig::for_model(kind)
        };
        let out = train(&cfg, self.data.embeddings.clone(), &self.train, &self.val, |_| {}).unwrap();
        let f = validation_score(&out.model, &self.test, SelectionMetric::TokenMacroF1).unwrap();
        self.cache.insert((kind, oracle, seed), f);
        f
    }

    fn mean(&mut self, kind: ModelKind, oracle: bool) -> f64 {
        (0..3).map(|s| self.f1(kind, oracle, s)).sum::<f64>() / 3.0
    }
}

fn end_to_end(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let f = runs.f1(ModelKind::Joint, false, 0);
    let elapsed = start.elapsed();
    outcome(
        f >= 0.95 && within(elapsed, 300),
        format!(
            "joint model, 200 train / 50 test synthetic sentences, 50 epochs: held-out macro-F1 {f:.4} (>= 0.95), {:.2?} (< 300 s)",
            elapsed
        ),
    )
}

fn ordering(runs: &mut Runs) -> Outcome {
    let joint = runs.mean(ModelKind::Joint, false);
    let crf = runs.mean(ModelKind::BilstmCrf, false);
    let tagger = runs.mean(ModelKind::Tagger, false);
    outcome(
        joint >= crf - 0.02 && crf - 0.02 >= tagger - 0.04,
        format!(
            "3-seed mean macro-F1: joint {joint:.4}, bilstm-crf {crf:.4}, bilstm {tagger:.4}; need joint >= crf - 0.02 >= bilstm - 0.04"
        ),
    )
}

fn oracle_status(runs: &mut Runs) -> Outcome {
    let oracle = runs.mean(ModelKind::Joint, true);
    let joint = runs.mean(ModelKind::Joint, false);
    outcome(
        oracle >= joint - 0.01,
        format!("3-seed mean macro-F1: oracle joint {oracle:.4}, joint {joint:.4}; need oracle >= joint - 0.01"),
    )
}

fn metrics() -> Outcome {
    use Tag::*;
    let r = token_prf(&[[B, I, O, O]], &[[B, O, O, O]]).unwrap();
    // B: 1 TP. I: 1 FN. O: 2 TP, 1 FP -> P 2/3, R 1, F1 0.8.
    let token_ok = (r.tag(B).f1 - 1.0).abs() < 1e-12
        && r.tag(I).f1.abs() < 1e-12
        && (r.tag(O).f1 - 0.8).abs() < 1e-12
        && (r.macro_avg.f1 - 0.6).abs() < 1e-12;

    let span = |sentence, start, end| Span { sentence, start, end };
    let gold = [span(0, 0, 1), span(1, 2, 3)];
    let pred = [span(0, 0, 1), span(0, 3, 3), span(1, 2, 2)];
    let e = exact_match_prf(&gold, &pred);
    let span_ok = (e.scores.precision - 1.0 / 3.0).abs() < 1e-12
        && (e.scores.recall - 0.5).abs() < 1e-12
        && (e.scores.f1 - 0.4).abs() < 1e-12;
    outcome(
        token_ok && span_ok,
        format!(
            "token macro-F1 {:.12} (0.6), F1-O {:.12} (0.8); exact match P {:.12} R {:.12} F1 {:.12} (1/3, 1/2, 0.4)",
            r.macro_avg.f1, r.tag(O).f1, e.scores.precision, e.scores.recall, e.scores.f1
        ),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_argbound"))
        .args(args)
        .current_dir(dir)
        .env_remove("ARGBOUND_SEED")
        .output()
        .expect("binary runs");
    (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ok, err) = run_cli(&["synth", "--out-dir", ".", "--seed", "11", "--epochs", "5"], d);
    if !ok {
        return outcome(false, format!("synth failed: {err}"));
    }
    for out in ["a.json", "b.json"] {
        let (ok, err) = run_cli(&["train", "--config", "config.json", "--out", out], d);
        if !ok {
            return outcome(false, format!("train failed: {err}"));
        }
    }
    let a = fs::read(d.join("a.json")).unwrap();
    let b = fs::read(d.join("b.json")).unwrap();
    outcome(
        a == b,
        format!("two `argbound train` runs, same seed/config/data: {} and {} bytes, identical = {}", a.len(), b.len(), a == b),
    )
}

fn main() {
    let data = synthetic();
    let mut runs = Runs::new(&data);
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "CRF oracle equivalence", crf_oracle()),
        (2, "gradient suite", gradient_suite()),
        (3, "overfit check", overfit(&data)),
        (4, "synthetic end-to-end", end_to_end(&mut runs)),
        (5, "model ordering", ordering(&mut runs)),
        (6, "oracle status", oracle_status(&mut runs)),
        (7, "metrics unit suite", metrics()),
        (8, "determinism", determinism()),
    ];

    let mut failed = 0;
    for (n, name, o) in &results {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {n} [{verdict}] {name}: {}", o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
