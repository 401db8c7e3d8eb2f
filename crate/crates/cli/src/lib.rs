//! Command implementations behind the `argbound` binary.
//!
//! Exit codes: 0 success, 1 failed check or internal error, 2 configuration,
//! 3 input data, 4 checkpoint/model mismatch, 5 misaligned evaluation files.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use argbound::checkpoint::Checkpoint;
use argbound::corpus::{
    load_embedding_text, parse_conll, serialize_conll, split_validation, undersample, Corpus, LabeledSentence,
};
use argbound::eval::{classification_prf, exact_match_prf, extract_spans, token_prf};
use argbound::gradcheck::{DEFAULT_EPS, DEFAULT_TOLERANCE};
use argbound::models::{small_config, small_instance};
use argbound::synthetic::{generate, SyntheticOptions};
use argbound::training::train;
use argbound::{Error, ModelKind, Prng, Tag};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, SEED_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_MODEL: i32 = 4;
pub const EXIT_ALIGN: i32 = 5;

/// Prefix of the per-sentence classifier probability comment.
pub const ARG_PROB_PREFIX: &str = "# arg_prob=";

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Parse { .. } | Error::Format { .. } | Error::Io(_) => EXIT_DATA,
        Error::ModelMismatch(_) => EXIT_MODEL,
        _ => EXIT_CHECK,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(code_for(&e), e.to_string())
    }
}

fn io_failure(code: i32, path: &Path, e: std::io::Error) -> Failure {
    Failure::new(code, format!("{}: {e}", path.display()))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::new(EXIT_CHECK, format!("writing output: {e}")))
}

#[derive(Debug, Parser)]
#[command(name = "argbound", version, about = "Argument component boundary detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the best validation checkpoint.
    Train(TrainArgs),
    /// Tag a CoNLL file with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a small random instance.
    Gradcheck(GradcheckArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Write the seeded synthetic corpus, its embeddings and a small config.
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `train_path` from the config.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Overrides `output_path` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Store parameter data in a binary sidecar next to the checkpoint.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Debug, clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Token,
    Span,
    Classify,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Token)]
    pub mode: EvalMode,
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    /// bilstm, bilstm-crf, classifier or joint.
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Block gradients from the tagging loss into the classifier.
    #[arg(long)]
    pub detach_p: bool,
}

#[derive(Debug, clap::Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub train_sentences: usize,
    #[arg(long, default_value_t = 50)]
    pub test_sentences: usize,
    /// Epoch count written into the generated config.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn read_corpus(path: &Path) -> Result<Corpus, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(EXIT_DATA, path, e))?;
    parse_conll(&text).map_err(|e| Failure::new(code_for(&e), format!("{}: {e}", path.display())))
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_failure(EXIT_CONFIG, &args.config, e))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let run = RunConfig::from_json(&text, base)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", args.config.display())))?;
    let cfg = &run.train;

    let train_path = args
        .train
        .clone()
        .or(run.train_path.clone())
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "no training data: set train_path or pass --train"))?;
    let emb_path = run
        .embeddings_path
        .clone()
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "embeddings_path is required"))?;
    let out_path = args
        .out
        .clone()
        .or(run.output_path.clone())
        .unwrap_or_else(|| PathBuf::from("model.json"));

    let corpus = read_corpus(&train_path)?;
    let mut root = Prng::new(cfg.seed);
    let mut emb_rng = root.fork();
    let mut data_rng = root.fork();
    let table = load_embedding_text(&emb_path, cfg.embedding_dim, &mut emb_rng)
        .map_err(|e| Failure::new(code_for(&e), format!("{}: {e}", emb_path.display())))?
        .table;

    let mut sentences: Vec<LabeledSentence> = corpus.sentences().cloned().collect();
    if let Some(ratio) = cfg.undersample_ratio {
        sentences = undersample(&sentences, ratio, &mut data_rng)?;
    }
    let (train_set, val_set) = split_validation(&sentences, run.validation_fraction, &mut data_rng)?;
    log::info!(
        "training {} on {} sentences, validating on {}",
        cfg.model,
        train_set.len(),
        val_set.len()
    );

    let mut lines = String::new();
    let outcome = train(cfg, table, &train_set, &val_set, |r| {
        let _ = writeln!(lines, "{r}");
    })?;
    write_out(out, &lines)?;
    let binary = args.binary || run.binary_sidecar;
    outcome.checkpoint.save(&out_path, binary).map_err(|e| match e {
        Error::Io(io) => io_failure(EXIT_CHECK, &out_path, io),
        other => other.into(),
    })?;
    write_out(out, &format!("checkpoint={}\n", out_path.display()))
}

fn load_model(path: &Path) -> Result<argbound::Model, Failure> {
    let ckpt = Checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => io_failure(EXIT_MODEL, path, io),
        other => Failure::new(EXIT_MODEL, format!("{}: {other}", path.display())),
    })?;
    ckpt.to_model()
        .map_err(|e| Failure::new(EXIT_MODEL, format!("{}: {e}", path.display())))
}

fn is_token_line(line: &str) -> bool {
    !line.trim().is_empty() && !line.starts_with('#')
}

/// Rewrites `input` with predicted tags. Existing `# arg_prob=` comments are
/// dropped; models with a classifier add a fresh one after each sentence's
/// last line.
pub fn render_predictions(input: &str, predictions: &[argbound::Prediction]) -> Result<String, Failure> {
    let mut out = String::with_capacity(input.len() + predictions.len() * 24);
    let mut sentence = 0usize;
    let mut token = 0usize;
    let mut in_sentence = false;

    let close = |out: &mut String, sentence: &mut usize, in_sentence: &mut bool| {
        if let Some(p) = predictions[*sentence].arg_prob {
            let _ = writeln!(out, "{ARG_PROB_PREFIX}{p:.6}");
        }
        *sentence += 1;
        *in_sentence = false;
    };

    for raw in input.lines() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.starts_with(ARG_PROB_PREFIX) {
            continue;
        }
        if line.trim().is_empty() {
            if in_sentence {
                close(&mut out, &mut sentence, &mut in_sentence);
            }
            out.push_str(line);
            out.push('\n');
            continue;
        }
        if !is_token_line(line) {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        if !in_sentence {
            in_sentence = true;
            token = 0;
        }
        let pred = predictions
            .get(sentence)
            .ok_or_else(|| Failure::new(EXIT_CHECK, "more sentences in input than predictions"))?;
        let tok = line.split('\t').next().unwrap_or(line);
        let tag = match &pred.tags {
            Some(tags) => tags[token],
            None => Tag::O,
        };
        let _ = writeln!(out, "{tok}\t{tag}");
        token += 1;
    }
    if in_sentence {
        close(&mut out, &mut sentence, &mut in_sentence);
    }
    Ok(out)
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let text = fs::read_to_string(&args.input).map_err(|e| io_failure(EXIT_DATA, &args.input, e))?;
    let corpus =
        parse_conll(&text).map_err(|e| Failure::new(code_for(&e), format!("{}: {e}", args.input.display())))?;
    let predictions = corpus
        .sentences()
        .map(|s| model.predict(s))
        .collect::<argbound::Result<Vec<_>>>()?;
    let rendered = render_predictions(&text, &predictions)?;
    fs::write(&args.output, rendered).map_err(|e| io_failure(EXIT_CHECK, &args.output, e))?;
    write_out(
        out,
        &format!(
            "sentences={} model={} output={}\n",
            predictions.len(),
            model.kind(),
            args.output.display()
        ),
    )
}

/// `# arg_prob=` values per sentence, in corpus order.
pub fn sentence_arg_probs(text: &str) -> Result<Vec<Option<f64>>, Failure> {
    let mut probs = Vec::new();
    let mut current: Option<f64> = None;
    let mut in_sentence = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if in_sentence {
                probs.push(current.take());
                in_sentence = false;
            }
        } else if let Some(v) = line.strip_prefix(ARG_PROB_PREFIX) {
            let p: f64 = v
                .trim()
                .parse()
                .map_err(|_| Failure::new(EXIT_DATA, format!("line {}: bad arg_prob `{v}`", i + 1)))?;
            current = Some(p);
        } else if is_token_line(line) {
            in_sentence = true;
        }
    }
    if in_sentence {
        probs.push(current.take());
    }
    Ok(probs)
}

fn check_alignment(gold: &[&LabeledSentence], pred: &[&LabeledSentence]) -> Result<(), Failure> {
    if gold.len() != pred.len() {
        return Err(Failure::new(
            EXIT_ALIGN,
            format!("gold has {} sentences, predictions have {}", gold.len(), pred.len()),
        ));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        for j in 0..g.len().max(p.len()) {
            let (gt, pt) = (g.tokens().get(j), p.tokens().get(j));
            if gt != pt {
                return Err(Failure::new(
                    EXIT_ALIGN,
                    format!(
                        "token mismatch at sentence {} token {}: gold `{}` vs predicted `{}`",
                        i + 1,
                        j + 1,
                        gt.map_or("<end>", |s| s.as_str()),
                        pt.map_or("<end>", |s| s.as_str())
                    ),
                ));
            }
        }
    }
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let gold_corpus = read_corpus(&args.gold)?;
    let pred_text = fs::read_to_string(&args.pred).map_err(|e| io_failure(EXIT_DATA, &args.pred, e))?;
    let pred_corpus = parse_conll(&pred_text)
        .map_err(|e| Failure::new(code_for(&e), format!("{}: {e}", args.pred.display())))?;
    let gold: Vec<&LabeledSentence> = gold_corpus.sentences().collect();
    let pred: Vec<&LabeledSentence> = pred_corpus.sentences().collect();
    check_alignment(&gold, &pred)?;

    let mut report = String::new();
    match args.mode {
        EvalMode::Token => {
            let g: Vec<&[Tag]> = gold.iter().map(|s| s.tags()).collect();
            let p: Vec<&[Tag]> = pred.iter().map(|s| s.tags()).collect();
            let r = token_prf(&g, &p)?;
            let _ = writeln!(report, "{r}");
            for (k, v) in r.key_values() {
                let _ = writeln!(report, "{k}={v:.6}");
            }
        }
        EvalMode::Span => {
            let mut gold_spans = Vec::new();
            let mut pred_spans = Vec::new();
            let mut repaired = 0;
            for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
                let ge = extract_spans(i, g.tags());
                let pe = extract_spans(i, p.tags());
                repaired += ge.repaired + pe.repaired;
                gold_spans.extend(ge.spans);
                pred_spans.extend(pe.spans);
            }
            let r = exact_match_prf(&gold_spans, &pred_spans);
            let _ = writeln!(report, "{r}");
            let _ = writeln!(
                report,
                "precision={:.6}\nrecall={:.6}\nf1={:.6}\ngold_spans={}\npredicted_spans={}\ntrue_positives={}",
                r.scores.precision, r.scores.recall, r.scores.f1, r.gold, r.predicted, r.true_pos
            );
            if repaired > 0 {
                let _ = writeln!(report, "repaired_spans={repaired}");
            }
        }
        EvalMode::Classify => {
            let probs = sentence_arg_probs(&pred_text)?;
            let g: Vec<bool> = gold.iter().map(|s| s.argumentative()).collect();
            let p: Vec<bool> = pred
                .iter()
                .zip(&probs)
                .map(|(s, prob)| prob.map_or(s.argumentative(), |v| v >= 0.5))
                .collect();
            let r = classification_prf(&g, &p)?;
            let _ = writeln!(report, "{r}");
            let _ = writeln!(
                report,
                "precision={:.6}\nrecall={:.6}\nf1={:.6}\naccuracy={:.6}",
                r.scores.precision, r.scores.recall, r.scores.f1, r.accuracy
            );
        }
    }
    write_out(out, &report)
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut config = small_config(args.model);
    if args.detach_p {
        if args.model != ModelKind::Joint {
            return Err(Failure::new(EXIT_CONFIG, "--detach-p only applies to the joint model"));
        }
        config.detach_p = true;
    }
    let (mut model, sentence) = small_instance(config, args.seed)?;
    let (report, p_frozen) = model.gradient_check(&sentence, DEFAULT_EPS, 0.001)?;

    let mut text = format!("model={} seed={} tokens={}\n", args.model, args.seed, sentence.len());
    for p in &report.params {
        let _ = writeln!(
            text,
            "{:<28} entries={:<4} max_rel_err={:.3e} max_abs_err={:.3e}",
            p.name, p.entries, p.max_relative_error, p.max_abs_error
        );
    }
    if p_frozen {
        let _ = writeln!(text, "p-path: skipped (detach_p; classifier output held fixed in the tagging loss)");
    }
    let _ = writeln!(text, "max_rel_err={:.3e}", report.max_relative_error);
    write_out(out, &text)?;
    if report.passes(DEFAULT_TOLERANCE) {
        write_out(out, "PASS\n")
    } else {
        let names: Vec<&str> = report.failing(DEFAULT_TOLERANCE).map(|p| p.name.as_str()).collect();
        write_out(out, "FAIL\n")?;
        Err(Failure::new(
            EXIT_CHECK,
            format!("relative error >= {DEFAULT_TOLERANCE:e} in: {}", names.join(", ")),
        ))
    }
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let corpus = read_corpus(&args.input)?;
    let mut tag_counts = [0usize; 3];
    let mut argumentative = 0;
    let mut spans = 0;
    for (i, s) in corpus.sentences().enumerate() {
        for t in s.tags() {
            tag_counts[t.index()] += 1;
        }
        argumentative += usize::from(s.argumentative());
        spans += extract_spans(i, s.tags()).spans.len();
    }
    let n = corpus.num_sentences();
    let text = format!(
        "documents={}\nsentences={n}\ntokens={}\nargumentative_sentences={argumentative}\n\
         non_argumentative_sentences={}\ncomponents={spans}\ntag_B={}\ntag_I={}\ntag_O={}\n\
         mean_sentence_length={:.3}\n",
        corpus.documents.len(),
        corpus.num_tokens(),
        n - argumentative,
        tag_counts[Tag::B.index()],
        tag_counts[Tag::I.index()],
        tag_counts[Tag::O.index()],
        corpus.num_tokens() as f64 / n as f64,
    );
    write_out(out, &text)
}

/// Config written by `synth`: a small joint model sized for the toy corpus.
pub fn synthetic_config_json(seed: u64, epochs: usize) -> String {
    serde_json::json!({
        "model": "joint",
        "hidden": 16,
        "attention_hidden": 8,
        "embedding_dim": 16,
        "dropout": 0.1,
        "l2": 0.0001,
        "learning_rate": 0.01,
        "batch_size": 10,
        "epochs": epochs,
        "seed": seed,
        "train_path": "train.conll",
        "embeddings_path": "embeddings.txt",
        "output_path": "model.json",
        "validation_fraction": 0.1
    })
    .to_string()
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let data = generate(&SyntheticOptions {
        seed: args.seed,
        train_sentences: args.train_sentences,
        test_sentences: args.test_sentences,
        ..SyntheticOptions::default()
    })?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_failure(EXIT_CHECK, &args.out_dir, e))?;
    let files = [
        ("train.conll", serialize_conll(&data.train)),
        ("test.conll", serialize_conll(&data.test)),
        ("embeddings.txt", data.embeddings.to_text()),
        ("config.json", synthetic_config_json(args.seed, args.epochs) + "\n"),
    ];
    for (name, body) in files {
        let path = args.out_dir.join(name);
        fs::write(&path, body).map_err(|e| io_failure(EXIT_CHECK, &path, e))?;
        write_out(out, &format!("wrote {}\n", path.display()))?;
    }
    Ok(())
}
