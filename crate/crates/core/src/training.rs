//! Mini-batch Adam with L2 regularization and validation-based model selection.

use std::fmt;

use log::info;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{EmbeddingTable, LabeledSentence};
use crate::error::{Error, Result};
use crate::eval::{classification_prf, token_prf};
use crate::graph::{Graph, Var};
use crate::models::{Model, ModelConfig, ModelKind};
use crate::param::{ParamKind, ParamStore};
use crate::rng::Prng;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// Token-level macro-F1 over B, I and O.
    TokenMacroF1,
    /// F1 of the argumentative class.
    ClassificationF1,
}

impl SelectionMetric {
    pub fn default_for(kind: ModelKind) -> Self {
        if kind == ModelKind::Classifier {
            SelectionMetric::ClassificationF1
        } else {
            SelectionMetric::TokenMacroF1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub l2: f64,
    pub hidden: usize,
    pub attention_hidden: usize,
    pub embedding_dim: usize,
    pub layers: usize,
    pub seed: u64,
    pub undersample_ratio: Option<f64>,
    pub loss_weight_cls: f64,
    pub detach_p: bool,
    pub oracle_mode: bool,
    pub shared_dropout_mask: bool,
    pub selection_metric: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Joint,
            learning_rate: 0.001,
            batch_size: 50,
            epochs: 200,
            dropout: 0.5,
            l2: 0.001,
            hidden: 150,
            attention_hidden: 150,
            embedding_dim: 300,
            layers: 1,
            seed: 0,
            undersample_ratio: None,
            loss_weight_cls: 1.0,
            detach_p: false,
            oracle_mode: false,
            shared_dropout_mask: false,
            selection_metric: SelectionMetric::TokenMacroF1,
        }
    }
}

impl TrainConfig {
    pub fn for_model(model: ModelKind) -> Self {
        TrainConfig {
            model,
            selection_metric: SelectionMetric::default_for(model),
            ..Self::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            hidden: self.hidden,
            attention_hidden: self.attention_hidden,
            layers: self.layers,
            dropout: self.dropout,
            shared_dropout_mask: self.shared_dropout_mask,
            detach_p: self.detach_p,
            oracle_mode: self.oracle_mode,
            loss_weight_cls: self.loss_weight_cls,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("batch_size and embedding_dim must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if let Some(r) = self.undersample_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("undersample_ratio must be positive, got {r}")));
            }
        }
        if self.selection_metric == SelectionMetric::ClassificationF1 && !self.model.has_classifier() {
            return Err(Error::Config(format!(
                "classification_f1 selection needs a classifier; {} has none",
                self.model
            )));
        }
        if self.selection_metric == SelectionMetric::TokenMacroF1 && !self.model.tags_tokens() {
            return Err(Error::Config(format!("token_macro_f1 selection needs a tagger; {} has none", self.model)));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients, which are then zeroed.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f64) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::arg("optimizer state was built for a different parameter set"));
    }
    for (_, p) in store.iter() {
        if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                param: p.name.clone(),
                detail: format!("gradient entry {i} is {}", p.grad.data()[i]),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let ids = store.trainable_ids();
    for id in ids {
        let i = id.index();
        let p = store.get_mut(id);
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        let grad = p.grad.data();
        for (j, theta) in p.value.data_mut().iter_mut().enumerate() {
            let g = grad[j];
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    store.zero_grad();
    Ok(())
}

fn regularized(p: &crate::param::Parameter) -> bool {
    p.trainable && p.kind == ParamKind::Weight
}

/// `weight * sum(theta^2)` over trainable weight matrices.
pub fn l2_penalty(store: &ParamStore, weight: f64) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    let sq: f64 = store
        .iter()
        .filter(|(_, p)| regularized(p))
        .map(|(_, p)| p.value.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    weight * sq
}

/// Adds `2 * weight * theta` to the gradient accumulators of the regularized parameters.
pub fn add_l2_gradient(store: &mut ParamStore, weight: f64) {
    if weight == 0.0 {
        return;
    }
    for id in store.trainable_ids() {
        let p = store.get_mut(id);
        if p.kind != ParamKind::Weight {
            continue;
        }
        for (g, v) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
            *g += 2.0 * weight * v;
        }
    }
}

/// The penalty as a graph node, for gradient checking `loss + penalty`.
pub fn l2_penalty_graph(g: &mut Graph, weight: f64) -> Result<Option<Var>> {
    let store = g.store();
    let ids: Vec<_> = store.iter().filter(|(_, p)| regularized(p)).map(|(id, _)| id).collect();
    let mut total: Option<Var> = None;
    for id in ids {
        let p = g.param(id);
        let sq = g.mul(p, p)?;
        let s = g.sum(sq);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    Ok(total.map(|t| g.scale(t, weight)))
}

/// Score of `model` on `sentences` under the selection metric.
pub fn validation_score(model: &Model, sentences: &[LabeledSentence], metric: SelectionMetric) -> Result<f64> {
    let preds = sentences.iter().map(|s| model.predict(s)).collect::<Result<Vec<_>>>()?;
    match metric {
        SelectionMetric::TokenMacroF1 => {
            let pred_tags = preds
                .into_iter()
                .map(|p| p.tags.ok_or_else(|| Error::Config(format!("{} does not tag tokens", model.kind()))))
                .collect::<Result<Vec<_>>>()?;
            let gold: Vec<&[crate::tag::Tag]> = sentences.iter().map(|s| s.tags()).collect();
            Ok(token_prf(&gold, &pred_tags)?.macro_avg.f1)
        }
        SelectionMetric::ClassificationF1 => {
            let gold: Vec<bool> = sentences.iter().map(|s| s.argumentative()).collect();
            let pred: Vec<bool> = preds.iter().map(|p| p.argumentative).collect();
            Ok(classification_prf(&gold, &pred)?.scores.f1)
        }
    }
}

/// Accumulates the mean sentence loss of `batch` plus the L2 term and
/// returns that objective; gradients are left in the store.
pub fn accumulate_batch(
    model: &mut Model,
    batch: &[&LabeledSentence],
    l2: f64,
    mut dropout: Option<&mut Prng>,
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let (loss, grads) = model.loss_and_gradients(s, dropout.as_deref_mut())?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                param: "loss".into(),
                detail: format!("sentence loss is {loss}"),
            });
        }
        model.params.accumulate(&grads, scale);
        total += loss * scale;
    }
    add_l2_gradient(&mut model.params, l2);
    Ok(total + l2_penalty(&model.params, l2))
}

/// Repeated Adam steps on one fixed batch without dropout; returns the
/// objective measured before each step.
pub fn fit_batch(
    model: &mut Model,
    batch: &[LabeledSentence],
    steps: usize,
    lr: f64,
    l2: f64,
) -> Result<Vec<f64>> {
    let refs: Vec<&LabeledSentence> = batch.iter().collect();
    let mut adam = AdamState::new(&model.params);
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        model.params.zero_grad();
        losses.push(accumulate_batch(model, &refs, l2, None)?);
        adam_step(&mut model.params, &mut adam, lr)?;
    }
    Ok(losses)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: f64,
    pub best: f64,
}

impl fmt::Display for EpochReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} train_loss={:.6} val_f1={:.6} best={:.6}",
            self.epoch, self.train_loss, self.val_score, self.best
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochReport>,
}

/// Full training run. Sentences are reshuffled every epoch with the run
/// seed; each batch takes one Adam step on the mean sentence loss plus
/// the L2 penalty. The parameters from the epoch with the highest
/// validation score (first one on ties) are returned.
pub fn train(
    config: &TrainConfig,
    table: EmbeddingTable,
    train_set: &[LabeledSentence],
    validation: &[LabeledSentence],
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    if table.dim() != config.embedding_dim {
        return Err(Error::ModelMismatch(format!(
            "embeddings have dimension {}, config says {}",
            table.dim(),
            config.embedding_dim
        )));
    }

    let mut root = Prng::new(config.seed);
    let mut init_rng = root.fork();
    let mut shuffle_rng = root.fork();
    let mut dropout_rng = root.fork();

    let mut model = Model::new(config.model_config(), table, &mut init_rng)?;
    let mut adam = AdamState::new(&model.params);
    let mut best_params = model.params.clone();
    let mut best: Option<(f64, usize)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledSentence> = chunk.iter().map(|&i| &train_set[i]).collect();
            model.params.zero_grad();
            loss_sum += accumulate_batch(&mut model, &batch, config.l2, Some(&mut dropout_rng))?;
            adam_step(&mut model.params, &mut adam, config.learning_rate)?;
            batches += 1;
        }
        let score = validation_score(&model, validation, config.selection_metric)?;
        if score.is_nan() {
            return Err(Error::NonFinite {
                param: "validation".into(),
                detail: format!("validation score is NaN after epoch {epoch}"),
            });
        }
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, epoch));
            best_params = model.params.clone();
        }
        let report = EpochReport {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_score: score,
            best: best.map_or(f64::NEG_INFINITY, |(b, _)| b),
        };
        info!("{report}");
        on_epoch(&report);
        history.push(report);
    }

    model.params = best_params;
    model.params.zero_grad();
    let (best_score, best_epoch) = match best {
        Some((s, e)) => (Some(s), e),
        None => (None, 0),
    };
    let checkpoint = Checkpoint::from_model(&model, config, best_epoch, best_score);
    Ok(TrainOutcome {
        model,
        checkpoint,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::gradient_check;
    use crate::param::ParamId;
    use crate::tag::Tag;

    fn one_param(kind: ParamKind, values: Vec<f64>, shape: Vec<usize>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::new(shape, values).unwrap(), kind, true).unwrap();
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, id) = one_param(ParamKind::Weight, vec![0.3, -0.7], vec![1, 2]);
        let mut adam = AdamState::new(&store);
        adam_step(&mut store, &mut adam, 0.001).unwrap();
        assert_eq!(store.value(id).data(), &[0.3, -0.7]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut store, id) = one_param(ParamKind::Weight, vec![0.0], vec![1, 1]);
        store.get_mut(id).grad.data_mut()[0] = 1.0;
        let mut adam = AdamState::new(&store);
        adam_step(&mut store, &mut adam, 0.001).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction.
        let expected = -0.001 * (1.0 / (1.0 + 1e-8));
        assert!((store.value(id).data()[0] - expected).abs() < 1e-18);
        assert_eq!(store.get(id).grad.data(), &[0.0]);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let (mut store, id) = one_param(ParamKind::Weight, vec![0.0], vec![1, 1]);
        store.get_mut(id).grad.data_mut()[0] = f64::NAN;
        let mut adam = AdamState::new(&store);
        match adam_step(&mut store, &mut adam, 0.001) {
            Err(Error::NonFinite { param, .. }) => assert_eq!(param, "theta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn l2_hand_values() {
        let (store, _) = one_param(ParamKind::Weight, vec![3.0, 4.0], vec![2, 1]);
        assert!((l2_penalty(&store, 0.001) - 0.025).abs() < 1e-15);
        assert_eq!(l2_penalty(&store, 0.0), 0.0);
        let (bias, _) = one_param(ParamKind::Bias, vec![3.0, 4.0], vec![1, 2]);
        assert_eq!(l2_penalty(&bias, 0.001), 0.0);
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let (mut store, id) = one_param(ParamKind::Weight, vec![3.0, -4.0, 0.5], vec![3, 1]);
        add_l2_gradient(&mut store, 0.01);
        assert_eq!(store.get(id).grad.data(), &[0.06, -0.08, 0.01]);
        let report = gradient_check(&mut store, &[id], 1e-5, |g| {
            let p = g.param(id);
            let s = g.sum(p);
            let pen = l2_penalty_graph(g, 0.01)?.unwrap();
            g.add(s, pen)
        })
        .unwrap();
        assert!(report.passes(1e-4));
    }

    fn tiny_data() -> (EmbeddingTable, Vec<LabeledSentence>) {
        let mut rng = Prng::new(5);
        let words: Vec<String> = ["a", "b", "c", "[[", "]]"].map(String::from).to_vec();
        let table = EmbeddingTable::random(words, 4, 1.0, &mut rng).unwrap();
        let s = |toks: &[&str], tags: &[Tag]| {
            LabeledSentence::new(toks.iter().map(|t| t.to_string()).collect(), tags.to_vec(), 0.5).unwrap()
        };
        let data = vec![
            s(&["a", "[[", "b", "c", "]]"], &[Tag::O, Tag::O, Tag::B, Tag::I, Tag::O]),
            s(&["c", "a", "b"], &[Tag::O, Tag::O, Tag::O]),
            s(&["[[", "a", "]]", "b"], &[Tag::O, Tag::B, Tag::O, Tag::O]),
            s(&["b", "b"], &[Tag::O, Tag::O]),
        ];
        (table, data)
    }

    fn tiny_config(model: ModelKind) -> TrainConfig {
        TrainConfig {
            hidden: 4,
            attention_hidden: 3,
            embedding_dim: 4,
            batch_size: 2,
            epochs: 3,
            dropout: 0.2,
            learning_rate: 0.01,
            seed: 7,
            ..TrainConfig::for_model(model)
        }
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let (table, data) = tiny_data();
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_config(ModelKind::BilstmCrf)
        };
        let out = train(&cfg, table.clone(), &data, &data, |_| {}).unwrap();
        assert_eq!(out.checkpoint.best_score, None);
        assert_eq!(out.checkpoint.epoch, 0);
        let mut root = Prng::new(cfg.seed);
        let fresh = Model::new(cfg.model_config(), table, &mut root.fork()).unwrap();
        for ((_, a), (_, b)) in out.model.params.iter().zip(fresh.params.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn best_epoch_is_the_maximum() {
        let (table, data) = tiny_data();
        let cfg = TrainConfig {
            epochs: 6,
            ..tiny_config(ModelKind::Tagger)
        };
        let mut seen = Vec::new();
        let out = train(&cfg, table, &data, &data, |r| seen.push(*r)).unwrap();
        let max = seen.iter().map(|r| r.val_score).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.checkpoint.best_score, Some(max));
        assert!(max >= seen.last().unwrap().val_score);
        let rescored = validation_score(&out.model, &data, cfg.selection_metric).unwrap();
        assert_eq!(rescored, max);
    }

    #[test]
    fn training_is_deterministic() {
        let (table, data) = tiny_data();
        let cfg = tiny_config(ModelKind::Joint);
        let a = train(&cfg, table.clone(), &data, &data, |_| {}).unwrap();
        let b = train(&cfg, table, &data, &data, |_| {}).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.checkpoint.to_json().unwrap(), b.checkpoint.to_json().unwrap());
    }

    #[test]
    fn fixed_batch_loss_mostly_decreases() {
        let (table, data) = tiny_data();
        let mut model = Model::new(tiny_config(ModelKind::Joint).model_config(), table, &mut Prng::new(1)).unwrap();
        let losses = fit_batch(&mut model, &data, 300, 0.01, 0.001).unwrap();
        let windows: Vec<bool> = losses.windows(50).map(|w| w[49] <= w[0]).collect();
        let ok = windows.iter().filter(|&&b| b).count();
        assert!(ok as f64 >= 0.9 * windows.len() as f64, "{ok}/{}", windows.len());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            selection_metric: SelectionMetric::ClassificationF1,
            ..TrainConfig::for_model(ModelKind::Tagger)
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::for_model(ModelKind::Classifier).validate().is_ok());
    }
}
