//! The four sequence models built from the encoder, attention and CRF pieces.
//!
//! | kind         | head on top of the Bi-LSTM states `h_t`                     |
//! |--------------|-------------------------------------------------------------|
//! | `bilstm`     | per-token softmax over `W [h_t; s] + b`                      |
//! | `bilstm-crf` | emissions `P_t = W_C [h_t; s] + b_C`, CRF over `P`           |
//! | `classifier` | `softmax(W^c [r; a; s] + b^c)`, `r` max-pooled `h`, `a` attention over embeddings |
//! | `joint`      | classifier as above, emissions `tanh(W^s [h_t; s; p] + b^s)` fed to a CRF |
//!
//! `s` is the sentence's relative position in its document and `p` the
//! classifier's two-way probability vector (argumentative first).

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, LabeledSentence};
use crate::crf::{self, CrfParams};
use crate::error::{Error, Result};
use crate::gradcheck::{gradient_check, GradCheckReport};
use crate::graph::{Gradients, Graph, Var};
use crate::param::{glorot_uniform, ParamId, ParamKind, ParamStore};
use crate::rng::Prng;
use crate::rnn::{bilstm_forward, BiLstmParams};
use crate::tag::{Tag, NUM_TAGS};
use crate::tensor::{self, Tensor};
use crate::training::l2_penalty_graph;

/// Classifier output index of the argumentative class.
pub const ARGUMENTATIVE: usize = 0;
/// Classifier output index of the non-argumentative class.
pub const NON_ARGUMENTATIVE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "bilstm")]
    Tagger,
    #[serde(rename = "bilstm-crf")]
    BilstmCrf,
    #[serde(rename = "classifier")]
    Classifier,
    #[serde(rename = "joint")]
    Joint,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Tagger,
        ModelKind::BilstmCrf,
        ModelKind::Classifier,
        ModelKind::Joint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tagger => "bilstm",
            ModelKind::BilstmCrf => "bilstm-crf",
            ModelKind::Classifier => "classifier",
            ModelKind::Joint => "joint",
        }
    }

    pub fn tags_tokens(self) -> bool {
        self != ModelKind::Classifier
    }

    pub fn has_classifier(self) -> bool {
        matches!(self, ModelKind::Classifier | ModelKind::Joint)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model kind `{s}` (expected bilstm, bilstm-crf, classifier or joint)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    pub attention_hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    /// One dropout mask per sentence, repeated over time steps.
    pub shared_dropout_mask: bool,
    /// Stop gradients from the tagging head flowing into the classifier through `p`.
    pub detach_p: bool,
    /// Feed the gold argumentative status as `p` instead of the prediction.
    pub oracle_mode: bool,
    pub loss_weight_cls: f64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, hidden: usize, attention_hidden: usize) -> Self {
        ModelConfig {
            kind,
            hidden,
            attention_hidden,
            layers: 1,
            dropout: 0.0,
            shared_dropout_mask: false,
            detach_p: false,
            oracle_mode: false,
            loss_weight_cls: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.attention_hidden == 0 || self.layers == 0 {
            return Err(Error::Config("hidden sizes and layer count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.loss_weight_cls >= 0.0 && self.loss_weight_cls.is_finite()) {
            return Err(Error::Config("loss_weight_cls must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// Affine map `x W^T + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, prefix: &str, out: usize, inp: usize, rng: &mut Prng) -> Result<Self> {
        Ok(Dense {
            w: store.add(format!("{prefix}.w"), glorot_uniform(out, inp, rng), ParamKind::Weight, true)?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[out]), ParamKind::Bias, true)?,
        })
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.linear(x, w, Some(b))
    }
}

/// Attention pooling over word embeddings plus the two-way status classifier.
#[derive(Debug, Clone, Copy)]
pub struct AttnClassifier {
    pub attn_w: ParamId,
    pub attn_b: ParamId,
    pub attn_u: ParamId,
    pub out: Dense,
}

impl AttnClassifier {
    fn new(store: &mut ParamStore, d: usize, hidden2: usize, attn: usize, rng: &mut Prng) -> Result<Self> {
        Ok(AttnClassifier {
            attn_w: store.add("attention.w", glorot_uniform(attn, d, rng), ParamKind::Weight, true)?,
            attn_b: store.add("attention.b", Tensor::zeros(&[attn]), ParamKind::Bias, true)?,
            attn_u: store.add("attention.u", glorot_uniform(1, attn, rng), ParamKind::Weight, true)?,
            out: Dense::new(store, "classifier", 2, hidden2 + d + 1, rng)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Head {
    Tagger { out: Dense },
    BilstmCrf { connection: Dense, crf: CrfParams },
    Classifier { cls: AttnClassifier },
    Joint { cls: AttnClassifier, emission: Dense, crf: CrfParams },
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// Tagger logits, or CRF emissions, `T x k`.
    pub tag_scores: Option<Var>,
    /// Classifier logits and probabilities, `1 x 2`.
    pub class_logits: Option<Var>,
    pub class_probs: Option<Var>,
}

/// Architecture: configuration, vocabulary and parameter handles. Values live in a [`ParamStore`].
#[derive(Debug)]
pub struct Network {
    config: ModelConfig,
    table: EmbeddingTable,
    unk: ParamId,
    encoder: Vec<BiLstmParams>,
    head: Head,
    encoder_passes: AtomicUsize,
    /// Constant stand-in for `p`; lets finite differences see the same
    /// function as a detached backward pass.
    frozen_p: Option<Tensor>,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            config: self.config.clone(),
            table: self.table.clone(),
            unk: self.unk,
            encoder: self.encoder.clone(),
            head: self.head,
            encoder_passes: AtomicUsize::new(self.encoder_passes()),
            frozen_p: self.frozen_p.clone(),
        }
    }
}

impl Network {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn encoder(&self) -> &[BiLstmParams] {
        &self.encoder
    }

    pub fn unk_param(&self) -> ParamId {
        self.unk
    }

    /// Number of Bi-LSTM encoder runs since construction.
    pub fn encoder_passes(&self) -> usize {
        self.encoder_passes.load(Ordering::Relaxed)
    }

    pub fn crf(&self) -> Option<&CrfParams> {
        match &self.head {
            Head::BilstmCrf { crf, .. } | Head::Joint { crf, .. } => Some(crf),
            _ => None,
        }
    }

    fn classifier(&self) -> Option<&AttnClassifier> {
        match &self.head {
            Head::Classifier { cls } | Head::Joint { cls, .. } => Some(cls),
            _ => None,
        }
    }

    /// `T x d` input rows. Known words are constants; unknown words share the trainable UNK row.
    pub fn embed(&self, g: &mut Graph, sentence: &LabeledSentence) -> Result<Var> {
        let indices = self.table.indices(sentence.tokens());
        let unk_index = self.table.unk_index();
        if !indices.contains(&unk_index) {
            let mut data = Vec::with_capacity(indices.len() * self.table.dim());
            for &i in &indices {
                data.extend_from_slice(self.table.row(i));
            }
            return Ok(g.constant(Tensor::new(vec![indices.len(), self.table.dim()], data)?));
        }
        let unk = g.param(self.unk);
        let rows: Vec<Var> = indices
            .iter()
            .map(|&i| {
                if i == unk_index {
                    unk
                } else {
                    g.constant(Tensor::row_vector(self.table.row(i).to_vec()))
                }
            })
            .collect();
        g.stack_rows(&rows)
    }

    fn dropout(&self, g: &mut Graph, v: Var, rng: &mut Option<&mut Prng>) -> Result<Var> {
        let Some(rng) = rng.as_deref_mut() else {
            return Ok(v);
        };
        let rate = self.config.dropout;
        if rate == 0.0 {
            return Ok(v);
        }
        let shape = g.value(v).shape().to_vec();
        let mask = if self.config.shared_dropout_mask {
            let row = tensor::dropout_mask(&[1, shape[1]], rate, rng, true)?;
            let mut data = Vec::with_capacity(shape[0] * shape[1]);
            for _ in 0..shape[0] {
                data.extend_from_slice(row.data());
            }
            Tensor::new(shape, data)?
        } else {
            tensor::dropout_mask(&shape, rate, rng, true)?
        };
        let m = g.constant(mask);
        g.mul(v, m)
    }

    fn encode(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.encoder_passes.fetch_add(1, Ordering::Relaxed);
        let mut h = x;
        for layer in &self.encoder {
            h = bilstm_forward(g, h, layer)?;
        }
        Ok(h)
    }

    /// Attention weights over the rows of `x` and the weighted sum `a` (`1 x d`, `1 x T`).
    pub fn attention_pool(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let cls = self
            .classifier()
            .ok_or_else(|| Error::arg(format!("{} model has no attention branch", self.kind())))?;
        attention_pool_with(g, x, cls)
    }

    fn position_column(&self, g: &mut Graph, rows: usize, s: f64) -> Var {
        g.constant(Tensor::filled(&[rows, 1], s))
    }

    /// Builds the forward pass. `dropout` carries the mask generator in
    /// training mode; `None` is inference.
    pub fn forward(
        &self,
        g: &mut Graph,
        sentence: &LabeledSentence,
        mut dropout: Option<&mut Prng>,
    ) -> Result<Outputs> {
        let t_len = sentence.len();
        let s = sentence.rel_pos();
        let x = self.embed(g, sentence)?;
        let x_in = self.dropout(g, x, &mut dropout)?;
        let h = self.encode(g, x_in)?;
        let h = self.dropout(g, h, &mut dropout)?;

        let mut out = Outputs {
            tag_scores: None,
            class_logits: None,
            class_probs: None,
        };

        if let Some(cls) = self.classifier() {
            let (a, _) = attention_pool_with(g, x, cls)?;
            let r = g.max_pool(h)?;
            let s_cell = self.position_column(g, 1, s);
            let features = g.concat_cols(&[r, a, s_cell])?;
            let logits = cls.out.apply(g, features)?;
            out.class_logits = Some(logits);
            out.class_probs = Some(g.softmax_rows(logits));
        }

        match &self.head {
            Head::Tagger { out: dense } | Head::BilstmCrf { connection: dense, .. } => {
                let s_col = self.position_column(g, t_len, s);
                let features = g.concat_cols(&[h, s_col])?;
                out.tag_scores = Some(dense.apply(g, features)?);
            }
            Head::Classifier { .. } => {}
            Head::Joint { emission, .. } => {
                let p = if let Some(fixed) = &self.frozen_p {
                    g.constant(fixed.clone())
                } else if self.config.oracle_mode {
                    g.constant(status_one_hot(sentence.argumentative()))
                } else {
                    let probs = out.class_probs.expect("joint model has a classifier");
                    if self.config.detach_p {
                        g.detach(probs)
                    } else {
                        probs
                    }
                };
                let s_col = self.position_column(g, t_len, s);
                let p_rows = g.repeat_rows(p, t_len)?;
                let features = g.concat_cols(&[h, s_col, p_rows])?;
                let pre = emission.apply(g, features)?;
                out.tag_scores = Some(g.tanh(pre));
            }
        }
        Ok(out)
    }

    /// Training objective for one sentence.
    ///
    /// Tagger: mean token cross-entropy. CRF models: negative log-likelihood
    /// of the gold path. Classifier: cross-entropy on the status. Joint:
    /// `loss_weight_cls * CE + NLL`.
    pub fn loss(&self, g: &mut Graph, sentence: &LabeledSentence, dropout: Option<&mut Prng>) -> Result<Var> {
        let out = self.forward(g, sentence, dropout)?;
        let gold = sentence.tag_indices();
        let status = [status_index(sentence.argumentative())];
        match &self.head {
            Head::Tagger { .. } => {
                let logits = out.tag_scores.expect("tagger scores");
                let ce = g.cross_entropy(logits, &gold)?;
                Ok(g.scale(ce, 1.0 / sentence.len() as f64))
            }
            Head::BilstmCrf { crf, .. } => {
                let a = g.param(crf.transitions);
                g.crf_nll(out.tag_scores.expect("emissions"), a, &gold)
            }
            Head::Classifier { .. } => g.cross_entropy(out.class_logits.expect("logits"), &status),
            Head::Joint { crf, .. } => {
                let a = g.param(crf.transitions);
                let nll = g.crf_nll(out.tag_scores.expect("emissions"), a, &gold)?;
                let ce = g.cross_entropy(out.class_logits.expect("logits"), &status)?;
                let weighted = g.scale(ce, self.config.loss_weight_cls);
                g.add(weighted, nll)
            }
        }
    }
}

fn attention_pool_with(g: &mut Graph, x: Var, cls: &AttnClassifier) -> Result<(Var, Var)> {
    let t_len = g.value(x).rows();
    let (w, b, u) = (g.param(cls.attn_w), g.param(cls.attn_b), g.param(cls.attn_u));
    let pre = g.linear(x, w, Some(b))?;
    let f = g.tanh(pre);
    let scores = g.linear(f, u, None)?;
    let scores = g.reshape(scores, vec![1, t_len])?;
    let alphas = g.softmax_rows(scores);
    let a = g.matmul(alphas, x)?;
    Ok((a, alphas))
}

pub fn status_index(argumentative: bool) -> usize {
    if argumentative {
        ARGUMENTATIVE
    } else {
        NON_ARGUMENTATIVE
    }
}

fn status_one_hot(argumentative: bool) -> Tensor {
    let mut t = Tensor::zeros(&[1, 2]);
    t.data_mut()[status_index(argumentative)] = 1.0;
    t
}

/// Decoded output for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `None` for the sentence classifier, which does not tag tokens.
    pub tags: Option<Vec<Tag>>,
    pub argumentative: bool,
    /// Classifier probability of the argumentative class, when the model has a classifier.
    pub arg_prob: Option<f64>,
}

/// A network together with its parameter values.
#[derive(Debug, Clone)]
pub struct Model {
    pub net: Network,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model with Glorot-uniform weights, zero biases (forget gate 1.0) and zero transitions.
    pub fn new(config: ModelConfig, table: EmbeddingTable, rng: &mut Prng) -> Result<Self> {
        config.validate()?;
        let d = table.dim();
        let mut store = ParamStore::new();
        let unk = store.add(
            "embedding.unk",
            Tensor::row_vector(table.unk_row().to_vec()),
            ParamKind::Embedding,
            true,
        )?;
        let mut encoder = Vec::with_capacity(config.layers);
        let mut input = d;
        for layer in 0..config.layers {
            encoder.push(BiLstmParams::new(
                &mut store,
                &format!("encoder.l{layer}"),
                input,
                config.hidden,
                rng,
            )?);
            input = 2 * config.hidden;
        }
        let h2 = 2 * config.hidden;
        let head = match config.kind {
            ModelKind::Tagger => Head::Tagger {
                out: Dense::new(&mut store, "tagger", NUM_TAGS, h2 + 1, rng)?,
            },
            ModelKind::BilstmCrf => Head::BilstmCrf {
                connection: Dense::new(&mut store, "connection", NUM_TAGS, h2 + 1, rng)?,
                crf: CrfParams::new(&mut store, "crf", NUM_TAGS)?,
            },
            ModelKind::Classifier => Head::Classifier {
                cls: AttnClassifier::new(&mut store, d, h2, config.attention_hidden, rng)?,
            },
            ModelKind::Joint => Head::Joint {
                cls: AttnClassifier::new(&mut store, d, h2, config.attention_hidden, rng)?,
                emission: Dense::new(&mut store, "emission", NUM_TAGS, h2 + 1 + 2, rng)?,
                crf: CrfParams::new(&mut store, "crf", NUM_TAGS)?,
            },
        };
        Ok(Model {
            net: Network {
                config,
                table,
                unk,
                encoder,
                head,
                encoder_passes: AtomicUsize::new(0),
                frozen_p: None,
            },
            params: store,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.net.kind()
    }

    pub fn config(&self) -> &ModelConfig {
        self.net.config()
    }

    /// Per-token tag distributions of the `bilstm` tagger, `T x k`.
    pub fn tagger_forward(&self, sentence: &LabeledSentence) -> Result<Tensor> {
        self.expect_kind(&[ModelKind::Tagger], "tagger_forward")?;
        let mut g = Graph::new(&self.params);
        let out = self.net.forward(&mut g, sentence, None)?;
        let probs = g.softmax_rows(out.tag_scores.expect("tagger scores"));
        Ok(g.value(probs).clone())
    }

    /// Emission matrix `P` of the `bilstm-crf` model (or `H^s` of the joint model).
    pub fn emissions(&self, sentence: &LabeledSentence) -> Result<Tensor> {
        self.expect_kind(&[ModelKind::BilstmCrf, ModelKind::Joint], "emissions")?;
        let mut g = Graph::new(&self.params);
        let out = self.net.forward(&mut g, sentence, None)?;
        Ok(g.value(out.tag_scores.expect("emissions")).clone())
    }

    /// Weighted embedding sum `a` and attention weights for a `T x d` input.
    pub fn attention_pool(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new(&self.params);
        let xv = g.constant(x.clone());
        let (a, alphas) = self.net.attention_pool(&mut g, xv)?;
        Ok((g.value(a).clone(), g.value(alphas).clone()))
    }

    /// Status probabilities `H^c` (argumentative first).
    pub fn classify(&self, sentence: &LabeledSentence) -> Result<Tensor> {
        self.expect_kind(&[ModelKind::Classifier, ModelKind::Joint], "classify")?;
        let mut g = Graph::new(&self.params);
        let out = self.net.forward(&mut g, sentence, None)?;
        Ok(g.value(out.class_probs.expect("classifier")).clone())
    }

    /// Status probabilities and emission matrix from one shared encoder pass.
    pub fn joint_forward(&self, sentence: &LabeledSentence) -> Result<(Tensor, Tensor)> {
        self.expect_kind(&[ModelKind::Joint], "joint_forward")?;
        let mut g = Graph::new(&self.params);
        let out = self.net.forward(&mut g, sentence, None)?;
        Ok((
            g.value(out.class_probs.expect("classifier")).clone(),
            g.value(out.tag_scores.expect("emissions")).clone(),
        ))
    }

    /// Inference-mode training objective of one sentence.
    pub fn loss(&self, sentence: &LabeledSentence) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let loss = self.net.loss(&mut g, sentence, None)?;
        Ok(g.scalar(loss))
    }

    /// Loss and parameter gradients; `dropout` enables training-mode masks.
    pub fn loss_and_gradients(
        &self,
        sentence: &LabeledSentence,
        dropout: Option<&mut Prng>,
    ) -> Result<(f64, Gradients)> {
        let mut g = Graph::new(&self.params);
        let loss = self.net.loss(&mut g, sentence, dropout)?;
        let value = g.scalar(loss);
        Ok((value, g.backward(loss)?))
    }

    /// Deterministic decode: Viterbi for CRF models, per-token argmax for the tagger.
    pub fn predict(&self, sentence: &LabeledSentence) -> Result<Prediction> {
        let mut g = Graph::new(&self.params);
        let out = self.net.forward(&mut g, sentence, None)?;
        let arg_prob = out.class_probs.map(|p| g.value(p).data()[ARGUMENTATIVE]);
        let tags = match self.net.head() {
            Head::Tagger { .. } => {
                let scores = g.value(out.tag_scores.expect("tagger scores"));
                Some((0..scores.rows()).map(|t| argmax_tag(scores.row(t))).collect::<Vec<_>>())
            }
            Head::BilstmCrf { crf, .. } | Head::Joint { crf, .. } => {
                let emissions = g.value(out.tag_scores.expect("emissions"));
                let (path, _) = crf::viterbi(emissions, self.params.value(crf.transitions))?;
                Some(
                    path.into_iter()
                        .map(|i| Tag::from_index(i).expect("viterbi emits real tags"))
                        .collect(),
                )
            }
            Head::Classifier { .. } => None,
        };
        let argumentative = match (out.class_probs, &tags) {
            (Some(p), _) => {
                let probs = g.value(p).data();
                probs[ARGUMENTATIVE] >= probs[NON_ARGUMENTATIVE]
            }
            (None, Some(tags)) => tags.iter().any(|t| t.is_component()),
            (None, None) => unreachable!("every model has a tagging or classification head"),
        };
        Ok(Prediction {
            tags,
            argumentative,
            arg_prob,
        })
    }

    /// Finite-difference check of the total loss (model loss plus `l2`
    /// penalty) against every trainable parameter on one sentence.
    ///
    /// With `detach_p` the classifier output is held at its current value
    /// while the tagging loss is perturbed, so the check compares like with
    /// like; the second returned value says whether that happened.
    pub fn gradient_check(
        &mut self,
        sentence: &LabeledSentence,
        eps: f64,
        l2: f64,
    ) -> Result<(GradCheckReport, bool)> {
        let mut net = self.net.clone();
        let p_frozen = self.kind() == ModelKind::Joint && self.config().detach_p && !self.config().oracle_mode;
        if p_frozen {
            net.frozen_p = Some(self.classify(sentence)?);
        }
        let ids = self.params.trainable_ids();
        let report = gradient_check(&mut self.params, &ids, eps, |g| {
            let loss = net.loss(g, sentence, None)?;
            match l2_penalty_graph(g, l2)? {
                Some(pen) => g.add(loss, pen),
                None => Ok(loss),
            }
        })?;
        Ok((report, p_frozen))
    }

    fn expect_kind(&self, allowed: &[ModelKind], op: &str) -> Result<()> {
        if allowed.contains(&self.kind()) {
            Ok(())
        } else {
            Err(Error::arg(format!("{op} is not available on a {} model", self.kind())))
        }
    }
}

/// A small random model and sentence for gradient verification: `d = 8`,
/// `H = 5`, `d_a = 6`, five tokens (one out of vocabulary), and every
/// parameter nudged away from its initial value so biases and transitions
/// are non-zero.
pub fn small_instance(config: ModelConfig, seed: u64) -> Result<(Model, LabeledSentence)> {
    let mut rng = Prng::new(seed);
    let words: Vec<String> = (0..6).map(|i| format!("v{i}")).collect();
    let table = EmbeddingTable::random(words, 8, 1.0, &mut rng)?;
    let mut model = Model::new(config, table, &mut rng)?;
    for id in model.params.trainable_ids() {
        for v in model.params.value_mut(id).data_mut() {
            *v += rng.normal(0.0, 0.3);
        }
    }
    let tokens: Vec<String> = ["v1", "v4", "oov", "v0", "v1"].map(String::from).to_vec();
    let tags: Vec<Tag> = (0..tokens.len())
        .map(|_| Tag::from_index(rng.below(NUM_TAGS)).expect("in range"))
        .collect();
    let sentence = LabeledSentence::new(tokens, tags, rng.uniform(0.0, 1.0))?;
    Ok((model, sentence))
}

/// Configuration used by [`small_instance`] callers: `H = 5`, `d_a = 6`.
pub fn small_config(kind: ModelKind) -> ModelConfig {
    ModelConfig::new(kind, 5, 6)
}

fn argmax_tag(row: &[f64]) -> Tag {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    Tag::from_index(best).expect("row has one entry per tag")
}
