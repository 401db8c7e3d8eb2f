//! Linear-chain CRF over `k` real tags plus START and END.
//!
//! Emissions `P` are `T x k`; `P[i][j]` scores tag `j` at token `i`.
//! Transitions `A` are `(k+2) x (k+2)`; `A[i][j]` scores moving from tag
//! `i` to tag `j`, with START = `k` and END = `k + 1`. A path never emits
//! START or END; they only appear as the implicit first and last states.

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamKind, ParamStore};
use crate::tensor::{logsumexp_unchecked, Tensor};

/// Upper bound on `k^T` for the exhaustive oracles.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

/// Index layout of the augmented tag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagIndexing {
    pub num_tags: usize,
}

impl TagIndexing {
    pub fn new(num_tags: usize) -> Self {
        TagIndexing { num_tags }
    }

    pub fn start(&self) -> usize {
        self.num_tags
    }

    pub fn end(&self) -> usize {
        self.num_tags + 1
    }

    pub fn size(&self) -> usize {
        self.num_tags + 2
    }
}

/// The learned transition matrix.
#[derive(Debug, Clone, Copy)]
pub struct CrfParams {
    pub transitions: ParamId,
    pub tags: TagIndexing,
}

impl CrfParams {
    /// Registers a zero-initialized `(k+2) x (k+2)` transition matrix.
    pub fn new(store: &mut ParamStore, prefix: &str, num_tags: usize) -> Result<Self> {
        let tags = TagIndexing::new(num_tags);
        let transitions = store.add(
            format!("{prefix}.transitions"),
            Tensor::zeros(&[tags.size(), tags.size()]),
            ParamKind::Weight,
            true,
        )?;
        Ok(CrfParams { transitions, tags })
    }
}

fn check_shapes(p: &Tensor, a: &Tensor) -> Result<TagIndexing> {
    if p.shape().len() != 2 {
        return Err(Error::arg(format!("emissions must be T x k, got {:?}", p.shape())));
    }
    let tags = TagIndexing::new(p.cols());
    if a.shape() != [tags.size(), tags.size()] {
        return Err(Error::dim("crf transitions", p.shape(), a.shape()));
    }
    if !p.is_finite() || !a.is_finite() {
        return Err(Error::arg("CRF scores must be finite"));
    }
    Ok(tags)
}

fn check_path(tags: TagIndexing, len: usize, path: &[usize]) -> Result<()> {
    if path.len() != len {
        return Err(Error::dim("crf path", &[len], &[path.len()]));
    }
    if let Some(bad) = path.iter().find(|&&y| y >= tags.num_tags) {
        return Err(Error::arg(format!(
            "tag {bad} out of range for {} tags",
            tags.num_tags
        )));
    }
    Ok(())
}

/// Transition-plus-emission score of one tag path, including START and END transitions.
pub fn path_score(p: &Tensor, a: &Tensor, path: &[usize]) -> Result<f64> {
    let tags = check_shapes(p, a)?;
    check_path(tags, p.rows(), path)?;
    Ok(score_unchecked(p, a, tags, path))
}

fn score_unchecked(p: &Tensor, a: &Tensor, tags: TagIndexing, path: &[usize]) -> f64 {
    let mut score = a.get(tags.start(), path[0]);
    for (i, &y) in path.iter().enumerate() {
        score += p.get(i, y);
        let next = path.get(i + 1).copied().unwrap_or(tags.end());
        score += a.get(y, next);
    }
    score
}

/// Forward log-messages: `alpha[t][j]` is the log-sum over prefixes ending in `j` at `t`.
fn forward_messages(p: &Tensor, a: &Tensor, tags: TagIndexing) -> Vec<Vec<f64>> {
    let k = tags.num_tags;
    let mut alpha = Vec::with_capacity(p.rows());
    alpha.push((0..k).map(|j| a.get(tags.start(), j) + p.get(0, j)).collect::<Vec<_>>());
    let mut buf = vec![0.0; k];
    for t in 1..p.rows() {
        let prev = &alpha[t - 1];
        let row: Vec<f64> = (0..k)
            .map(|j| {
                for i in 0..k {
                    buf[i] = prev[i] + a.get(i, j);
                }
                logsumexp_unchecked(&buf) + p.get(t, j)
            })
            .collect();
        alpha.push(row);
    }
    alpha
}

/// Backward log-messages: `beta[t][i]` is the log-sum over suffixes after being in `i` at `t`.
fn backward_messages(p: &Tensor, a: &Tensor, tags: TagIndexing) -> Vec<Vec<f64>> {
    let k = tags.num_tags;
    let t_len = p.rows();
    let mut beta = vec![vec![0.0; k]; t_len];
    beta[t_len - 1] = (0..k).map(|i| a.get(i, tags.end())).collect();
    let mut buf = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = a.get(i, j) + p.get(t + 1, j) + beta[t + 1][j];
            }
            beta[t][i] = logsumexp_unchecked(&buf);
        }
    }
    beta
}

fn log_partition_from(alpha: &[Vec<f64>], a: &Tensor, tags: TagIndexing) -> f64 {
    let last = alpha.last().expect("at least one token");
    let terms: Vec<f64> = (0..tags.num_tags)
        .map(|j| last[j] + a.get(j, tags.end()))
        .collect();
    logsumexp_unchecked(&terms)
}

/// Log of the sum over all `k^T` real-tag paths of `exp(path_score)`, by the forward algorithm.
pub fn log_partition(p: &Tensor, a: &Tensor) -> Result<f64> {
    let tags = check_shapes(p, a)?;
    let alpha = forward_messages(p, a, tags);
    Ok(log_partition_from(&alpha, a, tags))
}

/// Negative log-probability of `gold`: `log_partition - path_score(gold)`.
pub fn crf_nll(p: &Tensor, a: &Tensor, gold: &[usize]) -> Result<f64> {
    Ok(log_partition(p, a)? - path_score(p, a, gold)?)
}

/// NLL together with its gradients with respect to `P` and `A`.
///
/// The partition term contributes the posterior marginals (unary and
/// pairwise, from forward-backward); the gold path contributes minus its
/// indicator counts.
pub fn nll_with_gradients(p: &Tensor, a: &Tensor, gold: &[usize]) -> Result<(f64, Tensor, Tensor)> {
    let tags = check_shapes(p, a)?;
    check_path(tags, p.rows(), gold)?;
    let k = tags.num_tags;
    let t_len = p.rows();

    let alpha = forward_messages(p, a, tags);
    let beta = backward_messages(p, a, tags);
    let log_z = log_partition_from(&alpha, a, tags);
    let nll = log_z - score_unchecked(p, a, tags, gold);

    let mut d_p = Tensor::zeros(p.shape());
    let mut d_a = Tensor::zeros(a.shape());
    for t in 0..t_len {
        for j in 0..k {
            let marginal = (alpha[t][j] + beta[t][j] - log_z).exp();
            d_p.set(t, j, marginal);
        }
    }
    for j in 0..k {
        d_a.set(tags.start(), j, d_p.get(0, j));
        d_a.set(j, tags.end(), d_p.get(t_len - 1, j));
    }
    for t in 0..t_len.saturating_sub(1) {
        for i in 0..k {
            for j in 0..k {
                let pair = (alpha[t][i] + a.get(i, j) + p.get(t + 1, j) + beta[t + 1][j] - log_z).exp();
                d_a.set(i, j, d_a.get(i, j) + pair);
            }
        }
    }

    // gold path indicators
    let mut prev = tags.start();
    for (t, &y) in gold.iter().enumerate() {
        d_p.set(t, y, d_p.get(t, y) - 1.0);
        d_a.set(prev, y, d_a.get(prev, y) - 1.0);
        prev = y;
    }
    d_a.set(prev, tags.end(), d_a.get(prev, tags.end()) - 1.0);

    Ok((nll, d_p, d_a))
}

/// Highest-scoring path and its score. Ties go to the lowest tag index.
pub fn viterbi(p: &Tensor, a: &Tensor) -> Result<(Vec<usize>, f64)> {
    let tags = check_shapes(p, a)?;
    let k = tags.num_tags;
    let t_len = p.rows();

    let mut delta: Vec<f64> = (0..k).map(|j| a.get(tags.start(), j) + p.get(0, j)).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len);
    for t in 1..t_len {
        let mut next = vec![0.0; k];
        let mut ptr = vec![0usize; k];
        for j in 0..k {
            let mut best_i = 0;
            let mut best = delta[0] + a.get(0, j);
            for i in 1..k {
                let s = delta[i] + a.get(i, j);
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            next[j] = best + p.get(t, j);
            ptr[j] = best_i;
        }
        delta = next;
        back.push(ptr);
    }

    let mut last = 0;
    let mut best = delta[0] + a.get(0, tags.end());
    for (j, d) in delta.iter().enumerate().skip(1) {
        let s = d + a.get(j, tags.end());
        if s > best {
            best = s;
            last = j;
        }
    }

    let mut path = vec![last; t_len];
    for t in (1..t_len).rev() {
        path[t - 1] = back[t - 1][path[t]];
    }
    Ok((path, best))
}

fn enumeration_size(tags: TagIndexing, t_len: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..t_len {
        total = total
            .checked_mul(tags.num_tags)
            .filter(|&n| n <= BRUTE_FORCE_LIMIT)
            .ok_or_else(|| {
                Error::Guard(format!(
                    "{}^{} paths exceeds {BRUTE_FORCE_LIMIT}",
                    tags.num_tags, t_len
                ))
            })?;
    }
    Ok(total)
}

/// Calls `visit` on every path in lexicographic order.
fn for_each_path(tags: TagIndexing, t_len: usize, mut visit: impl FnMut(&[usize])) -> Result<()> {
    let total = enumeration_size(tags, t_len)?;
    let mut path = vec![0usize; t_len];
    for _ in 0..total {
        visit(&path);
        for pos in (0..t_len).rev() {
            path[pos] += 1;
            if path[pos] < tags.num_tags {
                break;
            }
            path[pos] = 0;
        }
    }
    Ok(())
}

/// Exhaustive log-partition. Test oracle for [`log_partition`].
pub fn brute_force_partition(p: &Tensor, a: &Tensor) -> Result<f64> {
    let tags = check_shapes(p, a)?;
    let mut scores = Vec::new();
    for_each_path(tags, p.rows(), |path| scores.push(score_unchecked(p, a, tags, path)))?;
    Ok(logsumexp_unchecked(&scores))
}

/// Exhaustive argmax. Ties resolve to the lexicographically smallest path.
pub fn brute_force_best(p: &Tensor, a: &Tensor) -> Result<(Vec<usize>, f64)> {
    let tags = check_shapes(p, a)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_path(tags, p.rows(), |path| {
        let s = score_unchecked(p, a, tags, path);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((path.to_vec(), s));
        }
    })?;
    Ok(best.expect("at least one path"))
}
