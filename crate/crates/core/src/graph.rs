//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! returns the gradient of that scalar with respect to every trainable
//! parameter that took part in the pass.
//!
//! The graph borrows the [`ParamStore`] immutably; gradients are handed
//! back as a [`Gradients`] value and folded into the store by the caller.

use std::collections::BTreeMap;

use crate::crf;
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{self, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Row(Var, usize),
    StackRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    RepeatRows(Var),
    Reshape(Var),
    SoftmaxRows(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
    MaxPool { x: Var, argmax: Vec<usize> },
    Sum(Var),
    CrfNll { emissions: Var, transitions: Var, d_emissions: Tensor, d_transitions: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: BTreeMap<ParamId, Var>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: BTreeMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Node for a stored parameter. Frozen parameters enter as constants.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let p = self.store.get(id);
        let op = if p.trainable { Op::Param(id) } else { Op::Leaf };
        let v = self.push(p.value.clone(), op);
        self.param_nodes.insert(id, v);
        v
    }

    /// Copy of `v` that gradients do not flow through.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x * w^T + b` with `x: r x n`, `w: m x n`, `b: m`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let mut out = self.value(x).matmul_transposed(self.value(w))?;
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.len() != out.cols() {
                return Err(Error::dim("linear bias", out.shape(), bias.shape()));
            }
            for r in 0..out.rows() {
                for (o, bv) in out.row_mut(r).iter_mut().zip(bias.data()) {
                    *o += bv;
                }
            }
        }
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() || ta.cols() != tb.cols() {
            return Err(Error::dim(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(tensor::sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Row `r` of a matrix as a `1 x c` node.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let t = self.value(a);
        if r >= t.rows() {
            return Err(Error::arg(format!("row {r} out of range for shape {:?}", t.shape())));
        }
        let out = Tensor::row_vector(t.row(r).to_vec());
        Ok(self.push(out, Op::Row(a, r)))
    }

    /// Stacks `1 x c` rows into a `T x c` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::arg("stack_rows of nothing"))?;
        let cols = self.value(*first).len();
        let mut data = Vec::with_capacity(cols * rows.len());
        for r in rows {
            let t = self.value(*r);
            if t.len() != cols {
                return Err(Error::dim("stack_rows", &[cols], t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows.len(), cols], data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec())))
    }

    /// Column-wise concatenation of matrices sharing a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::arg("concat_cols of nothing"))?;
        let rows = self.value(*first).rows();
        let mut total = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rows() != rows {
                return Err(Error::dim("concat_cols", self.value(*first).shape(), t.shape()));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Broadcasts a single row to `times` identical rows.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != 1 {
            return Err(Error::arg(format!("repeat_rows needs a single row, got {:?}", t.shape())));
        }
        let mut data = Vec::with_capacity(times * t.len());
        for _ in 0..times {
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![times, t.len()], data)?;
        Ok(self.push(out, Op::RepeatRows(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Softmax applied independently to every row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..t.rows() {
            let s = tensor::softmax_unchecked(t.row(r));
            out.row_mut(r).copy_from_slice(&s);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Sum over rows of `-log softmax(logits[r])[targets[r]]`, as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != targets.len() {
            return Err(Error::dim("cross_entropy", t.shape(), &[targets.len()]));
        }
        let mut probs = t.clone();
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let row = t.row(r);
            if y >= row.len() {
                return Err(Error::arg(format!("target {y} out of range for {} classes", row.len())));
            }
            let lse = tensor::logsumexp_unchecked(row);
            loss += lse - row[y];
            let p = tensor::softmax_unchecked(row);
            probs.row_mut(r).copy_from_slice(&p);
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub fn max_pool(&mut self, a: Var) -> Result<Var> {
        let (out, argmax) = tensor::max_pool_over_time(self.value(a))?;
        Ok(self.push(out, Op::MaxPool { x: a, argmax }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Linear-chain CRF negative log-likelihood of `gold` given emissions
    /// `T x k` and transitions `(k+2) x (k+2)`.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, gold: &[usize]) -> Result<Var> {
        let (loss, d_emissions, d_transitions) =
            crf::nll_with_gradients(self.value(emissions), self.value(transitions), gold)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrfNll {
                emissions,
                transitions,
                d_emissions,
                d_transitions,
            },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every trainable parameter reached.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(self.value(loss).shape()));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    out.by_param.insert(*id, dy);
                }
                Op::MatMul(a, b) => {
                    let ga = dy.matmul_transposed(self.value(*b))?;
                    let gb = self.value(*a).transpose().matmul(&dy)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Linear { x, w, b } => {
                    let gx = dy.matmul(self.value(*w))?;
                    let gw = dy.transpose().matmul(self.value(*x))?;
                    if let Some(b) = b {
                        let mut gb = vec![0.0; dy.cols()];
                        for r in 0..dy.rows() {
                            for (acc, v) in gb.iter_mut().zip(dy.row(r)) {
                                *acc += v;
                            }
                        }
                        accumulate(&mut grads, *b, Tensor::vector(gb));
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, dy.scale(-1.0));
                    accumulate(&mut grads, *a, dy);
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&dy, self.value(*b), |g, y| g * y);
                    let gb = elementwise(&dy, self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, dy.scale(*c)),
                Op::Sigmoid(a) => {
                    let g = elementwise(&dy, &node.value, |g, s| g * s * (1.0 - s));
                    accumulate(&mut grads, *a, g);
                }
                Op::Tanh(a) => {
                    let g = elementwise(&dy, &node.value, |g, t| g * (1.0 - t * t));
                    accumulate(&mut grads, *a, g);
                }
                Op::Row(a, r) => {
                    let src = self.value(*a);
                    let mut g = Tensor::zeros(src.shape());
                    g.row_mut(*r).copy_from_slice(dy.data());
                    accumulate(&mut grads, *a, g);
                }
                Op::StackRows(rows) => {
                    for (r, v) in rows.iter().enumerate() {
                        let g = Tensor::new(self.value(*v).shape().to_vec(), dy.row(r).to_vec())?;
                        accumulate(&mut grads, *v, g);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let src = self.value(*p);
                        let c = src.cols();
                        let mut data = Vec::with_capacity(src.len());
                        for r in 0..dy.rows() {
                            data.extend_from_slice(&dy.row(r)[offset..offset + c]);
                        }
                        offset += c;
                        accumulate(&mut grads, *p, Tensor::new(src.shape().to_vec(), data)?);
                    }
                }
                Op::RepeatRows(a) => {
                    let src = self.value(*a);
                    let mut g = vec![0.0; src.len()];
                    for r in 0..dy.rows() {
                        for (acc, v) in g.iter_mut().zip(dy.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(src.shape().to_vec(), g)?);
                }
                Op::Reshape(a) => {
                    let g = dy.reshape(self.value(*a).shape().to_vec())?;
                    accumulate(&mut grads, *a, g);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut g = dy.clone();
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let dr = dy.row(r);
                        let inner = tensor::dot(yr, dr);
                        for (j, gv) in g.row_mut(r).iter_mut().enumerate() {
                            *gv = yr[j] * (dr[j] - inner);
                        }
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let upstream = dy.data()[0];
                    let mut g = probs.clone();
                    for (r, &y) in targets.iter().enumerate() {
                        let row = g.row_mut(r);
                        row[y] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= upstream);
                    }
                    accumulate(&mut grads, *logits, g);
                }
                Op::MaxPool { x, argmax } => {
                    let src = self.value(*x);
                    let mut g = Tensor::zeros(src.shape());
                    for (j, &r) in argmax.iter().enumerate() {
                        g.set(r, j, dy.data()[j]);
                    }
                    accumulate(&mut grads, *x, g);
                }
                Op::Sum(a) => {
                    let upstream = dy.data()[0];
                    accumulate(&mut grads, *a, Tensor::filled(self.value(*a).shape(), upstream));
                }
                Op::CrfNll {
                    emissions,
                    transitions,
                    d_emissions,
                    d_transitions,
                } => {
                    let upstream = dy.data()[0];
                    accumulate(&mut grads, *emissions, d_emissions.scale(upstream));
                    accumulate(&mut grads, *transitions, d_transitions.scale(upstream));
                }
            }
        }
        Ok(out)
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same element count")
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParamKind;

    #[test]
    fn matmul_gradient_contract() {
        let mut store = ParamStore::new();
        let a = store
            .add("a", Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap(), ParamKind::Weight, true)
            .unwrap();
        let b = store
            .add("b", Tensor::matrix(2, 1, vec![5., 6.]).unwrap(), ParamKind::Weight, true)
            .unwrap();
        let mut g = Graph::new(&store);
        let (va, vb) = (g.param(a), g.param(b));
        let out = g.matmul(va, vb).unwrap();
        let loss = g.sum(out);
        let grads = g.backward(loss).unwrap();
        // d sum / d a = ones * b^T, d sum / d b = a^T * ones
        assert_eq!(grads.get(a).unwrap().data(), &[5., 6., 5., 6.]);
        assert_eq!(grads.get(b).unwrap().data(), &[4., 6.]);
    }

    #[test]
    fn frozen_parameters_get_no_gradient() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::ones(&[1, 3]), ParamKind::Embedding, false)
            .unwrap();
        let mut g = Graph::new(&store);
        let v = g.param(w);
        let loss = g.sum(v);
        assert!(g.backward(loss).unwrap().get(w).is_none());
    }

    #[test]
    fn shared_node_accumulates() {
        let mut store = ParamStore::new();
        let x = store
            .add("x", Tensor::row_vector(vec![3.0]), ParamKind::Weight, true)
            .unwrap();
        let mut g = Graph::new(&store);
        let v = g.param(x);
        let sq = g.mul(v, v).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn max_pool_tie_routes_to_first_row() {
        let mut store = ParamStore::new();
        let x = store
            .add("x", Tensor::matrix(2, 1, vec![5.0, 5.0]).unwrap(), ParamKind::Weight, true)
            .unwrap();
        let mut g = Graph::new(&store);
        let v = g.param(x);
        let pooled = g.max_pool(v).unwrap();
        let loss = g.sum(pooled);
        assert_eq!(g.backward(loss).unwrap().get(x).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn every_op_passes_finite_differences() {
        use crate::gradcheck::gradient_check;
        use crate::param::glorot_uniform;
        use crate::rng::Prng;

        let mut rng = Prng::new(42);
        let mut store = ParamStore::new();
        let mut add = |name: &str, r, c, rng: &mut Prng| {
            let mut t = glorot_uniform(r, c, rng);
            t.data_mut().iter_mut().for_each(|v| *v *= 2.0);
            store.add(name, t, ParamKind::Weight, true).unwrap()
        };
        let x = add("x", 3, 4, &mut rng);
        let w = add("w", 2, 4, &mut rng);
        let b = add("b", 1, 2, &mut rng);
        let y = add("y", 3, 2, &mut rng);
        let a = add("a", 4, 4, &mut rng);
        let ids = [x, w, b, y, a];

        let report = gradient_check(&mut store, &ids, 1e-5, |g| {
            let (x, w, b, y, a) = (g.param(x), g.param(w), g.param(b), g.param(y), g.param(a));
            let lin = g.linear(x, w, Some(b))?;
            let t = g.tanh(lin);
            let s = g.sigmoid(y);
            let prod = g.mul(t, s)?;
            let diff = g.sub(prod, y)?;
            let r0 = g.row(diff, 2)?;
            let r1 = g.row(diff, 0)?;
            let stacked = g.stack_rows(&[r0, r1])?;
            let rep = g.repeat_rows(r0, 2)?;
            let wide = g.concat_cols(&[stacked, rep])?;
            let flat = g.reshape(wide, vec![4, 2])?;
            let probs = g.softmax_rows(flat);
            let pooled = g.max_pool(probs)?;
            let mm = g.matmul(x, a)?;
            let ce = g.cross_entropy(mm, &[0, 3, 1])?;
            let nll = g.crf_nll(stacked, a, &[1, 0])?;
            let p = g.sum(pooled);
            let p = g.scale(p, 0.7);
            let total = g.add(p, ce)?;
            g.add(total, nll)
        })
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.params);
    }
}
