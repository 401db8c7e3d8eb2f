//! LSTM cell and bidirectional encoder.
//!
//! Per time step, with gates `i, f, o` squashed by the sigmoid and the
//! candidate `g` by tanh:
//!
//! ```text
//! y_t = act(W^y x_t + U^y h_{t-1} + b^y)   for y in {i, f, o, g}
//! c_t = f_t * c_{t-1} + i_t * g_t
//! h_t = o_t * tanh(c_t)
//! ```
//!
//! Initial states are zero in both directions.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::param::{glorot_uniform, ParamId, ParamKind, ParamStore};
use crate::rng::Prng;
use crate::tensor::Tensor;

pub const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "cell"];
const INPUT: usize = 0;
const FORGET: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

/// Weights of one LSTM direction, indexed by gate in [`GATE_NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Glorot-uniform `W` and `U`, zero biases except the forget gate at 1.0.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut Prng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::arg("LSTM sizes must be positive"));
        }
        let mut w = Vec::with_capacity(4);
        let mut u = Vec::with_capacity(4);
        let mut b = Vec::with_capacity(4);
        for (gate, name) in GATE_NAMES.iter().enumerate() {
            w.push(store.add(
                format!("{prefix}.w_{name}"),
                glorot_uniform(hidden, input_dim, rng),
                ParamKind::Weight,
                true,
            )?);
            u.push(store.add(
                format!("{prefix}.u_{name}"),
                glorot_uniform(hidden, hidden, rng),
                ParamKind::Weight,
                true,
            )?);
            let init = if gate == FORGET { 1.0 } else { 0.0 };
            b.push(store.add(
                format!("{prefix}.b_{name}"),
                Tensor::filled(&[hidden], init),
                ParamKind::Bias,
                true,
            )?);
        }
        Ok(LstmParams {
            w: w.try_into().expect("four gates"),
            u: u.try_into().expect("four gates"),
            b: b.try_into().expect("four gates"),
            input_dim,
            hidden,
        })
    }

    pub fn all_ids(&self) -> Vec<ParamId> {
        self.w.iter().chain(&self.u).chain(&self.b).copied().collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut Prng,
    ) -> Result<Self> {
        Ok(BiLstmParams {
            forward: LstmParams::new(store, &format!("{prefix}.fwd"), input_dim, hidden, rng)?,
            backward: LstmParams::new(store, &format!("{prefix}.bwd"), input_dim, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn all_ids(&self) -> Vec<ParamId> {
        let mut ids = self.forward.all_ids();
        ids.extend(self.backward.all_ids());
        ids
    }
}

/// One step of the recurrence given the four gate input projections `W^y x_t + b^y`.
fn step(
    g: &mut Graph,
    projected: [Var; 4],
    h_prev: Var,
    c_prev: Var,
    p: &LstmParams,
) -> Result<(Var, Var)> {
    let mut pre = [projected[0]; 4];
    for gate in 0..4 {
        let u = g.param(p.u[gate]);
        let rec = g.linear(h_prev, u, None)?;
        pre[gate] = g.add(projected[gate], rec)?;
    }
    let i = g.sigmoid(pre[INPUT]);
    let f = g.sigmoid(pre[FORGET]);
    let o = g.sigmoid(pre[OUTPUT]);
    let cand = g.tanh(pre[CANDIDATE]);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c);
    let h = g.mul(o, squashed)?;
    Ok((h, c))
}

fn check_input(g: &Graph, x: Var, p: &LstmParams, op: &'static str) -> Result<()> {
    let t = g.value(x);
    if t.cols() != p.input_dim {
        return Err(Error::dim(op, t.shape(), &[t.rows(), p.input_dim]));
    }
    Ok(())
}

/// A single LSTM step on `1 x d` input with `1 x H` previous states.
pub fn lstm_cell(g: &mut Graph, x_t: Var, h_prev: Var, c_prev: Var, p: &LstmParams) -> Result<(Var, Var)> {
    check_input(g, x_t, p, "lstm_cell input")?;
    for (v, what) in [(h_prev, "lstm_cell h_prev"), (c_prev, "lstm_cell c_prev")] {
        let t = g.value(v);
        if t.rows() != 1 || t.cols() != p.hidden {
            return Err(Error::dim(what, t.shape(), &[1, p.hidden]));
        }
    }
    let mut projected = [x_t; 4];
    for gate in 0..4 {
        let (w, b) = (g.param(p.w[gate]), g.param(p.b[gate]));
        projected[gate] = g.linear(x_t, w, Some(b))?;
    }
    step(g, projected, h_prev, c_prev, p)
}

/// Runs the recurrence over the `T x d` rows of `x` from zero states.
///
/// With `reversed` the sequence is read from the last row to the first;
/// output row `t` is always the state computed at input row `t`.
pub fn lstm_forward(g: &mut Graph, x: Var, p: &LstmParams, reversed: bool) -> Result<Var> {
    check_input(g, x, p, "lstm_forward input")?;
    let t_len = g.value(x).rows();
    if t_len == 0 {
        return Err(Error::arg("lstm_forward on an empty sequence"));
    }
    let mut projections = [x; 4];
    for gate in 0..4 {
        let (w, b) = (g.param(p.w[gate]), g.param(p.b[gate]));
        projections[gate] = g.linear(x, w, Some(b))?;
    }

    let zero = g.constant(Tensor::zeros(&[1, p.hidden]));
    let (mut h, mut c) = (zero, zero);
    let mut outputs = vec![zero; t_len];
    let order: Vec<usize> = if reversed {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in order {
        let mut projected = [x; 4];
        for gate in 0..4 {
            projected[gate] = g.row(projections[gate], t)?;
        }
        (h, c) = step(g, projected, h, c, p)?;
        outputs[t] = h;
    }
    g.stack_rows(&outputs)
}

/// Forward and backward passes concatenated per row, forward half first: `T x 2H`.
pub fn bilstm_forward(g: &mut Graph, x: Var, p: &BiLstmParams) -> Result<Var> {
    let fwd = lstm_forward(g, x, &p.forward, false)?;
    let bwd = lstm_forward(g, x, &p.backward, true)?;
    g.concat_cols(&[fwd, bwd])
}
