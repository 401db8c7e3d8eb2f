//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::param::{ParamId, ParamStore};

/// Default finite-difference step.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Pass threshold on the maximum relative error.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
    /// Largest `|analytic - numeric|`; separates round-off on near-zero
    /// entries from genuine mismatches.
    pub max_abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }

    pub fn failing(&self, tolerance: f64) -> impl Iterator<Item = &ParamCheck> {
        self.params
            .iter()
            .filter(move |p| p.max_relative_error >= tolerance)
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

fn evaluate<F>(store: &ParamStore, loss_fn: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let loss = loss_fn(&mut g)?;
    Ok(g.scalar(loss))
}

/// Compares the analytic gradient of `loss_fn` against central differences
/// for every entry of the listed parameters.
///
/// `loss_fn` must be deterministic: it is evaluated twice at the starting
/// point and the two values must agree bit for bit.
pub fn gradient_check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    eps: f64,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g)?;
        let first = g.scalar(loss);
        let grads = g.backward(loss)?;
        let second = evaluate(store, &loss_fn)?;
        if first.to_bits() != second.to_bits() {
            return Err(Error::Consistency(format!(
                "two forward passes gave {first} and {second}"
            )));
        }
        grads
    };

    let mut report = GradCheckReport {
        params: Vec::with_capacity(ids.len()),
        max_relative_error: 0.0,
    };
    for &id in ids {
        let n = store.value(id).len();
        let analytic = grads.get(id).map(|t| t.data().to_vec()).unwrap_or(vec![0.0; n]);
        let mut worst: f64 = 0.0;
        let mut worst_abs: f64 = 0.0;
        for i in 0..n {
            let original = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = original + eps;
            let plus = evaluate(store, &loss_fn);
            store.value_mut(id).data_mut()[i] = original - eps;
            let minus = evaluate(store, &loss_fn);
            store.value_mut(id).data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * eps);
            worst_abs = worst_abs.max((analytic[i] - numeric).abs());
            worst = worst.max(relative_error(analytic[i], numeric));
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report.params.push(ParamCheck {
            name: store.get(id).name.clone(),
            entries: n,
            max_relative_error: worst,
            max_abs_error: worst_abs,
        });
    }
    Ok(report)
}
