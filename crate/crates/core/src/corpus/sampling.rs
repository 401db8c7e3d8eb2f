use super::LabeledSentence;
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Keeps every argumentative sentence and at most `ratio` non-argumentative
/// sentences per argumentative one, drawn uniformly without replacement.
/// Original order is preserved.
pub fn undersample(sentences: &[LabeledSentence], ratio: f64, rng: &mut Prng) -> Result<Vec<LabeledSentence>> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("under-sampling ratio must be positive, got {ratio}")));
    }
    let positives = sentences.iter().filter(|s| s.argumentative()).count();
    if positives == 0 {
        return Err(Error::Config(
            "under-sampling needs at least one argumentative sentence".into(),
        ));
    }
    let negatives: Vec<usize> = sentences
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.argumentative())
        .map(|(i, _)| i)
        .collect();
    let quota = ((ratio * positives as f64).floor() as usize).min(negatives.len());
    let mut keep = vec![false; sentences.len()];
    for pick in rng.sample_indices(negatives.len(), quota) {
        keep[negatives[pick]] = true;
    }
    Ok(sentences
        .iter()
        .zip(&keep)
        .filter(|(s, &k)| s.argumentative() || k)
        .map(|(s, _)| s.clone())
        .collect())
}

/// Uniform sentence-level split; the validation side gets `round(fraction * n)` sentences.
pub fn split_validation(
    sentences: &[LabeledSentence],
    fraction: f64,
    rng: &mut Prng,
) -> Result<(Vec<LabeledSentence>, Vec<LabeledSentence>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction must lie in (0, 1), got {fraction}")));
    }
    let n = sentences.len();
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Config(format!(
            "validation fraction {fraction} of {n} sentences leaves one side empty"
        )));
    }
    let mut in_val = vec![false; n];
    for i in rng.sample_indices(n, n_val) {
        in_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = sentences
        .iter()
        .cloned()
        .zip(in_val)
        .partition(|(_, v)| *v);
    Ok((
        train.into_iter().map(|(s, _)| s).collect(),
        val.into_iter().map(|(s, _)| s).collect(),
    ))
}
