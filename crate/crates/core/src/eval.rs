//! Token-level, exact-span and sentence-classification metrics.
//!
//! Every ratio with a zero denominator is reported as 0.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tag::{Tag, NUM_TAGS};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        Self::from_pr(ratio(tp, tp + fp), ratio(tp, tp + fn_))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Per-tag token confusion counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: [usize; NUM_TAGS],
    pub false_pos: [usize; NUM_TAGS],
    pub false_neg: [usize; NUM_TAGS],
}

impl ConfusionCounts {
    pub fn add_sentence(&mut self, gold: &[Tag], pred: &[Tag]) -> Result<()> {
        if gold.len() != pred.len() {
            return Err(Error::dim("token_prf", &[gold.len()], &[pred.len()]));
        }
        for (&g, &p) in gold.iter().zip(pred) {
            if g == p {
                self.true_pos[g.index()] += 1;
            } else {
                self.false_pos[p.index()] += 1;
                self.false_neg[g.index()] += 1;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> TokenReport {
        let per_tag: [Prf; NUM_TAGS] = std::array::from_fn(|c| {
            Prf::from_counts(self.true_pos[c], self.false_pos[c], self.false_neg[c])
        });
        let n = NUM_TAGS as f64;
        let macro_avg = Prf {
            precision: per_tag.iter().map(|p| p.precision).sum::<f64>() / n,
            recall: per_tag.iter().map(|p| p.recall).sum::<f64>() / n,
            f1: per_tag.iter().map(|p| p.f1).sum::<f64>() / n,
        };
        TokenReport { per_tag, macro_avg }
    }
}

/// Per-tag scores (indexed B, I, O) and their unweighted means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenReport {
    pub per_tag: [Prf; NUM_TAGS],
    pub macro_avg: Prf,
}

impl TokenReport {
    pub fn tag(&self, tag: Tag) -> Prf {
        self.per_tag[tag.index()]
    }

    pub fn key_values(&self) -> Vec<(String, f64)> {
        let mut kv = vec![
            ("macro_f1".to_string(), self.macro_avg.f1),
            ("macro_p".to_string(), self.macro_avg.precision),
            ("macro_r".to_string(), self.macro_avg.recall),
        ];
        for t in Tag::ALL {
            kv.push((format!("f1_{t}"), self.tag(t).f1));
        }
        kv
    }
}

impl fmt::Display for TokenReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>7} {:>7} {:>7} {:>7} {:>7} {:>7}", "F1", "P", "R", "F1-B", "F1-I", "F1-O")?;
        write!(
            f,
            "{:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            self.macro_avg.f1,
            self.macro_avg.precision,
            self.macro_avg.recall,
            self.tag(Tag::B).f1,
            self.tag(Tag::I).f1,
            self.tag(Tag::O).f1
        )
    }
}

/// Pooled token metrics over aligned sentence pairs.
pub fn token_prf<G: AsRef<[Tag]>, P: AsRef<[Tag]>>(gold: &[G], pred: &[P]) -> Result<TokenReport> {
    if gold.len() != pred.len() {
        return Err(Error::dim("token_prf sentences", &[gold.len()], &[pred.len()]));
    }
    let mut counts = ConfusionCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        counts.add_sentence(g.as_ref(), p.as_ref())?;
    }
    Ok(counts.report())
}

/// A component span, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanExtraction {
    pub spans: Vec<Span>,
    /// Spans opened by an `I` with no preceding `B` or `I`.
    pub repaired: usize,
}

/// Spans from an IOB sequence. A span opens at `B`, or at an `I` that
/// follows `O` or starts the sentence, and runs through the following `I`s.
pub fn extract_spans(sentence: usize, tags: &[Tag]) -> SpanExtraction {
    let mut out = SpanExtraction::default();
    let mut open: Option<usize> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            Tag::B => {
                if let Some(start) = open.take() {
                    out.spans.push(Span { sentence, start, end: i - 1 });
                }
                open = Some(i);
            }
            Tag::I => {
                if open.is_none() {
                    out.repaired += 1;
                    open = Some(i);
                }
            }
            Tag::O => {
                if let Some(start) = open.take() {
                    out.spans.push(Span { sentence, start, end: i - 1 });
                }
            }
        }
    }
    if let Some(start) = open {
        out.spans.push(Span {
            sentence,
            start,
            end: tags.len() - 1,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMatchReport {
    pub scores: Prf,
    pub true_pos: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl fmt::Display for ExactMatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>7} {:>7} {:>7} {:>6} {:>6} {:>6}", "F1", "P", "R", "TP", "gold", "pred")?;
        write!(
            f,
            "{:>7.3} {:>7.3} {:>7.3} {:>6} {:>6} {:>6}",
            self.scores.f1, self.scores.precision, self.scores.recall, self.true_pos, self.gold, self.predicted
        )
    }
}

/// A predicted span is a true positive only if sentence, start and end all match a gold span.
pub fn exact_match_prf(gold: &[Span], pred: &[Span]) -> ExactMatchReport {
    let gold_set: HashSet<&Span> = gold.iter().collect();
    let pred_set: HashSet<&Span> = pred.iter().collect();
    let tp = gold_set.intersection(&pred_set).count();
    ExactMatchReport {
        scores: Prf::from_pr(ratio(tp, pred_set.len()), ratio(tp, gold_set.len())),
        true_pos: tp,
        gold: gold_set.len(),
        predicted: pred_set.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub scores: Prf,
    pub accuracy: f64,
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>9} {:>7} {:>7} {:>8}", "Precision", "Recall", "F1", "Accuracy")?;
        write!(
            f,
            "{:>9.3} {:>7.3} {:>7.3} {:>8.3}",
            self.scores.precision, self.scores.recall, self.scores.f1, self.accuracy
        )
    }
}

/// Binary scores with "argumentative" as the positive class.
pub fn classification_prf(gold: &[bool], pred: &[bool]) -> Result<ClassificationReport> {
    if gold.len() != pred.len() {
        return Err(Error::dim("classification_prf", &[gold.len()], &[pred.len()]));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0, 0, 0, 0);
    for (&g, &p) in gold.iter().zip(pred) {
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
        correct += usize::from(g == p);
    }
    Ok(ClassificationReport {
        scores: Prf::from_counts(tp, fp, fn_),
        accuracy: ratio(correct, gold.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Tag::{B, I, O};

    #[test]
    fn perfect_prediction() {
        let gold = vec![vec![B, I, O], vec![O, B]];
        let r = token_prf(&gold, &gold).unwrap();
        assert_eq!(r.macro_avg, Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
    }

    #[test]
    fn absent_classes_count_as_zero() {
        let gold = vec![vec![O, O, O]];
        let r = token_prf(&gold, &gold).unwrap();
        assert_eq!(r.tag(O).f1, 1.0);
        assert_eq!(r.tag(B).f1, 0.0);
        assert_eq!(r.tag(I).f1, 0.0);
        assert!((r.macro_avg.f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_confusion() {
        let r = token_prf(&[vec![B, I, O, O]], &[vec![B, O, O, O]]).unwrap();
        assert_eq!(r.tag(B).f1, 1.0);
        assert_eq!(r.tag(I).f1, 0.0);
        assert!((r.tag(O).f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_avg.f1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(token_prf(&[vec![B]], &[vec![B, O]]).is_err());
        assert!(token_prf(&[vec![B]], &Vec::<Vec<Tag>>::new()).is_err());
    }

    #[test]
    fn span_extraction() {
        let s = extract_spans(0, &[O, B, I, O, B]);
        assert_eq!(
            s.spans,
            vec![Span { sentence: 0, start: 1, end: 2 }, Span { sentence: 0, start: 4, end: 4 }]
        );
        assert_eq!(s.repaired, 0);

        let s = extract_spans(3, &[I, I, O]);
        assert_eq!(s.spans, vec![Span { sentence: 3, start: 0, end: 1 }]);
        assert_eq!(s.repaired, 1);

        assert!(extract_spans(0, &[O, O]).spans.is_empty());
        let s = extract_spans(0, &[B, B, I]);
        assert_eq!(s.spans.len(), 2);
    }

    #[test]
    fn exact_match_examples() {
        let a = Span { sentence: 0, start: 1, end: 3 };
        let b = Span { sentence: 1, start: 0, end: 0 };
        let r = exact_match_prf(&[a, b], &[a, b]);
        assert_eq!(r.scores.f1, 1.0);

        let off = Span { sentence: 0, start: 1, end: 4 };
        let r = exact_match_prf(&[a], &[off]);
        assert_eq!(r.true_pos, 0);
        assert_eq!(r.scores.f1, 0.0);

        let c = Span { sentence: 2, start: 2, end: 5 };
        let d = Span { sentence: 2, start: 6, end: 7 };
        let r = exact_match_prf(&[a, b], &[a, c, d]);
        assert!((r.scores.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.scores.recall - 0.5).abs() < 1e-12);
        assert!((r.scores.f1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn classification_examples() {
        let r = classification_prf(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!(r.scores, Prf { precision: 1.0, recall: 1.0, f1: 1.0 });

        let r = classification_prf(&[true, true, false], &[false, false, false]).unwrap();
        assert_eq!(r.scores, Prf::default());

        // 10 gold positives, 8 predicted positives, 6 of them correct
        let mut gold = vec![true; 10];
        gold.extend(vec![false; 10]);
        let mut pred = vec![false; 20];
        for p in pred.iter_mut().take(6) {
            *p = true;
        }
        pred[10] = true;
        pred[11] = true;
        let r = classification_prf(&gold, &pred).unwrap();
        assert!((r.scores.precision - 0.75).abs() < 1e-12);
        assert!((r.scores.recall - 0.6).abs() < 1e-12);
        assert!((r.scores.f1 - 2.0 / 3.0).abs() < 1e-12);

        assert!(classification_prf(&[true], &[]).is_err());
    }
}
