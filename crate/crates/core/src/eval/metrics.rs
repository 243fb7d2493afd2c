use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("median filter window must be odd and positive, got {window}")));
    }
    Ok(())
}

/// Centered window bounds, shrunk symmetrically near the edges.
fn window_at(t: usize, len: usize, window: usize) -> (usize, usize) {
    let half = (window / 2).min(t).min(len - 1 - t);
    (t - half, t + half)
}

/// Sliding median of integer labels.
pub fn median_filter_labels(seq: &[usize], window: usize) -> Result<Vec<usize>> {
    check_window(window)?;
    let mut buf = Vec::with_capacity(window);
    Ok((0..seq.len())
        .map(|t| {
            let (lo, hi) = window_at(t, seq.len(), window);
            buf.clear();
            buf.extend_from_slice(&seq[lo..=hi]);
            buf.sort_unstable();
            buf[buf.len() / 2]
        })
        .collect())
}

/// Sliding median of a real-valued score track, same window rule.
pub fn median_filter_scores(seq: &[f64], window: usize) -> Result<Vec<f64>> {
    check_window(window)?;
    let mut buf = Vec::with_capacity(window);
    Ok((0..seq.len())
        .map(|t| {
            let (lo, hi) = window_at(t, seq.len(), window);
            buf.clear();
            buf.extend_from_slice(&seq[lo..=hi]);
            buf.sort_by(f64::total_cmp);
            buf[buf.len() / 2]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_bits(pred: &[bool], truth: &[bool]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Dimension(format!("{} predictions for {} labels", pred.len(), truth.len())));
        }
        let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn prf(&self) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Prf {
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            accuracy: ratio(self.tp + self.tn, self.total()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// One-vs-rest precision, recall and accuracy of class `c`. Empty
/// denominators give 0 for precision and recall.
pub fn precision_recall_accuracy(pred: &[usize], truth: &[usize], c: usize) -> Result<Prf> {
    let p: Vec<bool> = pred.iter().map(|&x| x == c).collect();
    let t: Vec<bool> = truth.iter().map(|&x| x == c).collect();
    Ok(Confusion::from_bits(&p, &t)?.prf())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragePrecision {
    pub value: f64,
    pub positives: usize,
}

impl AveragePrecision {
    /// No positives: the value is 0 by convention and should not enter a mean.
    pub fn is_flagged(&self) -> bool {
        self.positives == 0
    }
}

/// Mean of precision at the rank of each positive, ranking by descending
/// score with ties broken by ascending index.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Result<AveragePrecision> {
    if scores.len() != truth.len() {
        return Err(Error::Dimension(format!("{} scores for {} labels", scores.len(), truth.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if truth[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    let value = if hits == 0 { 0.0 } else { sum / hits as f64 };
    Ok(AveragePrecision { value, positives: hits })
}
