use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// `None` when there are no positive labels.
    pub recall: Option<f64>,
    /// 0 when nothing is predicted positive.
    pub precision: f64,
    /// `None` when recall is undefined; 0 when precision + recall = 0.
    pub f1: Option<f64>,
    /// Number of positive labels.
    pub support: usize,
}

/// Scores `(predicted, actual)` pairs.
pub fn evaluate(pairs: &[(bool, bool)]) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::Validation("nothing to evaluate".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for &(p, y) in pairs {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let support = tp + fn_;
    let recall = (support > 0).then(|| tp as f64 / support as f64);
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let f1 = recall.map(|r| if precision + r > 0.0 { 2.0 * precision * r / (precision + r) } else { 0.0 });
    if recall.is_none() {
        tracing::warn!(n = pairs.len(), "no positive labels, recall undefined");
    }
    Ok(Metrics {
        tp,
        fp,
        fn_,
        tn,
        recall,
        precision,
        f1,
        support,
    })
}
