use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::GbdtParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub threshold: f64,
    pub gain: f64,
}

/// Midpoint of two consecutive distinct values, kept strictly below `b` so
/// that `x <= threshold` always sends `a` left and `b` right.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) * 0.5;
    if m < b {
        m
    } else {
        a
    }
}

/// Second-order gain of splitting (G, H) into (G_L, H_L) and (G - G_L, H - H_L).
pub fn split_gain(g_left: f64, h_left: f64, g_total: f64, h_total: f64, lambda: f64) -> f64 {
    let g_right = g_total - g_left;
    let h_right = h_total - h_left;
    g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda)
        - g_total * g_total / (h_total + lambda)
}

/// Scans samples already sorted by feature value. Sums are accumulated in
/// that order; the first (smallest) threshold wins ties. With `accept_zero`
/// the first exactly-zero-gain candidate is returned when nothing is positive.
pub(crate) fn scan_sorted(
    n: usize,
    value: impl Fn(usize) -> f64,
    grad: impl Fn(usize) -> f64,
    hess: impl Fn(usize) -> f64,
    min_samples_leaf: usize,
    lambda: f64,
    accept_zero: bool,
) -> Option<Split> {
    if n < 2 * min_samples_leaf.max(1) {
        return None;
    }
    let (mut g_total, mut h_total) = (0.0, 0.0);
    for i in 0..n {
        g_total += grad(i);
        h_total += hess(i);
    }
    let mut best: Option<Split> = None;
    let (mut g_left, mut h_left) = (0.0, 0.0);
    for i in 0..n - 1 {
        g_left += grad(i);
        h_left += hess(i);
        let (a, b) = (value(i), value(i + 1));
        if a == b {
            continue;
        }
        let n_left = i + 1;
        if n_left < min_samples_leaf || n - n_left < min_samples_leaf {
            continue;
        }
        let gain = split_gain(g_left, h_left, g_total, h_total, lambda);
        let better = match best {
            None => gain > 0.0 || (accept_zero && gain == 0.0),
            Some(b) => gain > b.gain,
        };
        if better {
            best = Some(Split {
                threshold: midpoint(a, b),
                gain,
            });
        }
    }
    best
}

/// Best threshold on one feature by exact greedy enumeration.
pub fn best_split(
    values: &[f64],
    gradients: &[f64],
    hessians: &[f64],
    params: &GbdtParams,
) -> Result<Option<Split>> {
    if values.len() != gradients.len() || values.len() != hessians.len() {
        return Err(Error::Contract(format!(
            "best_split: {} values, {} gradients, {} hessians",
            values.len(),
            gradients.len(),
            hessians.len()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Contract("best_split: NaN feature value".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    Ok(scan_sorted(
        order.len(),
        |i| values[order[i]],
        |i| gradients[order[i]],
        |i| hessians[order[i]],
        params.min_samples_leaf,
        params.l2_leaf_reg,
        false,
    ))
}
