//! Local surrogate explanations and their text renderings.

mod lime;
mod text;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lime::{kernel_weight, lime_explain, perturbation_samples, LimeSamples};
pub use text::{build_prompt, render_text};

/// Stddev used for features with zero background variance.
pub const MIN_STDDEV: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(feature_count)` when unset.
    pub kernel_width: Option<f64>,
    pub ridge_lambda: f64,
    pub rng_seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_width: None,
            ridge_lambda: 1e-3,
            rng_seed: 7,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("lime.n_samples must be positive".into()));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("lime.kernel_width {w} must be positive")));
            }
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::Config(format!("lime.ridge_lambda {} must be >= 0", self.ridge_lambda)));
        }
        Ok(())
    }

    pub fn kernel_width_for(&self, feature_count: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (feature_count as f64).sqrt())
    }
}

/// Per-feature mean and standard deviation of the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Background {
    /// Population statistics over `rows`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Validation("background needs at least one row".into()));
        };
        let f = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; f];
        for r in rows {
            let r = r.as_ref();
            if r.len() != f {
                return Err(Error::Contract(format!("background row has {} features, expected {f}", r.len())));
            }
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Stddevs with zeros replaced by [`MIN_STDDEV`].
    pub fn effective_std(&self) -> Vec<f64> {
        self.std
            .iter()
            .map(|&s| if s > 0.0 { s } else { MIN_STDDEV })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Contract("background mean/std lengths differ".into()));
        }
        if self.std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("background statistics must be finite, stddev >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: String,
    pub weight: f64,
}

/// Surrogate explanation of one prediction. `lime_explain` fills the numeric
/// fields; the text fields are filled by [`render_text`] and [`build_prompt`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Sorted by absolute weight, largest first.
    pub attributions: Vec<Attribution>,
    pub intercept: f64,
    /// The candidate's feature values, in layout order.
    pub raw_distances: IndexMap<String, f64>,
    pub rendered_text: String,
    pub llm_prompt: String,
    pub surrogate_r2: f64,
}

impl Explanation {
    pub fn weight_of(&self, feature: &str) -> Option<f64> {
        self.attributions.iter().find(|a| a.feature == feature).map(|a| a.weight)
    }
}
