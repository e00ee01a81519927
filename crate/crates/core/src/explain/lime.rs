use std::fmt::Display;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Attribution, Background, Explanation, LimeConfig};
use crate::error::{Error, Result};

/// `exp(-d^2 / width^2)`.
pub fn kernel_weight(distance: f64, width: f64) -> f64 {
    (-(distance * distance) / (width * width)).exp()
}

/// Perturbations around an instance. Row 0 is the instance itself.
#[derive(Debug, Clone)]
pub struct LimeSamples {
    /// Samples in the original feature space, passed to the model.
    pub raw: Vec<Vec<f64>>,
    /// `(raw - mean) / std` per feature, the surrogate's design matrix.
    pub standardized: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub fn perturbation_samples(instance: &[f64], background: &Background, config: &LimeConfig) -> Result<LimeSamples> {
    config.validate()?;
    background.validate()?;
    let f = instance.len();
    if background.len() != f {
        return Err(Error::Contract(format!(
            "background has {} features, instance has {f}",
            background.len()
        )));
    }
    if config.n_samples < f + 1 {
        return Err(Error::Config(format!(
            "lime.n_samples {} must be at least feature_count + 1 = {}",
            config.n_samples,
            f + 1
        )));
    }
    let std = background.effective_std();
    let width = config.kernel_width_for(f);
    let standardize = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(&background.mean)
            .zip(&std)
            .map(|((x, m), s)| (x - m) / s)
            .collect::<Vec<f64>>()
    };
    let z0 = standardize(instance);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut raw = Vec::with_capacity(config.n_samples);
    let mut standardized = Vec::with_capacity(config.n_samples);
    let mut weights = Vec::with_capacity(config.n_samples);
    raw.push(instance.to_vec());
    standardized.push(z0.clone());
    weights.push(1.0);
    for _ in 1..config.n_samples {
        let x: Vec<f64> = instance
            .iter()
            .zip(&std)
            .map(|(v, s)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + s * e
            })
            .collect();
        let z = standardize(&x);
        let d = z.iter().zip(&z0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        weights.push(kernel_weight(d, width));
        raw.push(x);
        standardized.push(z);
    }
    Ok(LimeSamples {
        raw,
        standardized,
        weights,
    })
}

/// Weighted ridge with an unpenalised intercept. Returns `(intercept, coefficients)`.
fn weighted_ridge(z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let p = z[0].len() + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for ((zi, yi), wi) in z.iter().zip(y).zip(w) {
        row[0] = 1.0;
        row[1..].copy_from_slice(zi);
        for r in 0..p {
            let wr = wi * row[r];
            b[r] += wr * yi;
            for c in r..p {
                a[(r, c)] += wr * row[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            a[(r, c)] = a[(c, r)];
        }
        if r > 0 {
            a[(r, r)] += lambda;
        }
    }
    let solution = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Domain("surrogate normal equations are singular".into()))?,
    };
    Ok((solution[0], solution.iter().skip(1).copied().collect()))
}

fn weighted_r2(z: &[Vec<f64>], y: &[f64], w: &[f64], intercept: f64, coef: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((zi, yi), wi) in z.iter().zip(y).zip(w) {
        let fit = intercept + zi.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
        ss_res += wi * (yi - fit) * (yi - fit);
        ss_tot += wi * (yi - mean) * (yi - mean);
    }
    if ss_tot <= 1e-24 * sw {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Explains `predict_fn` around `instance` with a weighted ridge surrogate
/// fitted on standardized Gaussian perturbations.
pub fn lime_explain<F, E>(
    mut predict_fn: F,
    instance: &[f64],
    feature_names: &[String],
    background: &Background,
    config: &LimeConfig,
) -> Result<Explanation>
where
    F: FnMut(&[f64]) -> std::result::Result<f64, E>,
    E: Display,
{
    if feature_names.len() != instance.len() {
        return Err(Error::Contract(format!(
            "{} feature names for {} features",
            feature_names.len(),
            instance.len()
        )));
    }
    let samples = perturbation_samples(instance, background, config)?;
    let y = samples
        .raw
        .iter()
        .enumerate()
        .map(|(i, x)| {
            predict_fn(x).map_err(|e| Error::Predict {
                sample: i,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Predict {
            sample: i,
            message: "prediction is not finite".into(),
        });
    }
    let (intercept, coef) = weighted_ridge(&samples.standardized, &y, &samples.weights, config.ridge_lambda)?;
    let surrogate_r2 = weighted_r2(&samples.standardized, &y, &samples.weights, intercept, &coef);

    let mut attributions: Vec<Attribution> = feature_names
        .iter()
        .zip(&coef)
        .map(|(name, &weight)| Attribution {
            feature: name.clone(),
            weight,
        })
        .collect();
    attributions.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
    let raw_distances: IndexMap<String, f64> = feature_names.iter().cloned().zip(instance.iter().copied()).collect();
    Ok(Explanation {
        attributions,
        intercept,
        raw_distances,
        rendered_text: String::new(),
        llm_prompt: String::new(),
        surrogate_r2,
    })
}
