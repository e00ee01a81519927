use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gbdt::fit;
use crate::ingest::{filter_tourists, finish_csv, RegionData};
use crate::interest::{build_dataset, build_profiles, Dataset};
use crate::model::{EngineConfig, Level};

use super::{evaluate, IcfBaseline, Metrics, PopularityBaseline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Model,
    Popularity,
    Icf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Model => "model",
            Method::Popularity => "popularity",
            Method::Icf => "icf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub level: Level,
    pub k: usize,
    pub method: Method,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
}

/// Trains the classifier on the dataset's train split and scores it and
/// both baselines on the shared test split.
pub fn evaluate_split(dataset: &Dataset, n_regions: usize, k: usize, config: &EngineConfig) -> Result<Vec<EvalRow>> {
    let rows: Vec<&[f64]> = dataset.train.iter().map(|e| e.features.as_slice()).collect();
    let labels: Vec<bool> = dataset.train.iter().map(|e| e.label).collect();
    let model = fit(&rows, &labels, &config.gbdt)?.model;
    let truth: Vec<bool> = dataset.test.iter().map(|e| e.label).collect();

    let model_pred = dataset
        .test
        .iter()
        .map(|e| Ok(model.predict_proba(e.features.as_slice())? >= config.decision_threshold))
        .collect::<Result<Vec<bool>>>()?;
    let pop_pred = PopularityBaseline::fit(&dataset.train, n_regions).predict_all(&dataset.test);
    let icf_pred = IcfBaseline::fit(&dataset.train).predict_all(&dataset.test);

    [(Method::Model, model_pred), (Method::Popularity, pop_pred), (Method::Icf, icf_pred)]
        .into_iter()
        .map(|(method, pred)| {
            let pairs: Vec<(bool, bool)> = pred.into_iter().zip(truth.iter().copied()).collect();
            Ok(EvalRow {
                level: dataset.level,
                k,
                method,
                n_train: dataset.train.len(),
                n_test: dataset.test.len(),
                metrics: evaluate(&pairs)?,
            })
        })
        .collect()
}

/// Evaluates every `k` in `ks` at `level` with the rest of `config` fixed.
pub fn sweep(
    data: &RegionData,
    level: Level,
    ks: impl IntoIterator<Item = usize>,
    config: &EngineConfig,
) -> Result<Vec<EvalRow>> {
    let profiles = build_profiles(&filter_tourists(&data.log, config.min_cbsas_per_user));
    let n_regions = data.table.count_at_level(level);
    let mut out = Vec::new();
    for k in ks {
        let cfg = EngineConfig { k, ..config.clone() };
        let dataset = build_dataset(&profiles, &data.table, &data.registry, level, &cfg)?;
        out.extend(evaluate_split(&dataset, n_regions, k, &cfg)?);
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

pub fn sweep_to_csv(rows: &[EvalRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "k", "method", "recall", "precision", "f1", "support", "n_train", "n_test"])?;
    for r in rows {
        w.write_record([
            r.level.as_str().to_string(),
            r.k.to_string(),
            r.method.as_str().to_string(),
            fmt_opt(r.metrics.recall),
            format!("{:.4}", r.metrics.precision),
            fmt_opt(r.metrics.f1),
            r.metrics.support.to_string(),
            r.n_train.to_string(),
            r.n_test.to_string(),
        ])?;
    }
    finish_csv(w)
}

pub fn sweep_to_text(rows: &[EvalRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<13} {:>2}  {:<10} {:>7} {:>9} {:>7} {:>7}",
        "level", "k", "method", "recall", "precision", "f1", "n_test"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<13} {:>2}  {:<10} {:>7} {:>9.4} {:>7} {:>7}",
            r.level.as_str(),
            r.k,
            r.method.as_str(),
            fmt_opt(r.metrics.recall),
            r.metrics.precision,
            fmt_opt(r.metrics.f1),
            r.n_test
        );
    }
    s
}
