use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Background;
use crate::gbdt::{fit, GbdtModel};
use crate::ingest::{filter_tourists, write_file, RegionData};
use crate::interest::{build_dataset, build_profiles, Dataset};
use crate::model::{feature_names, DimensionRegistry, EngineConfig, Level};

pub const BUNDLE_FORMAT: &str = "regionrec-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Everything needed to score and explain candidates at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub level: Level,
    pub k: usize,
    pub m: usize,
    pub feature_names: Vec<String>,
    pub registry: DimensionRegistry,
    pub background: Background,
    pub model: GbdtModel,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.registry.feature_count();
        if self.feature_names != feature_names(&self.registry) {
            return Err(Error::ModelFormat("feature names do not match the registry layout".into()));
        }
        if self.model.feature_count != n || self.background.len() != n {
            return Err(Error::ModelFormat(format!(
                "registry has {n} features, model {} and background {}",
                self.model.feature_count,
                self.background.len()
            )));
        }
        self.background.validate().map_err(|e| Error::ModelFormat(e.to_string()))?;
        self.model.validate()
    }
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    bundle: ModelBundle,
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let file = BundleFile {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        bundle: bundle.clone(),
    };
    write_file(path, &serde_json::to_string_pretty(&file)?)
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file: BundleFile = serde_json::from_str(&text)
        .map_err(|e| Error::ModelFormat(format!("{}: unreadable bundle: {e}", path.display())))?;
    if file.format != BUNDLE_FORMAT || file.version != BUNDLE_VERSION {
        return Err(Error::ModelFormat(format!(
            "{}: expected {BUNDLE_FORMAT} v{BUNDLE_VERSION}, found {} v{}",
            path.display(),
            file.format,
            file.version
        )));
    }
    file.bundle.validate()?;
    Ok(file.bundle)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub dataset: Dataset,
    pub single_class: bool,
    pub loss_trace: Vec<f64>,
}

/// Builds the level's dataset from tourist-filtered profiles and fits the
/// classifier on its train split.
pub fn train_level(data: &RegionData, level: Level, config: &EngineConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let log = filter_tourists(&data.log, config.min_cbsas_per_user);
    let profiles = build_profiles(&log);
    let dataset = build_dataset(&profiles, &data.table, &data.registry, level, config)?;
    if dataset.train.is_empty() {
        return Err(Error::Validation(format!("no {level} training examples")));
    }
    let rows: Vec<&[f64]> = dataset.train.iter().map(|e| e.features.as_slice()).collect();
    let labels: Vec<bool> = dataset.train.iter().map(|e| e.label).collect();
    let out = fit(&rows, &labels, &config.gbdt)?;
    let bundle = ModelBundle {
        level,
        k: config.k,
        m: config.m,
        feature_names: dataset.feature_names.clone(),
        registry: data.registry.clone(),
        background: Background::from_rows(&rows)?,
        model: out.model,
    };
    Ok(TrainOutcome {
        bundle,
        dataset,
        single_class: out.single_class,
        loss_trace: out.loss_trace,
    })
}
