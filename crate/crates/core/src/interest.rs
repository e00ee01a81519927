//! Per-user interest profiles, top/bottom partitions and labeled datasets.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{finish_csv, ReviewLog};
use crate::model::{feature_names, DimensionRegistry, EngineConfig, Level, RegionId, RegionRecord, RegionTable};
use crate::simfeat::{aggregate_features, FeatureVector};

/// Dense ranks of `counts`: the largest count gets rank 1, ties share a rank
/// and the next distinct count takes the next consecutive rank.
pub fn dense_ranks<K: Ord + Clone>(counts: &BTreeMap<K, u64>) -> BTreeMap<K, u32> {
    let mut distinct: Vec<u64> = counts.values().copied().collect();
    distinct.sort_unstable_by(|a, b| b.cmp(a));
    distinct.dedup();
    counts
        .iter()
        .map(|(k, c)| {
            let pos = distinct.binary_search_by(|d| c.cmp(d)).expect("count is present");
            (k.clone(), pos as u32 + 1)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelProfile {
    pub counts: BTreeMap<RegionId, u64>,
    pub ranks: BTreeMap<RegionId, u32>,
}

impl LevelProfile {
    pub fn from_counts(counts: BTreeMap<RegionId, u64>) -> Self {
        let ranks = dense_ranks(&counts);
        Self { counts, ranks }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub cities: LevelProfile,
    pub neighborhoods: LevelProfile,
}

impl UserProfile {
    pub fn level(&self, level: Level) -> &LevelProfile {
        match level {
            Level::City => &self.cities,
            Level::Neighborhood => &self.neighborhoods,
        }
    }
}

/// One profile per user, ordered by user id.
pub fn build_profiles(log: &ReviewLog) -> Vec<UserProfile> {
    log.user_index()
        .keys()
        .map(|user| {
            let mut zips: BTreeMap<RegionId, u64> = BTreeMap::new();
            let mut cities: BTreeMap<RegionId, u64> = BTreeMap::new();
            for ev in log.events_of(user) {
                *zips.entry(ev.neighborhood.clone()).or_default() += 1;
                let city = RegionId::city(ev.neighborhood.city_code()).expect("neighborhood ids carry a city code");
                *cities.entry(city).or_default() += 1;
            }
            UserProfile {
                user_id: user.clone(),
                cities: LevelProfile::from_counts(cities),
                neighborhoods: LevelProfile::from_counts(zips),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub top: BTreeSet<RegionId>,
    pub bottom: BTreeSet<RegionId>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.top.len() + self.bottom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.top.is_empty() && self.bottom.is_empty()
    }

    pub fn contains(&self, id: &RegionId) -> bool {
        self.top.contains(id) || self.bottom.contains(id)
    }
}

/// Splits ranked regions into `rank <= cutoff` and the rest.
pub fn partition_ranks(ranks: &BTreeMap<RegionId, u32>, cutoff: usize) -> Result<Partition> {
    if cutoff < 1 {
        return Err(Error::Config("top cutoff must be at least 1".into()));
    }
    let mut p = Partition::default();
    for (id, &r) in ranks {
        if (r as usize) <= cutoff {
            p.top.insert(id.clone());
        } else {
            p.bottom.insert(id.clone());
        }
    }
    Ok(p)
}

/// Partition over every region the user visited at `level`, by the
/// profile's own ranks. Training uses [`partition_neighborhoods`] for the
/// neighborhood level.
pub fn partition_regions(profile: &UserProfile, level: Level, k_or_m: usize) -> Result<Partition> {
    partition_ranks(&profile.level(level).ranks, k_or_m)
}

/// Neighborhood partition restricted to ZIPs inside the user's top-k cities.
/// The retained ZIPs are densely re-ranked among themselves before the
/// top-m cut.
pub fn partition_neighborhoods(profile: &UserProfile, k: usize, m: usize) -> Result<Partition> {
    let cities = partition_regions(profile, Level::City, k)?;
    let scoped: BTreeMap<RegionId, u64> = profile
        .neighborhoods
        .counts
        .iter()
        .filter(|(id, _)| cities.top.iter().any(|c| c.code() == id.city_code()))
        .map(|(id, c)| (id.clone(), *c))
        .collect();
    partition_ranks(&dense_ranks(&scoped), m)
}

/// The partition used for training and evaluation at `level`.
pub fn user_partition(profile: &UserProfile, level: Level, config: &EngineConfig) -> Result<Partition> {
    match level {
        Level::City => partition_regions(profile, Level::City, config.k),
        Level::Neighborhood => partition_neighborhoods(profile, config.k, config.m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub user_id: String,
    pub region: RegionId,
    pub features: FeatureVector,
    /// True when the region is in the user's top partition.
    pub label: bool,
    /// The user's review count for the region.
    pub reviews: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub level: Level,
    pub feature_names: Vec<String>,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

fn record<'a>(table: &'a RegionTable, id: &RegionId) -> Result<&'a RegionRecord> {
    table.get(id).ok_or_else(|| Error::Referential {
        what: match id.level() {
            Level::City => "city",
            Level::Neighborhood => "neighborhood",
        },
        code: id.code().to_string(),
    })
}

fn without<'t>(set: &[&'t RegionRecord], id: &RegionId) -> Vec<&'t RegionRecord> {
    set.iter().copied().filter(|r| r.id != *id).collect()
}

/// Leave-one-out examples for one user: each visited region is featurized
/// against the partition with itself removed.
pub fn user_examples(
    profile: &UserProfile,
    partition: &Partition,
    table: &RegionTable,
    registry: &DimensionRegistry,
) -> Result<Vec<LabeledExample>> {
    if partition.len() < 2 {
        tracing::debug!(user = %profile.user_id, "fewer than 2 regions in partition, no examples");
        return Ok(Vec::new());
    }
    let top: Vec<&RegionRecord> = partition.top.iter().map(|id| record(table, id)).collect::<Result<_>>()?;
    let bottom: Vec<&RegionRecord> = partition.bottom.iter().map(|id| record(table, id)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(partition.len());
    for (candidate, label) in top.iter().map(|r| (*r, true)).chain(bottom.iter().map(|r| (*r, false))) {
        let top_rest = without(&top, &candidate.id);
        if top_rest.is_empty() {
            tracing::debug!(user = %profile.user_id, region = %candidate.id, "sole top region, skipped");
            continue;
        }
        let features = aggregate_features(candidate, &top_rest, &without(&bottom, &candidate.id), registry)?;
        let reviews = profile.level(candidate.id.level()).counts.get(&candidate.id).copied().unwrap_or(0);
        out.push(LabeledExample {
            user_id: profile.user_id.clone(),
            region: candidate.id.clone(),
            features,
            label,
            reviews,
        });
    }
    Ok(out)
}

/// Seeded per-example split; both halves keep the input order.
pub fn split_examples<T: Clone>(examples: &[T], train_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * examples.len() as f64).round() as usize).min(examples.len());
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    (
        train_idx.into_iter().map(|i| examples[i].clone()).collect(),
        test_idx.into_iter().map(|i| examples[i].clone()).collect(),
    )
}

pub fn build_dataset(
    profiles: &[UserProfile],
    table: &RegionTable,
    registry: &DimensionRegistry,
    level: Level,
    config: &EngineConfig,
) -> Result<Dataset> {
    config.validate()?;
    if profiles.is_empty() {
        return Err(Error::Validation("no user profiles to build a dataset from".into()));
    }
    let mut all = Vec::new();
    for profile in profiles {
        let partition = user_partition(profile, level, config)?;
        all.extend(user_examples(profile, &partition, table, registry)?);
    }
    let (train, test) = split_examples(&all, config.train_fraction, config.rng_seed);
    tracing::info!(%level, examples = all.len(), train = train.len(), test = test.len(), "dataset built");
    Ok(Dataset {
        level,
        feature_names: feature_names(registry),
        train,
        test,
    })
}

/// CSV with `user_id,region,parent_city,label` followed by the feature columns.
pub fn examples_to_csv(feature_names: &[String], examples: &[LabeledExample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["user_id", "region", "parent_city", "label"];
    header.extend(feature_names.iter().map(String::as_str));
    w.write_record(&header)?;
    for ex in examples {
        let mut row = vec![
            ex.user_id.clone(),
            ex.region.code().to_string(),
            ex.region.parent_city().unwrap_or("").to_string(),
            u8::from(ex.label).to_string(),
        ];
        row.extend(ex.features.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish_csv(w)
}
