//! Non-personalised and collaborative baselines, each given the same
//! positive-rate budget as the train split.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::interest::LabeledExample;
use crate::model::RegionId;

fn positive_rate(train: &[LabeledExample]) -> f64 {
    if train.is_empty() {
        return 0.0;
    }
    train.iter().filter(|e| e.label).count() as f64 / train.len() as f64
}

/// Predicts "high interest" for the globally most-reviewed regions.
#[derive(Debug, Clone)]
pub struct PopularityBaseline {
    popular: BTreeSet<RegionId>,
    /// Review mass per region in the train split.
    pub mass: BTreeMap<RegionId, u64>,
}

impl PopularityBaseline {
    /// The popular set holds the top `round(positive rate * n_regions)`
    /// regions by train review mass (ties by code); regions without train
    /// reviews are never popular.
    pub fn fit(train: &[LabeledExample], n_regions: usize) -> Self {
        let mut mass: BTreeMap<RegionId, u64> = BTreeMap::new();
        for e in train {
            *mass.entry(e.region.clone()).or_default() += e.reviews;
        }
        let budget = (positive_rate(train) * n_regions as f64).round() as usize;
        let mut ranked: Vec<(&RegionId, u64)> = mass.iter().filter(|(_, m)| **m > 0).map(|(r, m)| (r, *m)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.code().cmp(b.0.code())));
        let popular = ranked.into_iter().take(budget).map(|(r, _)| r.clone()).collect();
        Self { popular, mass }
    }

    pub fn popular(&self) -> &BTreeSet<RegionId> {
        &self.popular
    }

    pub fn predict(&self, example: &LabeledExample) -> bool {
        self.popular.contains(&example.region)
    }

    pub fn predict_all(&self, examples: &[LabeledExample]) -> Vec<bool> {
        examples.iter().map(|e| self.predict(e)).collect()
    }
}

/// Item-based collaborative filtering over the binary user x region matrix
/// of train-split interactions.
#[derive(Debug, Clone)]
pub struct IcfBaseline {
    users_of: HashMap<RegionId, BTreeSet<String>>,
    visited: HashMap<String, BTreeSet<RegionId>>,
    positive_rate: f64,
}

impl IcfBaseline {
    pub fn fit(train: &[LabeledExample]) -> Self {
        Self::from_interactions(train.iter().map(|e| (e.user_id.as_str(), &e.region)), positive_rate(train))
    }

    pub fn from_interactions<'a>(pairs: impl Iterator<Item = (&'a str, &'a RegionId)>, positive_rate: f64) -> Self {
        let mut users_of: HashMap<RegionId, BTreeSet<String>> = HashMap::new();
        let mut visited: HashMap<String, BTreeSet<RegionId>> = HashMap::new();
        for (u, r) in pairs {
            users_of.entry(r.clone()).or_default().insert(u.to_string());
            visited.entry(u.to_string()).or_default().insert(r.clone());
        }
        Self {
            users_of,
            visited,
            positive_rate,
        }
    }

    /// Cosine similarity of two binary region columns; 0 for a cold column.
    pub fn cosine(&self, a: &RegionId, b: &RegionId) -> f64 {
        let (Some(ua), Some(ub)) = (self.users_of.get(a), self.users_of.get(b)) else {
            return 0.0;
        };
        let common = ua.intersection(ub).count();
        if common == 0 {
            return 0.0;
        }
        common as f64 / ((ua.len() * ub.len()) as f64).sqrt()
    }

    /// Sum of similarities between `region` and the user's other visited regions.
    pub fn score(&self, user: &str, region: &RegionId) -> f64 {
        self.visited
            .get(user)
            .map(|js| js.iter().filter(|j| *j != region).map(|j| self.cosine(region, j)).sum())
            .unwrap_or(0.0)
    }

    /// Marks the highest-scoring `round(positive rate * n)` examples as
    /// positive; examples tied with the last selected score are included and
    /// zero scores never are.
    pub fn predict_all(&self, examples: &[LabeledExample]) -> Vec<bool> {
        let scores: Vec<f64> = examples.iter().map(|e| self.score(&e.user_id, &e.region)).collect();
        let budget = (self.positive_rate * examples.len() as f64).round() as usize;
        if budget == 0 {
            return vec![false; examples.len()];
        }
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let cutoff = sorted[budget.min(sorted.len()) - 1];
        scores.iter().map(|&s| s > 0.0 && s >= cutoff).collect()
    }
}
