//! The two-stage recommendation pipeline, trained model bundles, baselines
//! and the offline evaluation harness.

mod baselines;
mod bundle;
mod eval;
mod metrics;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{build_prompt, lime_explain, render_text, Explanation};
use crate::ingest::ReviewLog;
use crate::model::{EngineConfig, Level, RegionId, RegionRecord, RegionTable, MAX_CITY_LABELS};
use crate::simfeat::aggregate_features;

pub use baselines::{IcfBaseline, PopularityBaseline};
pub use bundle::{load_bundle, save_bundle, train_level, ModelBundle, TrainOutcome, BUNDLE_FORMAT, BUNDLE_VERSION};
pub use eval::{evaluate_split, sweep, sweep_to_csv, sweep_to_text, EvalRow, Method};
pub use metrics::{evaluate, Metrics};

/// Attributions rendered as sentences in `rendered_text`.
pub const TEXT_TOP_N: usize = 3;

pub const FLAG_NO_CANDIDATES: &str = "no_candidates";
pub const FLAG_FEWER_CANDIDATES: &str = "fewer_candidates_than_requested";
pub const FLAG_NO_NEIGHBORHOODS: &str = "destination_has_no_neighborhoods";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceInput {
    pub liked: Vec<RegionId>,
    #[serde(default)]
    pub disliked: Vec<RegionId>,
}

impl PreferenceInput {
    /// Checks label counts, overlaps and levels, and resolves every id.
    pub fn resolve<'t>(
        &self,
        table: &'t RegionTable,
        level: Level,
    ) -> Result<(Vec<&'t RegionRecord>, Vec<&'t RegionRecord>)> {
        let total = self.liked.len() + self.disliked.len();
        if level == Level::City && total > MAX_CITY_LABELS {
            return Err(Error::Validation(format!(
                "at most {MAX_CITY_LABELS} cities may be labeled, got {total}"
            )));
        }
        if self.liked.is_empty() {
            return Err(Error::Validation("at least one liked region is required".into()));
        }
        let mut seen = BTreeSet::new();
        for id in self.liked.iter().chain(&self.disliked) {
            if id.level() != level {
                return Err(Error::Validation(format!("`{}` is not a {level}", id.code())));
            }
            if !seen.insert(id) {
                return Err(Error::Validation(format!("`{}` is labeled more than once", id.code())));
            }
        }
        let fetch = |ids: &[RegionId]| -> Result<Vec<&'t RegionRecord>> {
            ids.iter()
                .map(|id| {
                    table.get(id).ok_or_else(|| Error::Referential {
                        what: level.as_str(),
                        code: id.code().to_string(),
                    })
                })
                .collect()
        };
        Ok((fetch(&self.liked)?, fetch(&self.disliked)?))
    }

    fn contains(&self, id: &RegionId) -> bool {
        self.liked.contains(id) || self.disliked.contains(id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub region: RegionId,
    pub name: String,
    pub score: f64,
    pub explanation: Explanation,
    pub image_url: Option<String>,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub recommendations: Vec<Recommendation>,
    pub flags: Vec<String>,
}

/// Score descending, then total reviews descending, then code ascending.
fn rank_order(a: (&RegionRecord, f64), b: (&RegionRecord, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| b.0.total_reviews.cmp(&a.0.total_reviews))
        .then_with(|| a.0.id.code().cmp(b.0.id.code()))
}

fn score_and_explain(
    candidates: Vec<&RegionRecord>,
    liked: &[&RegionRecord],
    disliked: &[&RegionRecord],
    bundle: &ModelBundle,
    n: usize,
    config: &EngineConfig,
) -> Result<RecommendationSet> {
    let mut flags = Vec::new();
    if candidates.is_empty() {
        flags.push(FLAG_NO_CANDIDATES.to_string());
        return Ok(RecommendationSet {
            recommendations: Vec::new(),
            flags,
        });
    }
    if candidates.len() < n {
        flags.push(FLAG_FEWER_CANDIDATES.to_string());
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        let fv = aggregate_features(c, liked, disliked, &bundle.registry)?;
        let p = bundle.model.predict_proba(fv.as_slice())?;
        scored.push((c, p, fv));
    }
    scored.sort_by(|a, b| rank_order((a.0, a.1), (b.0, b.1)));
    scored.truncate(n);

    let liked_names: Vec<String> = liked.iter().map(|r| r.name.clone()).collect();
    let disliked_names: Vec<String> = disliked.iter().map(|r| r.name.clone()).collect();
    let mut recommendations = Vec::with_capacity(scored.len());
    for (rec, score, fv) in scored {
        let mut explanation = lime_explain(
            |x: &[f64]| bundle.model.predict_proba(x),
            fv.as_slice(),
            &bundle.feature_names,
            &bundle.background,
            &config.lime,
        )?;
        explanation.rendered_text = render_text(&explanation, &rec.name, &liked_names, TEXT_TOP_N);
        explanation.llm_prompt = build_prompt(&explanation, &rec.name, &liked_names, &disliked_names);
        recommendations.push(Recommendation {
            region: rec.id.clone(),
            name: rec.name.clone(),
            score,
            explanation,
            image_url: rec.image_url.clone(),
            description: rec.description.clone(),
        });
    }
    Ok(RecommendationSet { recommendations, flags })
}

fn expect_level(bundle: &ModelBundle, level: Level) -> Result<()> {
    if bundle.level != level {
        return Err(Error::Contract(format!(
            "a {} model cannot score {level} candidates",
            bundle.level
        )));
    }
    Ok(())
}

/// Recommends cities outside the input, featurized with top = liked and
/// bottom = disliked.
pub fn recommend_cities(
    input: &PreferenceInput,
    bundle: &ModelBundle,
    table: &RegionTable,
    config: &EngineConfig,
) -> Result<RecommendationSet> {
    expect_level(bundle, Level::City)?;
    let (liked, disliked) = input.resolve(table, Level::City)?;
    let candidates: Vec<&RegionRecord> = table.at_level(Level::City).filter(|r| !input.contains(&r.id)).collect();
    score_and_explain(candidates, &liked, &disliked, bundle, config.n_city_recs, config)
}

/// Recommends neighborhoods of `destination`, featurized against the
/// labeled neighborhoods (which usually lie in other cities).
pub fn recommend_neighborhoods(
    destination: &str,
    input: &PreferenceInput,
    bundle: &ModelBundle,
    table: &RegionTable,
    config: &EngineConfig,
) -> Result<RecommendationSet> {
    expect_level(bundle, Level::Neighborhood)?;
    if table.lookup(Level::City, destination).is_none() {
        return Err(Error::Referential {
            what: "city",
            code: destination.to_string(),
        });
    }
    let (liked, disliked) = input.resolve(table, Level::Neighborhood)?;
    let all: Vec<&RegionRecord> = table.neighborhoods_of(destination).collect();
    if all.is_empty() {
        return Ok(RecommendationSet {
            recommendations: Vec::new(),
            flags: vec![FLAG_NO_NEIGHBORHOODS.to_string()],
        });
    }
    let candidates = all.into_iter().filter(|r| !input.contains(&r.id)).collect();
    score_and_explain(candidates, &liked, &disliked, bundle, config.n_neighborhood_recs, config)
}

/// The `n` most-reviewed regions at `level` (optionally only neighborhoods
/// of `within_city`), ties by code. Regions absent from the log count zero.
pub fn popular_regions(
    log: &ReviewLog,
    table: &RegionTable,
    level: Level,
    n: usize,
    within_city: Option<&str>,
) -> Vec<RegionId> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for ev in log.events() {
        let code = match level {
            Level::City => ev.neighborhood.city_code(),
            Level::Neighborhood => ev.neighborhood.code(),
        };
        *counts.entry(code).or_default() += 1;
    }
    let mut regions: Vec<(&RegionRecord, u64)> = table
        .at_level(level)
        .filter(|r| within_city.is_none_or(|c| r.id.city_code() == c))
        .map(|r| (r, counts.get(r.id.code()).copied().unwrap_or(0)))
        .collect();
    regions.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.id.code().cmp(b.0.id.code())));
    regions.into_iter().take(n).map(|(r, _)| r.id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::Background;
    use crate::gbdt::GbdtModel;
    use crate::ingest::ReviewEvent;
    use crate::model::{feature_names, DimensionRegistry};
    use crate::testutil::tiny_table;

    fn city(c: &str) -> RegionId {
        RegionId::city(c).unwrap()
    }

    fn zip(z: &str, c: &str) -> RegionId {
        RegionId::neighborhood(z, c).unwrap()
    }

    fn bundle(level: Level) -> ModelBundle {
        let registry = DimensionRegistry::unit(false);
        ModelBundle {
            level,
            k: 2,
            m: 3,
            feature_names: feature_names(&registry),
            background: Background {
                mean: vec![0.5; 16],
                std: vec![0.2; 16],
            },
            registry,
            model: GbdtModel::constant(0.0, 16),
        }
    }

    fn config() -> EngineConfig {
        EngineConfig {
            lime: crate::explain::LimeConfig {
                n_samples: 200,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn popular_regions_ordering_and_scope() {
        let table = tiny_table();
        let mut events = Vec::new();
        for (z, c, n) in [("a1", "A", 10), ("b1", "B", 5), ("c1", "C", 1), ("c2", "C", 1)] {
            for _ in 0..n {
                events.push(ReviewEvent {
                    user_id: "u".into(),
                    neighborhood: zip(z, c),
                    timestamp: None,
                });
            }
        }
        let log = ReviewLog::new(events);
        assert_eq!(popular_regions(&log, &table, Level::City, 2, None), vec![city("A"), city("B")]);
        assert_eq!(
            popular_regions(&log, &table, Level::City, 10, None),
            vec![city("A"), city("B"), city("C"), city("D")]
        );
        assert_eq!(
            popular_regions(&log, &table, Level::Neighborhood, 10, Some("C")),
            vec![zip("c1", "C"), zip("c2", "C")]
        );
    }

    #[test]
    fn input_validation() {
        let table = tiny_table();
        let b = bundle(Level::City);
        let cfg = config();
        let none = PreferenceInput {
            liked: vec![],
            disliked: vec![city("A")],
        };
        assert!(matches!(recommend_cities(&none, &b, &table, &cfg), Err(Error::Validation(_))));
        let overlap = PreferenceInput {
            liked: vec![city("A")],
            disliked: vec![city("A")],
        };
        assert!(matches!(recommend_cities(&overlap, &b, &table, &cfg), Err(Error::Validation(_))));
        let unknown = PreferenceInput {
            liked: vec![city("Q")],
            disliked: vec![],
        };
        match recommend_cities(&unknown, &b, &table, &cfg) {
            Err(Error::Referential { code, .. }) => assert_eq!(code, "Q"),
            other => panic!("unexpected {other:?}"),
        }
        let seven = PreferenceInput {
            liked: (0..7).map(|i| city(&format!("X{i}"))).collect(),
            disliked: vec![],
        };
        assert!(matches!(recommend_cities(&seven, &b, &table, &cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn every_city_labeled_leaves_nothing_to_recommend() {
        let table = tiny_table();
        let input = PreferenceInput {
            liked: vec![city("A"), city("B")],
            disliked: vec![city("C"), city("D")],
        };
        let out = recommend_cities(&input, &bundle(Level::City), &table, &config()).unwrap();
        assert!(out.recommendations.is_empty());
        assert_eq!(out.flags, vec![FLAG_NO_CANDIDATES]);
    }

    #[test]
    fn constant_model_ties_fall_back_to_reviews_then_code() {
        let table = tiny_table();
        let input = PreferenceInput {
            liked: vec![city("B")],
            disliked: vec![],
        };
        let out = recommend_cities(&input, &bundle(Level::City), &table, &config()).unwrap();
        let codes: Vec<&str> = out.recommendations.iter().map(|r| r.region.code()).collect();
        assert_eq!(codes, vec!["A", "C", "D"]);
        for r in &out.recommendations {
            assert_eq!(r.explanation.attributions.len(), 16);
            assert!(!r.explanation.rendered_text.is_empty());
            assert!(r.explanation.llm_prompt.contains(&r.name));
        }
    }

    #[test]
    fn neighborhoods_stay_in_destination_and_skip_inputs() {
        let table = tiny_table();
        let input = PreferenceInput {
            liked: vec![zip("a1", "A"), zip("b1", "B")],
            disliked: vec![],
        };
        let out = recommend_neighborhoods("A", &input, &bundle(Level::Neighborhood), &table, &config()).unwrap();
        let codes: Vec<&str> = out.recommendations.iter().map(|r| r.region.code()).collect();
        assert_eq!(codes, vec!["a2"]);
        assert_eq!(out.flags, vec![FLAG_FEWER_CANDIDATES]);
        let wrong = recommend_neighborhoods("A", &input, &bundle(Level::City), &table, &config());
        assert!(matches!(wrong, Err(Error::Contract(_))));
        let missing = recommend_neighborhoods("Q", &input, &bundle(Level::Neighborhood), &table, &config());
        assert!(matches!(missing, Err(Error::Referential { .. })));
    }
}
