//! Deterministic synthetic corpora with planted user archetypes.
//!
//! Every archetype owns a centroid in attribute space. Cities and
//! neighborhoods are generated around those centroids, and each synthetic
//! user prefers the regions closest to their archetype's centroid: a few
//! "favourite" cities absorb most of the user's reviews, the rest of the
//! itinerary is drawn uniformly. A `noise_rate` share of every choice is
//! made uniformly at random instead.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ReviewEvent, ReviewLog};
use crate::model::{
    DimensionRegistry, Level, RegionAttributes, RegionId, RegionRecord, RegionTable, TableSchema,
};

const RACE_CATEGORIES: [&str; 5] = ["white", "black", "hispanic", "asian", "other"];
const SCENE_DIMS: [&str; 6] = [
    "traditional",
    "self_expression",
    "utilitarian",
    "glamour",
    "transgression",
    "neighborliness",
];
const VENUE_CATEGORIES: [&str; 6] = ["food", "nightlife", "outdoors", "arts", "shopping", "lodging"];

/// Favourite cities per user are drawn from this inclusive range.
const FAVOURITES: (usize, usize) = (2, 3);
/// Cities visited beyond the minimum, drawn uniformly from `0..=EXTRA_CITIES`.
const EXTRA_CITIES: usize = 2;
const BASE_TIMESTAMP: i64 = 1_577_836_800;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_cities: usize,
    pub n_neighborhoods_per_city: usize,
    pub n_users: usize,
    pub n_archetypes: usize,
    pub reviews_per_user_range: [usize; 2],
    pub noise_rate: f64,
    pub rng_seed: u64,
    /// Every user visits at least this many distinct cities.
    pub min_cities_per_user: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_cities: 50,
            n_neighborhoods_per_city: 6,
            n_users: 500,
            n_archetypes: 3,
            reviews_per_user_range: [20, 40],
            noise_rate: 0.1,
            rng_seed: 7,
            min_cities_per_user: 6,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.reviews_per_user_range;
        for (name, v) in [
            ("n_cities", self.n_cities),
            ("n_neighborhoods_per_city", self.n_neighborhoods_per_city),
            ("n_users", self.n_users),
            ("n_archetypes", self.n_archetypes),
            ("min_cities_per_user", self.min_cities_per_user),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_archetypes > self.n_cities {
            return Err(Error::Config(format!(
                "{} archetypes requested but only {} cities",
                self.n_archetypes, self.n_cities
            )));
        }
        if lo > hi {
            return Err(Error::Config(format!("reviews_per_user_range [{lo}, {hi}] is inverted")));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("noise_rate {} outside [0, 1]", self.noise_rate)));
        }
        if self.min_cities_per_user > self.n_cities {
            return Err(Error::Config(format!(
                "min_cities_per_user {} exceeds n_cities {}",
                self.min_cities_per_user, self.n_cities
            )));
        }
        if lo < self.min_cities_per_user {
            return Err(Error::Config(format!(
                "users need at least {} reviews to visit {} cities",
                self.min_cities_per_user, self.min_cities_per_user
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub table: RegionTable,
    pub registry: DimensionRegistry,
    pub log: ReviewLog,
    /// Ground-truth archetype of each user.
    pub user_archetypes: BTreeMap<String, usize>,
    /// Archetype each city was generated around.
    pub city_clusters: BTreeMap<String, usize>,
    /// Archetype each neighborhood was generated around.
    pub neighborhood_clusters: BTreeMap<String, usize>,
}

/// Archetype centroids expressed in the embedding used for preference
/// weighting, one set per level.
#[derive(Debug, Clone)]
pub struct ArchetypeCentroids {
    pub city: Vec<Vec<f64>>,
    pub neighborhood: Vec<Vec<f64>>,
}

fn schema() -> TableSchema {
    TableSchema {
        race_categories: RACE_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        scene_dims: SCENE_DIMS.iter().map(|s| s.to_string()).collect(),
        venue_categories: VENUE_CATEGORIES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Scalar attribute centres for one archetype.
#[derive(Debug, Clone)]
struct Centroid {
    log_pop: f64,
    log_income: f64,
    education: f64,
    employment: f64,
    politics: f64,
    race: Vec<f64>,
    scenes: Vec<f64>,
    venues: Vec<f64>,
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Stratified values: archetype `a` lands in its own (permuted) slice of `[lo, hi]`.
fn stratified(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);
    let width = (hi - lo) / n as f64;
    slots
        .into_iter()
        .map(|s| lo + width * (s as f64 + rng.random_range(0.3..0.7)))
        .collect()
}

fn peaked_distribution(rng: &mut ChaCha8Rng, len: usize, peak: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..0.3)).collect();
    v[peak % len] += 1.5;
    normalize(&mut v);
    v
}

fn make_centroids(rng: &mut ChaCha8Rng, n: usize) -> Vec<Centroid> {
    let pops = stratified(rng, n, (2.0e5f64).ln(), (6.0e6f64).ln());
    let incomes = stratified(rng, n, (3.5e4f64).ln(), (1.1e5f64).ln());
    let edus = stratified(rng, n, 0.15, 0.6);
    let emps = stratified(rng, n, 0.55, 0.75);
    let pols = stratified(rng, n, 0.2, 0.8);
    (0..n)
        .map(|a| {
            let mut scenes: Vec<f64> = (0..SCENE_DIMS.len()).map(|_| rng.random_range(-0.3..0.3)).collect();
            scenes[a % SCENE_DIMS.len()] += 2.0;
            scenes[(a + 3) % SCENE_DIMS.len()] -= 1.0;
            Centroid {
                log_pop: pops[a],
                log_income: incomes[a],
                education: edus[a],
                employment: emps[a],
                politics: pols[a],
                race: peaked_distribution(rng, RACE_CATEGORIES.len(), a),
                scenes,
                venues: peaked_distribution(rng, VENUE_CATEGORIES.len(), a + 1),
            }
        })
        .collect()
}

fn mix_distribution(rng: &mut ChaCha8Rng, base: &[f64], keep: f64) -> Vec<f64> {
    let mut noise: Vec<f64> = base.iter().map(|_| rng.random_range(0.0..1.0)).collect();
    normalize(&mut noise);
    let mut v: Vec<f64> = base
        .iter()
        .zip(&noise)
        .map(|(b, n)| keep * b + (1.0 - keep) * n)
        .collect();
    normalize(&mut v);
    v
}

fn jitter(rng: &mut ChaCha8Rng, x: f64, sd: f64) -> f64 {
    x + Normal::new(0.0, sd).expect("positive sd").sample(rng)
}

fn city_attributes(rng: &mut ChaCha8Rng, c: &Centroid) -> RegionAttributes {
    RegionAttributes {
        population: jitter(rng, c.log_pop, 0.15).exp().round(),
        median_income: jitter(rng, c.log_income, 0.05).exp().round(),
        education_rate: jitter(rng, c.education, 0.02).clamp(0.0, 1.0),
        employment_rate: jitter(rng, c.employment, 0.01).clamp(0.0, 1.0),
        racial_composition: mix_distribution(rng, &c.race, 0.85),
        political_leaning: jitter(rng, c.politics, 0.03).clamp(0.0, 1.0),
        scenes_vector: c.scenes.iter().map(|&s| jitter(rng, s, 0.15)).collect(),
        venue_type_distribution: mix_distribution(rng, &c.venues, 0.85),
        centroid_lat: rng.random_range(26.0..48.5),
        centroid_lon: rng.random_range(-123.0..-70.0),
    }
}

fn blend(a: f64, b: f64, w: f64) -> f64 {
    w * a + (1.0 - w) * b
}

/// Neighborhood attributes lean towards their own archetype (weight 0.7) and
/// keep some of the surrounding city's character.
fn neighborhood_attributes(
    rng: &mut ChaCha8Rng,
    c: &Centroid,
    city: &RegionAttributes,
    n_per_city: usize,
) -> RegionAttributes {
    const OWN: f64 = 0.7;
    let city_log_pop = city.population.ln_1p() - (n_per_city as f64).ln();
    let log_pop = blend(c.log_pop - (40.0f64).ln(), city_log_pop, OWN);
    let mix = |rng: &mut ChaCha8Rng, own: &[f64], city: &[f64]| {
        let base: Vec<f64> = own.iter().zip(city).map(|(o, c)| blend(*o, *c, OWN)).collect();
        mix_distribution(rng, &base, 0.9)
    };
    RegionAttributes {
        population: jitter(rng, log_pop, 0.2).exp().round(),
        median_income: jitter(rng, blend(c.log_income, city.median_income.ln_1p(), OWN), 0.05)
            .exp()
            .round(),
        education_rate: jitter(rng, blend(c.education, city.education_rate, OWN), 0.02).clamp(0.0, 1.0),
        employment_rate: jitter(rng, blend(c.employment, city.employment_rate, OWN), 0.01).clamp(0.0, 1.0),
        racial_composition: mix(rng, &c.race, &city.racial_composition),
        political_leaning: jitter(rng, blend(c.politics, city.political_leaning, OWN), 0.03).clamp(0.0, 1.0),
        scenes_vector: c
            .scenes
            .iter()
            .zip(&city.scenes_vector)
            .map(|(o, s)| jitter(rng, blend(*o, *s, OWN), 0.15))
            .collect(),
        venue_type_distribution: mix(rng, &c.venues, &city.venue_type_distribution),
        centroid_lat: (city.centroid_lat + rng.random_range(-0.12..0.12)).clamp(-90.0, 90.0),
        centroid_lon: (city.centroid_lon + rng.random_range(-0.12..0.12)).clamp(-180.0, 180.0),
    }
}

/// Min/max of log1p(population) and log1p(income) at one level, used to put
/// the heavy-tailed scalars on a unit scale in the preference embedding.
#[derive(Debug, Clone, Copy)]
struct EmbeddingNorm {
    pop: (f64, f64),
    income: (f64, f64),
}

impl EmbeddingNorm {
    fn fit<'a>(attrs: impl Iterator<Item = &'a RegionAttributes>) -> Self {
        let mut pop = (f64::INFINITY, f64::NEG_INFINITY);
        let mut income = pop;
        for a in attrs {
            let (p, i) = (a.population.ln_1p(), a.median_income.ln_1p());
            pop = (pop.0.min(p), pop.1.max(p));
            income = (income.0.min(i), income.1.max(i));
        }
        Self { pop, income }
    }

    fn scaled(x: f64, (lo, hi): (f64, f64)) -> f64 {
        if hi > lo {
            (x - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    fn embed(&self, a: &RegionAttributes) -> Vec<f64> {
        let norm = a.scenes_vector.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let mut v = vec![
            Self::scaled(a.population.ln_1p(), self.pop),
            Self::scaled(a.median_income.ln_1p(), self.income),
            a.education_rate,
            a.political_leaning,
        ];
        v.extend(&a.racial_composition);
        v.extend(a.scenes_vector.iter().map(|x| x / norm));
        v.extend(&a.venue_type_distribution);
        v
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Preference weights of every region for every archetype: a Gaussian kernel
/// on the embedding distance, with bandwidth set by the typical distance of
/// a region to its nearest centroid.
fn preference_weights(embeddings: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nearest: Vec<f64> = embeddings
        .iter()
        .map(|e| centroids.iter().map(|c| sq_dist(e, c)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut sorted = nearest.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(1.0);
    let bandwidth = (4.0 * median).max(1e-9);
    centroids
        .iter()
        .map(|c| {
            embeddings
                .iter()
                .map(|e| (-sq_dist(e, c) / bandwidth).exp().max(1e-12))
                .collect()
        })
        .collect()
}

fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..1.0) * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Picks farthest-point anchors among a level's regions; used as archetype
/// centroids when reviews are synthesized for an existing table.
pub fn anchor_centroids(table: &RegionTable, n_archetypes: usize) -> Result<ArchetypeCentroids> {
    let pick = |level: Level| -> Result<Vec<Vec<f64>>> {
        let attrs: Vec<&RegionAttributes> = table.at_level(level).map(|r| &r.attributes).collect();
        if attrs.len() < n_archetypes {
            return Err(Error::Config(format!(
                "{} archetypes requested but only {} {} regions",
                n_archetypes,
                attrs.len(),
                level
            )));
        }
        let norm = EmbeddingNorm::fit(attrs.iter().copied());
        let emb: Vec<Vec<f64>> = attrs.iter().map(|a| norm.embed(a)).collect();
        let mut chosen = vec![0usize];
        while chosen.len() < n_archetypes {
            let next = (0..emb.len())
                .max_by(|&i, &j| {
                    let di = chosen.iter().map(|&c| sq_dist(&emb[i], &emb[c])).fold(f64::INFINITY, f64::min);
                    let dj = chosen.iter().map(|&c| sq_dist(&emb[j], &emb[c])).fold(f64::INFINITY, f64::min);
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("non-empty");
            chosen.push(next);
        }
        Ok(chosen.into_iter().map(|i| emb[i].clone()).collect())
    };
    Ok(ArchetypeCentroids {
        city: pick(Level::City)?,
        neighborhood: pick(Level::Neighborhood)?,
    })
}

/// Draws a review log over an existing table. Returns the log and each
/// user's archetype.
pub fn synthesize_reviews(
    table: &RegionTable,
    centroids: &ArchetypeCentroids,
    spec: &SyntheticSpec,
) -> Result<(ReviewLog, BTreeMap<String, usize>)> {
    let n_arch = centroids.city.len();
    if n_arch == 0 || centroids.neighborhood.len() != n_arch {
        return Err(Error::Config("centroid sets must be non-empty and of equal size".into()));
    }
    let cities: Vec<&RegionRecord> = table.at_level(Level::City).collect();
    if cities.len() < spec.min_cities_per_user {
        return Err(Error::Config(format!(
            "table has {} cities, users must visit {}",
            cities.len(),
            spec.min_cities_per_user
        )));
    }
    let city_norm = EmbeddingNorm::fit(cities.iter().map(|r| &r.attributes));
    let city_emb: Vec<Vec<f64>> = cities.iter().map(|r| city_norm.embed(&r.attributes)).collect();
    let city_pref = preference_weights(&city_emb, &centroids.city);

    let zips: Vec<&RegionRecord> = table.at_level(Level::Neighborhood).collect();
    let zip_norm = EmbeddingNorm::fit(zips.iter().map(|r| &r.attributes));
    let zip_emb: Vec<Vec<f64>> = zips.iter().map(|r| zip_norm.embed(&r.attributes)).collect();
    let zip_pref = preference_weights(&zip_emb, &centroids.neighborhood);
    let city_pos: BTreeMap<&str, usize> = cities.iter().enumerate().map(|(i, r)| (r.id.code(), i)).collect();
    let mut zips_of_city: Vec<Vec<usize>> = vec![Vec::new(); cities.len()];
    for (z, r) in zips.iter().enumerate() {
        if let Some(&c) = city_pos.get(r.id.city_code()) {
            zips_of_city[c].push(z);
        }
    }
    if let Some(c) = zips_of_city.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("city `{}` has no neighborhoods", cities[c].id.code())));
    }

    // users get their own stream so the region draws above never shift them
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed ^ 0x5eed_0f05_e75e);
    let noise = spec.noise_rate;
    let width = spec.n_users.to_string().len().max(4);
    let mut events = Vec::new();
    let mut archetypes = BTreeMap::new();

    for u in 0..spec.n_users {
        let user = format!("u{u:0width$}");
        let arch = u % n_arch;
        archetypes.insert(user.clone(), arch);

        let [lo, hi] = spec.reviews_per_user_range;
        let n_reviews = rng.random_range(lo..=hi);
        let n_visit = (spec.min_cities_per_user + rng.random_range(0..=EXTRA_CITIES))
            .min(n_reviews)
            .min(cities.len());
        let n_fav = rng.random_range(FAVOURITES.0..=FAVOURITES.1).min(n_visit);

        let mut available = vec![true; cities.len()];
        let mut favourites = Vec::with_capacity(n_fav);
        for _ in 0..n_fav {
            let by_pref = !rng.random_bool(noise);
            let weights: Vec<f64> = (0..cities.len())
                .map(|c| match (available[c], by_pref) {
                    (false, _) => 0.0,
                    (true, true) => city_pref[arch][c],
                    (true, false) => 1.0,
                })
                .collect();
            let c = weighted_pick(&mut rng, &weights);
            available[c] = false;
            favourites.push(c);
        }
        let mut itinerary = favourites.clone();
        while itinerary.len() < n_visit {
            let weights: Vec<f64> = available.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
            let c = weighted_pick(&mut rng, &weights);
            available[c] = false;
            itinerary.push(c);
        }

        let pick_zip = |rng: &mut ChaCha8Rng, city: usize| -> usize {
            let members = &zips_of_city[city];
            if rng.random_bool(noise) {
                members[rng.random_range(0..members.len())]
            } else {
                let w: Vec<f64> = members.iter().map(|&z| zip_pref[arch][z]).collect();
                members[weighted_pick(rng, &w)]
            }
        };
        let mut placed: Vec<usize> = itinerary.iter().map(|&c| pick_zip(&mut rng, c)).collect();
        for _ in itinerary.len()..n_reviews {
            let z = if rng.random_bool(noise) {
                rng.random_range(0..zips.len())
            } else {
                let fav = favourites[rng.random_range(0..favourites.len())];
                pick_zip(&mut rng, fav)
            };
            placed.push(z);
        }
        let mut t = BASE_TIMESTAMP + rng.random_range(0..86_400 * 365);
        for z in placed {
            t += rng.random_range(600..86_400 * 3);
            events.push(ReviewEvent {
                user_id: user.clone(),
                neighborhood: zips[z].id.clone(),
                timestamp: Some(t),
            });
        }
    }
    Ok((ReviewLog::new(events), archetypes))
}

/// Generates a region table, registry, review log and ground truth from `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let centroids = make_centroids(&mut rng, spec.n_archetypes);

    let mut records = Vec::new();
    let mut city_clusters = BTreeMap::new();
    let mut neighborhood_clusters = BTreeMap::new();
    let mut city_attrs = Vec::with_capacity(spec.n_cities);
    for c in 0..spec.n_cities {
        let cluster = c % spec.n_archetypes;
        let code = format!("{}", 10_000 + 20 * c);
        let attributes = city_attributes(&mut rng, &centroids[cluster]);
        city_attrs.push(attributes.clone());
        city_clusters.insert(code.clone(), cluster);
        records.push(RegionRecord {
            id: RegionId::city(code)?,
            name: format!("Synth City {c:02}"),
            description: format!("Synthetic city {c} generated around archetype {cluster}."),
            image_url: None,
            total_reviews: 0,
            attributes,
        });
    }
    for c in 0..spec.n_cities {
        let city_code = format!("{}", 10_000 + 20 * c);
        for j in 0..spec.n_neighborhoods_per_city {
            let cluster = (c + j) % spec.n_archetypes;
            let zip = format!("{:05}", 1 + c * spec.n_neighborhoods_per_city + j);
            let attributes =
                neighborhood_attributes(&mut rng, &centroids[cluster], &city_attrs[c], spec.n_neighborhoods_per_city);
            neighborhood_clusters.insert(zip.clone(), cluster);
            records.push(RegionRecord {
                id: RegionId::neighborhood(zip, city_code.clone())?,
                name: format!("Synth City {c:02} / District {j}"),
                description: String::new(),
                image_url: None,
                total_reviews: 0,
                attributes,
            });
        }
    }
    let table = RegionTable::new(schema(), records)?;

    let city_norm = EmbeddingNorm::fit(table.at_level(Level::City).map(|r| &r.attributes));
    let zip_norm = EmbeddingNorm::fit(table.at_level(Level::Neighborhood).map(|r| &r.attributes));
    let centroid_attrs = |c: &Centroid, log_pop: f64| RegionAttributes {
        population: log_pop.exp(),
        median_income: c.log_income.exp(),
        education_rate: c.education,
        employment_rate: c.employment,
        racial_composition: c.race.clone(),
        political_leaning: c.politics,
        scenes_vector: c.scenes.clone(),
        venue_type_distribution: c.venues.clone(),
        centroid_lat: 0.0,
        centroid_lon: 0.0,
    };
    let planted = ArchetypeCentroids {
        city: centroids.iter().map(|c| city_norm.embed(&centroid_attrs(c, c.log_pop))).collect(),
        neighborhood: centroids
            .iter()
            .map(|c| zip_norm.embed(&centroid_attrs(c, c.log_pop - (40.0f64).ln())))
            .collect(),
    };
    let (log, user_archetypes) = synthesize_reviews(&table, &planted, spec)?;
    let table = table.with_review_counts(&log);
    let registry = DimensionRegistry::from_table(&table, false);
    Ok(SyntheticData {
        table,
        registry,
        log,
        user_archetypes,
        city_clusters,
        neighborhood_clusters,
    })
}
