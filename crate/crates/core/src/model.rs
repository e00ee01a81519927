//! Shared domain types: region identifiers and records, the similarity
//! dimension registry, and engine configuration.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::LimeConfig;
use crate::gbdt::GbdtParams;
use crate::simfeat::haversine_km;

/// Tolerance used when checking that a probability vector sums to one.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// Upper bound on labeled cities in one city-stage request.
pub const MAX_CITY_LABELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    City,
    Neighborhood,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::City => "city",
            Level::Neighborhood => "neighborhood",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "city" | "cbsa" => Ok(Level::City),
            "neighborhood" | "zip" => Ok(Level::Neighborhood),
            other => Err(Error::Validation(format!("unknown level `{other}`"))),
        }
    }
}

/// Identifies a city (CBSA code) or a neighborhood (ZIP code, with its city).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawRegionId")]
pub struct RegionId {
    level: Level,
    code: String,
    parent_city: Option<String>,
}

#[derive(Deserialize)]
struct RawRegionId {
    level: Level,
    code: String,
    parent_city: Option<String>,
}

impl TryFrom<RawRegionId> for RegionId {
    type Error = Error;

    fn try_from(raw: RawRegionId) -> Result<Self> {
        match (raw.level, raw.parent_city) {
            (Level::City, None) => RegionId::city(raw.code),
            (Level::Neighborhood, Some(parent)) => RegionId::neighborhood(raw.code, parent),
            (Level::City, Some(_)) => Err(Error::Validation(format!(
                "city `{}` must not have a parent city",
                raw.code
            ))),
            (Level::Neighborhood, None) => Err(Error::Validation(format!(
                "neighborhood `{}` requires a parent city",
                raw.code
            ))),
        }
    }
}

impl RegionId {
    pub fn city(code: impl Into<String>) -> Result<Self> {
        let code = non_empty(code.into(), "city code")?;
        Ok(Self {
            level: Level::City,
            code,
            parent_city: None,
        })
    }

    pub fn neighborhood(code: impl Into<String>, parent_city: impl Into<String>) -> Result<Self> {
        let code = non_empty(code.into(), "neighborhood code")?;
        let parent = non_empty(parent_city.into(), "parent city")?;
        Ok(Self {
            level: Level::Neighborhood,
            code,
            parent_city: Some(parent),
        })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn parent_city(&self) -> Option<&str> {
        self.parent_city.as_deref()
    }

    /// The city this region belongs to: itself for cities, the parent otherwise.
    pub fn city_code(&self) -> &str {
        self.parent_city.as_deref().unwrap_or(&self.code)
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.parent_city {
            Some(parent) => write!(f, "{}/{}", parent, self.code),
            None => f.write_str(&self.code),
        }
    }
}

fn non_empty(s: String, what: &str) -> Result<String> {
    let trimmed = s.trim();
    if trimmed.is_empty() {
        return Err(Error::Validation(format!("{what} must be non-empty")));
    }
    if trimmed.len() == s.len() {
        Ok(s)
    } else {
        Ok(trimmed.to_string())
    }
}

/// Column layout shared by every record of a region table: the racial
/// categories, scene dimensions and venue categories declared in its header.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub race_categories: Vec<String>,
    pub scene_dims: Vec<String>,
    pub venue_categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAttributes {
    pub population: f64,
    pub median_income: f64,
    pub education_rate: f64,
    pub employment_rate: f64,
    pub racial_composition: Vec<f64>,
    pub political_leaning: f64,
    pub scenes_vector: Vec<f64>,
    pub venue_type_distribution: Vec<f64>,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
}

impl RegionAttributes {
    /// Checks every attribute invariant against the table layout. The error
    /// message names the offending field.
    pub fn validate(&self, schema: &TableSchema) -> Result<(), InvalidAttribute> {
        let scalars = [
            ("population", self.population),
            ("median_income", self.median_income),
            ("education_rate", self.education_rate),
            ("employment_rate", self.employment_rate),
            ("political_leaning", self.political_leaning),
            ("centroid_lat", self.centroid_lat),
            ("centroid_lon", self.centroid_lon),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(InvalidAttribute::new(name, "value is not finite"));
            }
        }
        if self.population < 0.0 {
            return Err(InvalidAttribute::new("population", "must be non-negative"));
        }
        if self.median_income < 0.0 {
            return Err(InvalidAttribute::new("median_income", "must be non-negative"));
        }
        for (name, v) in [
            ("education_rate", self.education_rate),
            ("employment_rate", self.employment_rate),
            ("political_leaning", self.political_leaning),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(InvalidAttribute::new(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(-90.0..=90.0).contains(&self.centroid_lat) {
            return Err(InvalidAttribute::new(
                "centroid_lat",
                format!("{} outside [-90, 90]", self.centroid_lat),
            ));
        }
        if !(-180.0..=180.0).contains(&self.centroid_lon) {
            return Err(InvalidAttribute::new(
                "centroid_lon",
                format!("{} outside [-180, 180]", self.centroid_lon),
            ));
        }
        check_distribution(
            "racial_composition",
            &self.racial_composition,
            schema.race_categories.len(),
        )?;
        check_distribution(
            "venue_type_distribution",
            &self.venue_type_distribution,
            schema.venue_categories.len(),
        )?;
        if self.scenes_vector.len() != schema.scene_dims.len() {
            return Err(InvalidAttribute::new(
                "scenes_vector",
                format!(
                    "has {} entries, table declares {}",
                    self.scenes_vector.len(),
                    schema.scene_dims.len()
                ),
            ));
        }
        if self.scenes_vector.iter().any(|v| !v.is_finite()) {
            return Err(InvalidAttribute::new("scenes_vector", "contains a non-finite entry"));
        }
        Ok(())
    }
}

fn check_distribution(
    name: &'static str,
    values: &[f64],
    expected_len: usize,
) -> Result<(), InvalidAttribute> {
    if values.len() != expected_len {
        return Err(InvalidAttribute::new(
            name,
            format!("has {} entries, table declares {expected_len}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(InvalidAttribute::new(name, "entries must be finite and non-negative"));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(InvalidAttribute::new(name, format!("sums to {total}, expected 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidAttribute {
    pub field: &'static str,
    pub message: String,
}

impl InvalidAttribute {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for InvalidAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub id: RegionId,
    pub name: String,
    pub description: String,
    pub image_url: Option<String>,
    pub total_reviews: u64,
    pub attributes: RegionAttributes,
}

/// An immutable, validated collection of region records.
#[derive(Debug, Clone)]
pub struct RegionTable {
    schema: TableSchema,
    records: Vec<RegionRecord>,
    index: HashMap<(Level, String), usize>,
}

impl RegionTable {
    /// Validates attributes, code uniqueness and parent references.
    pub fn new(schema: TableSchema, records: Vec<RegionRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            rec.attributes.validate(&schema).map_err(|msg| {
                Error::Validation(format!("region `{}` (record {}): {msg}", rec.id, i + 1))
            })?;
            let key = (rec.id.level(), rec.id.code().to_string());
            if index.insert(key, i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate {} code `{}`",
                    rec.id.level(),
                    rec.id.code()
                )));
            }
        }
        for rec in &records {
            if let Some(parent) = rec.id.parent_city() {
                if !index.contains_key(&(Level::City, parent.to_string())) {
                    return Err(Error::Referential {
                        what: "parent city",
                        code: parent.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            schema,
            records,
            index,
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn records(&self) -> &[RegionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &RegionId) -> Option<&RegionRecord> {
        self.lookup(id.level(), id.code())
    }

    pub fn lookup(&self, level: Level, code: &str) -> Option<&RegionRecord> {
        self.index
            .get(&(level, code.to_string()))
            .map(|&i| &self.records[i])
    }

    pub fn at_level(&self, level: Level) -> impl Iterator<Item = &RegionRecord> {
        self.records.iter().filter(move |r| r.id.level() == level)
    }

    pub fn count_at_level(&self, level: Level) -> usize {
        self.at_level(level).count()
    }

    pub fn neighborhoods_of<'a>(&'a self, city: &'a str) -> impl Iterator<Item = &'a RegionRecord> {
        self.records
            .iter()
            .filter(move |r| r.id.parent_city() == Some(city))
    }

    /// Returns a copy whose `total_reviews` counts come from `log`: one per
    /// event for its neighborhood and one per event for the parent city.
    pub fn with_review_counts(&self, log: &crate::ingest::ReviewLog) -> Self {
        let mut counts: HashMap<(Level, &str), u64> = HashMap::new();
        for ev in log.events() {
            *counts
                .entry((Level::Neighborhood, ev.neighborhood.code()))
                .or_default() += 1;
            *counts
                .entry((Level::City, ev.neighborhood.city_code()))
                .or_default() += 1;
        }
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.total_reviews = counts
                    .get(&(r.id.level(), r.id.code()))
                    .copied()
                    .unwrap_or(0);
                r
            })
            .collect();
        Self {
            schema: self.schema.clone(),
            records,
            index: self.index.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimensionKind {
    Geodesic,
    ScalarLog,
    ScalarAbs,
    Distribution,
    Vector,
}

/// The similarity dimensions, in feature-layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim {
    Geo,
    Population,
    Income,
    Education,
    Race,
    Politics,
    Scenes,
    Venues,
    Employment,
}

impl Dim {
    pub const CANONICAL: [Dim; 8] = [
        Dim::Geo,
        Dim::Population,
        Dim::Income,
        Dim::Education,
        Dim::Race,
        Dim::Politics,
        Dim::Scenes,
        Dim::Venues,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dim::Geo => "geo",
            Dim::Population => "population",
            Dim::Income => "income",
            Dim::Education => "education",
            Dim::Race => "race",
            Dim::Politics => "politics",
            Dim::Scenes => "scenes",
            Dim::Venues => "venues",
            Dim::Employment => "employment",
        }
    }

    pub fn kind(self) -> DimensionKind {
        match self {
            Dim::Geo => DimensionKind::Geodesic,
            Dim::Population | Dim::Income => DimensionKind::ScalarLog,
            Dim::Education | Dim::Politics | Dim::Employment => DimensionKind::ScalarAbs,
            Dim::Race | Dim::Venues => DimensionKind::Distribution,
            Dim::Scenes => DimensionKind::Vector,
        }
    }

    pub fn from_name(name: &str) -> Option<Dim> {
        Dim::CANONICAL
            .iter()
            .copied()
            .chain(std::iter::once(Dim::Employment))
            .find(|d| d.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub dim: Dim,
    pub kind: DimensionKind,
    /// Divisor applied to raw distances; 1.0 for kinds that are already bounded.
    pub scale: f64,
}

impl Dimension {
    pub fn new(dim: Dim, scale: f64) -> Self {
        Self {
            dim,
            kind: dim.kind(),
            scale,
        }
    }

    pub fn name(&self) -> &'static str {
        self.dim.name()
    }

    /// Largest value `dimension_distance` can take for this dimension.
    pub fn max_distance(&self) -> f64 {
        match self.kind {
            DimensionKind::Vector => 2.0,
            _ => 1.0,
        }
    }
}

/// Ordered similarity dimensions with per-table normalization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct DimensionRegistry {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for DimensionRegistry {
    type Error = Error;

    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        DimensionRegistry::new(dims)
    }
}

impl From<DimensionRegistry> for Vec<Dimension> {
    fn from(r: DimensionRegistry) -> Self {
        r.dims
    }
}

impl DimensionRegistry {
    /// Accepts the eight canonical dimensions in order, optionally followed by
    /// employment. Any other order or kind is rejected.
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let expected_len = match dims.len() {
            8 => 8,
            9 if dims[8].dim == Dim::Employment => 9,
            n => {
                return Err(Error::Config(format!(
                    "registry needs 8 dimensions (or 9 with employment), got {n}"
                )))
            }
        };
        for (i, d) in dims.iter().take(8).enumerate() {
            if d.dim != Dim::CANONICAL[i] {
                return Err(Error::Config(format!(
                    "dimension {} must be `{}`, found `{}`",
                    i,
                    Dim::CANONICAL[i].name(),
                    d.name()
                )));
            }
        }
        for d in &dims[..expected_len] {
            if d.kind != d.dim.kind() {
                return Err(Error::Config(format!(
                    "dimension `{}` has kind {:?}, expected {:?}",
                    d.name(),
                    d.kind,
                    d.dim.kind()
                )));
            }
            if !(d.scale.is_finite() && d.scale > 0.0) {
                return Err(Error::Config(format!(
                    "dimension `{}` has non-positive scale {}",
                    d.name(),
                    d.scale
                )));
            }
        }
        Ok(Self { dims })
    }

    /// Unit-scaled registry; handy for tests that compute distances by hand.
    pub fn unit(include_employment: bool) -> Self {
        let mut dims: Vec<Dimension> = Dim::CANONICAL.iter().map(|&d| Dimension::new(d, 1.0)).collect();
        if include_employment {
            dims.push(Dimension::new(Dim::Employment, 1.0));
        }
        Self { dims }
    }

    /// Computes normalization constants from the table: the largest pairwise
    /// great-circle distance for geo and the log1p range for population and
    /// income. Degenerate (zero) ranges fall back to 1.
    pub fn from_table(table: &RegionTable, include_employment: bool) -> Self {
        let recs = table.records();
        let mut max_km: f64 = 0.0;
        for (i, a) in recs.iter().enumerate() {
            for b in &recs[i + 1..] {
                let d = haversine_km(
                    (a.attributes.centroid_lat, a.attributes.centroid_lon),
                    (b.attributes.centroid_lat, b.attributes.centroid_lon),
                )
                .unwrap_or(0.0);
                max_km = max_km.max(d);
            }
        }
        let log_range = |f: fn(&RegionAttributes) -> f64| -> f64 {
            let (lo, hi) = recs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                let v = f(&r.attributes).ln_1p();
                (lo.min(v), hi.max(v))
            });
            hi - lo
        };
        let positive = |x: f64| if x.is_finite() && x > 0.0 { x } else { 1.0 };
        let pop_range = log_range(|a| a.population);
        let income_range = log_range(|a| a.median_income);

        let mut dims: Vec<Dimension> = Dim::CANONICAL
            .iter()
            .map(|&d| {
                let scale = match d {
                    Dim::Geo => positive(max_km),
                    Dim::Population => positive(pop_range),
                    Dim::Income => positive(income_range),
                    _ => 1.0,
                };
                Dimension::new(d, scale)
            })
            .collect();
        if include_employment {
            dims.push(Dimension::new(Dim::Employment, 1.0));
        }
        Self { dims }
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.dims.len() * 2
    }

    pub fn includes_employment(&self) -> bool {
        self.dims.len() == 9
    }
}

/// Feature names in layout order: `<dim>_to_top`, `<dim>_to_bottom` per dimension.
pub fn feature_names(registry: &DimensionRegistry) -> Vec<String> {
    registry
        .dims()
        .iter()
        .flat_map(|d| [format!("{}_to_top", d.name()), format!("{}_to_bottom", d.name())])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Dense-rank cutoff for a user's top cities.
    pub k: usize,
    /// Dense-rank cutoff for top neighborhoods inside the top-k cities.
    pub m: usize,
    pub min_cbsas_per_user: usize,
    pub n_city_recs: usize,
    pub n_neighborhood_recs: usize,
    pub n_popular_cities: usize,
    pub n_popular_neighborhoods: usize,
    pub train_fraction: f64,
    pub rng_seed: u64,
    pub include_employment: bool,
    /// Probability at or above which the classifier predicts "high interest".
    pub decision_threshold: f64,
    pub gbdt: GbdtParams,
    pub lime: LimeConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: 2,
            m: 3,
            min_cbsas_per_user: 6,
            n_city_recs: 3,
            n_neighborhood_recs: 3,
            n_popular_cities: 25,
            n_popular_neighborhoods: 10,
            train_fraction: 0.8,
            rng_seed: 7,
            include_employment: false,
            decision_threshold: 0.5,
            gbdt: GbdtParams::default(),
            lime: LimeConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.m < 1 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.min_cbsas_per_user < 1 {
            return Err(Error::Config("min_cbsas_per_user must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::Config("decision_threshold must lie in (0, 1)".into()));
        }
        for (name, v) in [
            ("n_city_recs", self.n_city_recs),
            ("n_neighborhood_recs", self.n_neighborhood_recs),
            ("n_popular_cities", self.n_popular_cities),
            ("n_popular_neighborhoods", self.n_popular_neighborhoods),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.gbdt.validate()?;
        self.lime.validate()?;
        Ok(())
    }
}
