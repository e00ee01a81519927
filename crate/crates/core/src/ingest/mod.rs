//! Region tables and review logs: CSV loading, validation, writing, and the
//! multi-city tourist filter.
//!
//! Region table columns (header row required):
//!
//! ```text
//! level, code, parent_city, name, description, image_url, population,
//! median_income, education_rate, employment_rate, political_leaning,
//! centroid_lat, centroid_lon, [total_reviews], race:<cat>..., scene:<dim>..., venue:<cat>...
//! ```
//!
//! Review log columns: `user_id, zip, timestamp` (timestamp may be blank).

mod synthetic;

pub use synthetic::{
    anchor_centroids, generate_synthetic, synthesize_reviews, ArchetypeCentroids, SyntheticData, SyntheticSpec,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    DimensionRegistry, Level, RegionAttributes, RegionId, RegionRecord, RegionTable, TableSchema,
};

pub const REGIONS_FILE: &str = "regions.csv";
pub const REVIEWS_FILE: &str = "reviews.csv";

const FIXED_COLUMNS: [&str; 13] = [
    "level",
    "code",
    "parent_city",
    "name",
    "description",
    "image_url",
    "population",
    "median_income",
    "education_rate",
    "employment_rate",
    "political_leaning",
    "centroid_lat",
    "centroid_lon",
];
const TOTAL_REVIEWS: &str = "total_reviews";
const RACE_PREFIX: &str = "race:";
const SCENE_PREFIX: &str = "scene:";
const VENUE_PREFIX: &str = "venue:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub user_id: String,
    pub neighborhood: RegionId,
    pub timestamp: Option<i64>,
}

/// Review events plus a per-user index into them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewLog {
    events: Vec<ReviewEvent>,
    user_index: BTreeMap<String, Vec<usize>>,
}

impl ReviewLog {
    pub fn new(events: Vec<ReviewEvent>) -> Self {
        let mut user_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, ev) in events.iter().enumerate() {
            user_index.entry(ev.user_id.clone()).or_default().push(i);
        }
        Self { events, user_index }
    }

    /// Builds a log after checking every event against the region table.
    pub fn validated(events: Vec<ReviewEvent>, table: &RegionTable) -> Result<Self> {
        for ev in &events {
            check_event(ev, table)?;
        }
        Ok(Self::new(events))
    }

    pub fn events(&self) -> &[ReviewEvent] {
        &self.events
    }

    pub fn user_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.user_index
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.user_index.keys().map(String::as_str)
    }

    pub fn user_count(&self) -> usize {
        self.user_index.len()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events_of<'a>(&'a self, user: &str) -> impl Iterator<Item = &'a ReviewEvent> + 'a {
        self.user_index
            .get(user)
            .into_iter()
            .flatten()
            .map(move |&i| &self.events[i])
    }
}

fn check_event(ev: &ReviewEvent, table: &RegionTable) -> Result<()> {
    let known = table
        .get(&ev.neighborhood)
        .is_some_and(|r| r.id.parent_city() == ev.neighborhood.parent_city());
    if !known {
        return Err(Error::Referential {
            what: "neighborhood",
            code: ev.neighborhood.code().to_string(),
        });
    }
    Ok(())
}

/// Keeps only users whose events span at least `min_cbsas` distinct cities.
/// Event order is preserved.
pub fn filter_tourists(log: &ReviewLog, min_cbsas: usize) -> ReviewLog {
    let keep: BTreeSet<&str> = log
        .user_index
        .iter()
        .filter(|(_, idx)| {
            let cities: BTreeSet<&str> = idx
                .iter()
                .map(|&i| log.events[i].neighborhood.city_code())
                .collect();
            cities.len() >= min_cbsas
        })
        .map(|(u, _)| u.as_str())
        .collect();
    let events = log
        .events
        .iter()
        .filter(|ev| keep.contains(ev.user_id.as_str()))
        .cloned()
        .collect();
    ReviewLog::new(events)
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

struct RowParser<'a> {
    path: &'a Path,
    row: usize,
    record: &'a csv::StringRecord,
}

impl RowParser<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.to_path_buf(),
            row: self.row,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn text(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("").trim()
    }

    fn number(&self, col: usize, field: &str) -> Result<f64> {
        let raw = self.text(col);
        let v: f64 = raw
            .parse()
            .map_err(|_| self.err(field, format!("expected a number, found `{raw}`")))?;
        if !v.is_finite() {
            return Err(self.err(field, "value is not finite"));
        }
        Ok(v)
    }
}

struct RegionHeader {
    fixed: [usize; 13],
    total_reviews: Option<usize>,
    race: Vec<usize>,
    scenes: Vec<usize>,
    venues: Vec<usize>,
    schema: TableSchema,
}

fn parse_region_header(path: &Path, header: &csv::StringRecord) -> Result<RegionHeader> {
    let bad = |field: &str, message: String| Error::Malformed {
        path: path.to_path_buf(),
        row: 1,
        field: field.to_string(),
        message,
    };
    let mut positions: HashMap<&str, usize> = HashMap::new();
    let mut total_reviews = None;
    let mut schema = TableSchema::default();
    let (mut race, mut scenes, mut venues) = (Vec::new(), Vec::new(), Vec::new());
    for (i, name) in header.iter().enumerate() {
        let name = name.trim();
        if let Some(cat) = name.strip_prefix(RACE_PREFIX) {
            schema.race_categories.push(cat.to_string());
            race.push(i);
        } else if let Some(dim) = name.strip_prefix(SCENE_PREFIX) {
            schema.scene_dims.push(dim.to_string());
            scenes.push(i);
        } else if let Some(cat) = name.strip_prefix(VENUE_PREFIX) {
            schema.venue_categories.push(cat.to_string());
            venues.push(i);
        } else if name == TOTAL_REVIEWS {
            total_reviews = Some(i);
        } else if let Some(&fixed) = FIXED_COLUMNS.iter().find(|c| **c == name) {
            if positions.insert(fixed, i).is_some() {
                return Err(bad(name, "duplicate column".into()));
            }
        } else {
            return Err(bad(name, "unknown column".into()));
        }
    }
    let mut fixed = [0usize; 13];
    for (slot, col) in fixed.iter_mut().zip(FIXED_COLUMNS) {
        *slot = *positions
            .get(col)
            .ok_or_else(|| bad(col, "required column is missing".into()))?;
    }
    if race.is_empty() || venues.is_empty() {
        return Err(bad(
            "header",
            "at least one race:<category> and one venue:<category> column is required".into(),
        ));
    }
    Ok(RegionHeader {
        fixed,
        total_reviews,
        race,
        scenes,
        venues,
        schema,
    })
}

fn parse_region_row(p: &RowParser<'_>, h: &RegionHeader) -> Result<RegionRecord> {
    let f = &h.fixed;
    let level: Level = p.text(f[0]).parse().map_err(|_| {
        p.err("level", format!("expected `city` or `neighborhood`, found `{}`", p.text(f[0])))
    })?;
    let code = p.text(f[1]);
    let parent = p.text(f[2]);
    let id = match level {
        Level::City if !parent.is_empty() => {
            return Err(p.err("parent_city", "cities must leave parent_city blank"))
        }
        Level::City => RegionId::city(code),
        Level::Neighborhood if parent.is_empty() => {
            return Err(p.err("parent_city", "neighborhoods require a parent city"))
        }
        Level::Neighborhood => RegionId::neighborhood(code, parent),
    }
    .map_err(|e| p.err("code", e.to_string()))?;

    let image_url = Some(p.text(f[5]).to_string()).filter(|s| !s.is_empty());
    let total_reviews = match h.total_reviews {
        Some(col) if !p.text(col).is_empty() => p
            .text(col)
            .parse::<u64>()
            .map_err(|_| p.err(TOTAL_REVIEWS, "expected a non-negative integer"))?,
        _ => 0,
    };
    let collect = |cols: &[usize], names: &[String], prefix: &str| -> Result<Vec<f64>> {
        cols.iter()
            .zip(names)
            .map(|(&c, n)| p.number(c, &format!("{prefix}{n}")))
            .collect()
    };
    let attributes = RegionAttributes {
        population: p.number(f[6], "population")?,
        median_income: p.number(f[7], "median_income")?,
        education_rate: p.number(f[8], "education_rate")?,
        employment_rate: p.number(f[9], "employment_rate")?,
        political_leaning: p.number(f[10], "political_leaning")?,
        centroid_lat: p.number(f[11], "centroid_lat")?,
        centroid_lon: p.number(f[12], "centroid_lon")?,
        racial_composition: collect(&h.race, &h.schema.race_categories, RACE_PREFIX)?,
        scenes_vector: collect(&h.scenes, &h.schema.scene_dims, SCENE_PREFIX)?,
        venue_type_distribution: collect(&h.venues, &h.schema.venue_categories, VENUE_PREFIX)?,
    };
    attributes
        .validate(&h.schema)
        .map_err(|bad| p.err(bad.field, bad.message))?;
    Ok(RegionRecord {
        id,
        name: p.text(f[3]).to_string(),
        description: p.text(f[4]).to_string(),
        image_url,
        total_reviews,
        attributes,
    })
}

/// Parses a region table from CSV text. `path` is only used in error messages.
pub fn parse_regions(text: &str, path: &Path) -> Result<RegionTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let h = parse_region_header(path, &header)?;
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            row,
            field: "row".into(),
            message: e.to_string(),
        })?;
        let parser = RowParser {
            path,
            row,
            record: &rec,
        };
        records.push(parse_region_row(&parser, &h)?);
    }
    RegionTable::new(h.schema, records)
}

/// Loads a region table and derives its dimension registry. Row numbers in
/// errors count the header as row 1.
pub fn load_regions(path: &Path, include_employment: bool) -> Result<(RegionTable, DimensionRegistry)> {
    let table = parse_regions(&read_file(path)?, path)?;
    let registry = DimensionRegistry::from_table(&table, include_employment);
    Ok((table, registry))
}

pub fn regions_to_csv(table: &RegionTable) -> Result<String> {
    let schema = table.schema();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.push(TOTAL_REVIEWS.to_string());
    header.extend(schema.race_categories.iter().map(|c| format!("{RACE_PREFIX}{c}")));
    header.extend(schema.scene_dims.iter().map(|c| format!("{SCENE_PREFIX}{c}")));
    header.extend(schema.venue_categories.iter().map(|c| format!("{VENUE_PREFIX}{c}")));
    w.write_record(&header)?;
    for r in table.records() {
        let a = &r.attributes;
        let mut row = vec![
            r.id.level().to_string(),
            r.id.code().to_string(),
            r.id.parent_city().unwrap_or("").to_string(),
            r.name.clone(),
            r.description.clone(),
            r.image_url.clone().unwrap_or_default(),
            a.population.to_string(),
            a.median_income.to_string(),
            a.education_rate.to_string(),
            a.employment_rate.to_string(),
            a.political_leaning.to_string(),
            a.centroid_lat.to_string(),
            a.centroid_lon.to_string(),
            r.total_reviews.to_string(),
        ];
        row.extend(a.racial_composition.iter().map(f64::to_string));
        row.extend(a.scenes_vector.iter().map(f64::to_string));
        row.extend(a.venue_type_distribution.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    finish_csv(w)
}

pub fn write_regions(table: &RegionTable, path: &Path) -> Result<()> {
    write_file(path, &regions_to_csv(table)?)
}

/// Parses a review log, resolving each ZIP against the region table.
pub fn parse_reviews(text: &str, path: &Path, table: &RegionTable) -> Result<ReviewLog> {
    if text.trim().is_empty() {
        return Ok(ReviewLog::default());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let malformed = |row: usize, field: &str, message: String| Error::Malformed {
        path: path.to_path_buf(),
        row,
        field: field.to_string(),
        message,
    };
    let user_col = col("user_id").ok_or_else(|| malformed(1, "user_id", "missing column".into()))?;
    let zip_col = col("zip").ok_or_else(|| malformed(1, "zip", "missing column".into()))?;
    let ts_col = col("timestamp");

    let mut events = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| malformed(row, "row", e.to_string()))?;
        let user = rec.get(user_col).unwrap_or("").trim();
        if user.is_empty() {
            return Err(malformed(row, "user_id", "empty user id".into()));
        }
        let zip = rec.get(zip_col).unwrap_or("").trim();
        let nb = table
            .lookup(Level::Neighborhood, zip)
            .ok_or_else(|| Error::Referential {
                what: "neighborhood",
                code: zip.to_string(),
            })?;
        let timestamp = match ts_col.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(
                raw.parse::<i64>()
                    .map_err(|_| malformed(row, "timestamp", format!("expected epoch seconds, found `{raw}`")))?,
            ),
        };
        events.push(ReviewEvent {
            user_id: user.to_string(),
            neighborhood: nb.id.clone(),
            timestamp,
        });
    }
    Ok(ReviewLog::new(events))
}

pub fn load_reviews(path: &Path, table: &RegionTable) -> Result<ReviewLog> {
    parse_reviews(&read_file(path)?, path, table)
}

pub fn reviews_to_csv(log: &ReviewLog) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(["user_id", "zip", "timestamp"])?;
    for ev in log.events() {
        let ts = ev.timestamp.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([ev.user_id.as_str(), ev.neighborhood.code(), ts.as_str()])?;
    }
    finish_csv(w)
}

pub fn write_reviews(log: &ReviewLog, path: &Path) -> Result<()> {
    write_file(path, &reviews_to_csv(log)?)
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("flushing csv", e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Validation(format!("csv output is not utf-8: {e}")))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// A loaded data directory: the region table (with review counts attached),
/// its registry and the review log.
#[derive(Debug, Clone)]
pub struct RegionData {
    pub table: RegionTable,
    pub registry: DimensionRegistry,
    pub log: ReviewLog,
}

impl RegionData {
    pub fn new(table: RegionTable, registry: DimensionRegistry, log: ReviewLog) -> Self {
        let table = table.with_review_counts(&log);
        Self { table, registry, log }
    }

    /// Reads `regions.csv` and `reviews.csv` from `dir`.
    pub fn load_dir(dir: &Path, include_employment: bool) -> Result<Self> {
        let (table, registry) = load_regions(&dir.join(REGIONS_FILE), include_employment)?;
        let log = load_reviews(&dir.join(REVIEWS_FILE), &table)?;
        Ok(Self::new(table, registry, log))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let regions = dir.join(REGIONS_FILE);
        let reviews = dir.join(REVIEWS_FILE);
        write_regions(&self.table, &regions)?;
        write_reviews(&self.log, &reviews)?;
        Ok(vec![regions, reviews])
    }
}
