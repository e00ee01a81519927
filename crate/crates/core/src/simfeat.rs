//! Pairwise region dissimilarities and their aggregation into the fixed
//! candidate-vs-top / candidate-vs-bottom feature layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dimension, DimensionKind, DimensionRegistry, Dim, RegionAttributes, RegionRecord};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Fixed-order feature values; every entry is finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Contract(format!(
                "feature {i} is {v}; features must be finite and non-negative"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        FeatureVector::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(f: FeatureVector) -> Self {
        f.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Great-circle distance via the haversine formula. Inputs are
/// `(latitude, longitude)` in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for (lat, lon) in [a, b] {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Domain(format!("coordinate ({lat}, {lon}) out of range")));
        }
    }
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let sin_dlat = ((lat2 - lat1) / 2.0).sin();
    let sin_dlon = ((lon2 - lon1) / 2.0).sin();
    let h = sin_dlat * sin_dlat + lat1.cos() * lat2.cos() * sin_dlon * sin_dlon;
    // rounding can push h a hair above 1 for antipodal points
    let arc = 2.0 * h.clamp(0.0, 1.0).sqrt().asin();
    Ok(EARTH_RADIUS_KM * arc)
}

/// Jensen-Shannon distance (square root of the base-2 divergence), in [0, 1].
pub fn jensen_shannon_distance(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut div = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let mi = 0.5 * (pi + qi);
        let term = |x: f64| if x > 0.0 { 0.5 * x * (x / mi).log2() } else { 0.0 };
        // summed as a pair so that swapping p and q is bit-exact
        div += term(pi) + term(qi);
    }
    div.clamp(0.0, 1.0).sqrt()
}

/// `1 - cos(angle)`; `None` when either vector has zero norm.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Which side of a pairwise comparison carried a degenerate value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// Normalized dissimilarity between two regions along one dimension.
///
/// On a zero-norm scenes vector, returns the side that was degenerate so the
/// caller can name the region.
pub fn dimension_distance(
    dim: &Dimension,
    a: &RegionAttributes,
    b: &RegionAttributes,
) -> std::result::Result<f64, Side> {
    let d = match dim.kind {
        DimensionKind::Geodesic => {
            // attributes are validated on table construction, so coordinates are in range
            let km = haversine_km((a.centroid_lat, a.centroid_lon), (b.centroid_lat, b.centroid_lon))
                .unwrap_or(0.0);
            km / dim.scale
        }
        DimensionKind::ScalarLog => {
            let (x, y) = match dim.dim {
                Dim::Population => (a.population, b.population),
                _ => (a.median_income, b.median_income),
            };
            (x.ln_1p() - y.ln_1p()).abs() / dim.scale
        }
        DimensionKind::ScalarAbs => {
            let (x, y) = match dim.dim {
                Dim::Education => (a.education_rate, b.education_rate),
                Dim::Politics => (a.political_leaning, b.political_leaning),
                _ => (a.employment_rate, b.employment_rate),
            };
            (x - y).abs() / dim.scale
        }
        DimensionKind::Distribution => match dim.dim {
            Dim::Race => jensen_shannon_distance(&a.racial_composition, &b.racial_composition),
            _ => jensen_shannon_distance(&a.venue_type_distribution, &b.venue_type_distribution),
        },
        DimensionKind::Vector => {
            if a.scenes_vector.iter().all(|v| *v == 0.0) {
                return Err(Side::First);
            }
            if b.scenes_vector.iter().all(|v| *v == 0.0) {
                return Err(Side::Second);
            }
            cosine_distance(&a.scenes_vector, &b.scenes_vector).unwrap_or(0.0)
        }
    };
    Ok(d)
}

fn pair_distance(dim: &Dimension, a: &RegionRecord, b: &RegionRecord) -> Result<f64> {
    dimension_distance(dim, &a.attributes, &b.attributes).map_err(|side| {
        let region = match side {
            Side::First => &a.id,
            Side::Second => &b.id,
        };
        Error::Degenerate {
            region: region.to_string(),
            message: "scenes vector has zero norm".into(),
        }
    })
}

/// Builds the feature vector for `candidate`: for each dimension, the mean
/// distance to the top set, then the mean distance to the bottom set (or the
/// dimension's maximum distance when the bottom set is empty).
pub fn aggregate_features(
    candidate: &RegionRecord,
    top: &[&RegionRecord],
    bottom: &[&RegionRecord],
    registry: &DimensionRegistry,
) -> Result<FeatureVector> {
    if top.is_empty() {
        return Err(Error::Contract(format!(
            "cannot featurize `{}` against an empty top set",
            candidate.id
        )));
    }
    let mut values = Vec::with_capacity(registry.feature_count());
    for dim in registry.dims() {
        let mut sum = 0.0;
        for t in top {
            sum += pair_distance(dim, candidate, t)?;
        }
        values.push(sum / top.len() as f64);

        if bottom.is_empty() {
            values.push(dim.max_distance());
        } else {
            let mut sum = 0.0;
            for b in bottom {
                sum += pair_distance(dim, candidate, b)?;
            }
            values.push(sum / bottom.len() as f64);
        }
    }
    FeatureVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RegionId, RegionTable, TableSchema};
    use proptest::prelude::*;

    fn attrs(lat: f64, lon: f64) -> RegionAttributes {
        RegionAttributes {
            population: 1000.0,
            median_income: 40_000.0,
            education_rate: 0.2,
            employment_rate: 0.5,
            racial_composition: vec![1.0, 0.0],
            political_leaning: 0.4,
            scenes_vector: vec![1.0, 0.0],
            venue_type_distribution: vec![0.5, 0.5],
            centroid_lat: lat,
            centroid_lon: lon,
        }
    }

    fn record(code: &str, a: RegionAttributes) -> RegionRecord {
        RegionRecord {
            id: RegionId::city(code).unwrap(),
            name: code.into(),
            description: String::new(),
            image_url: None,
            total_reviews: 0,
            attributes: a,
        }
    }

    /// Spherical law of cosines, coded separately from the haversine path.
    fn law_of_cosines_km(a: (f64, f64), b: (f64, f64)) -> f64 {
        let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
        let dl = (b.1 - a.1).to_radians();
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        6371.0 * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn haversine_identity_and_antipodes() {
        assert_eq!(haversine_km((40.7, -74.0), (40.7, -74.0)).unwrap(), 0.0);
        let d = haversine_km((0.0, 0.0), (0.0, 180.0)).unwrap();
        let expected = std::f64::consts::PI * 6371.0;
        assert!(((d - expected) / expected).abs() < 1e-12, "{d}");
        assert!((d - 20015.1).abs() < 0.1);
    }

    #[test]
    fn haversine_matches_cosine_law_on_city_pair() {
        let nyc = (40.7128, -74.0060);
        let la = (34.0522, -118.2437);
        let d = haversine_km(nyc, la).unwrap();
        let oracle = law_of_cosines_km(nyc, la);
        assert!(((d - oracle) / oracle).abs() < 0.005, "{d} vs {oracle}");
        assert!((3900.0..4000.0).contains(&d));
    }

    #[test]
    fn haversine_rejects_out_of_range() {
        assert!(matches!(haversine_km((91.0, 0.0), (0.0, 0.0)), Err(Error::Domain(_))));
        assert!(haversine_km((0.0, 0.0), (0.0, -180.5)).is_err());
    }

    #[test]
    fn disjoint_distributions_have_unit_js_distance() {
        assert_eq!(jensen_shannon_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(jensen_shannon_distance(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn orthogonal_scenes_have_unit_cosine_distance() {
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_distance(&[0.0, 0.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn identical_attributes_are_zero_in_every_dimension() {
        let a = attrs(40.0, -100.0);
        let reg = DimensionRegistry::unit(true);
        for d in reg.dims() {
            assert_eq!(dimension_distance(d, &a, &a).unwrap(), 0.0, "{}", d.name());
        }
    }

    #[test]
    fn population_log_distance() {
        let mut a = attrs(0.0, 0.0);
        let mut b = attrs(0.0, 0.0);
        a.population = 1000.0;
        b.population = 2000.0;
        let s = 3.5;
        let dim = Dimension::new(Dim::Population, s);
        let expected = ((1000.0f64).ln_1p() - (2000.0f64).ln_1p()).abs() / s;
        assert_eq!(dimension_distance(&dim, &a, &b).unwrap(), expected);
    }

    #[test]
    fn zero_scenes_vector_names_the_region() {
        let mut z = attrs(0.0, 0.0);
        z.scenes_vector = vec![0.0, 0.0];
        let good = record("GOOD", attrs(0.0, 0.0));
        let bad = record("BAD", z);
        let err = aggregate_features(&good, &[&bad], &[], &DimensionRegistry::unit(false)).unwrap_err();
        match err {
            Error::Degenerate { region, .. } => assert_eq!(region, "BAD"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn aggregate_self_top_is_zero_and_empty_bottom_is_sentinel() {
        let c = record("C", attrs(35.0, -90.0));
        let reg = DimensionRegistry::unit(false);
        let fv = aggregate_features(&c, &[&c], &[], &reg).unwrap();
        let v = fv.as_slice();
        assert_eq!(v.len(), 16);
        for (i, d) in reg.dims().iter().enumerate() {
            assert_eq!(v[2 * i], 0.0);
            assert_eq!(v[2 * i + 1], d.max_distance());
        }
        assert!(aggregate_features(&c, &[], &[&c], &reg).is_err());
    }

    #[test]
    fn aggregate_is_mean_of_pairwise_distances() {
        let schema = TableSchema {
            race_categories: vec!["a".into(), "b".into()],
            scene_dims: vec!["x".into(), "y".into()],
            venue_categories: vec!["f".into(), "g".into()],
        };
        let mut a2 = attrs(41.0, -87.0);
        a2.population = 50_000.0;
        a2.racial_composition = vec![0.2, 0.8];
        a2.scenes_vector = vec![0.3, 0.9];
        let mut a3 = attrs(30.0, -97.0);
        a3.median_income = 90_000.0;
        a3.venue_type_distribution = vec![0.9, 0.1];
        let recs = vec![
            record("C", attrs(40.0, -74.0)),
            record("T1", a2),
            record("T2", a3),
            record("B1", attrs(47.0, -122.0)),
        ];
        let table = RegionTable::new(schema, recs).unwrap();
        let reg = DimensionRegistry::from_table(&table, false);
        let r = table.records();
        let fv = aggregate_features(&r[0], &[&r[1], &r[2]], &[&r[3]], &reg).unwrap();

        // single pairwise distance recomputed per dimension
        for (i, dim) in reg.dims().iter().enumerate() {
            let d1 = dimension_distance(dim, &r[0].attributes, &r[1].attributes).unwrap();
            let d2 = dimension_distance(dim, &r[0].attributes, &r[2].attributes).unwrap();
            let db = dimension_distance(dim, &r[0].attributes, &r[3].attributes).unwrap();
            assert_eq!(fv.as_slice()[2 * i], (d1 + d2) / 2.0, "{}", dim.name());
            assert_eq!(fv.as_slice()[2 * i + 1], db);
        }
        let geo_scale = reg.dims()[0].scale;
        let hand = (law_of_cosines_km((40.0, -74.0), (41.0, -87.0))
            + law_of_cosines_km((40.0, -74.0), (30.0, -97.0)))
            / 2.0
            / geo_scale;
        assert!((fv.as_slice()[0] - hand).abs() < 1e-6);
    }

    fn arb_dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            if s == 0.0 {
                let mut u = vec![0.0; v.len()];
                u[0] = 1.0;
                u
            } else {
                v.iter().map(|x| x / s).collect()
            }
        })
    }

    fn arb_attrs() -> impl Strategy<Value = RegionAttributes> {
        (
            (0.0f64..1e7, 0.0f64..2e5, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
            (-90.0f64..90.0, -180.0f64..180.0),
            arb_dist(4),
            arb_dist(5),
            prop::collection::vec(-3.0f64..3.0, 3).prop_filter("non-zero", |v| v.iter().any(|x| *x != 0.0)),
        )
            .prop_map(|((pop, inc, edu, emp, pol), (lat, lon), race, venues, scenes)| RegionAttributes {
                population: pop,
                median_income: inc,
                education_rate: edu,
                employment_rate: emp,
                racial_composition: race,
                political_leaning: pol,
                scenes_vector: scenes,
                venue_type_distribution: venues,
                centroid_lat: lat,
                centroid_lon: lon,
            })
    }

    proptest! {
        #[test]
        fn distances_symmetric_bounded_finite(a in arb_attrs(), b in arb_attrs()) {
            let reg = DimensionRegistry::unit(true);
            for d in reg.dims() {
                let ab = dimension_distance(d, &a, &b).unwrap();
                let ba = dimension_distance(d, &b, &a).unwrap();
                prop_assert!(ab.is_finite() && ab >= 0.0);
                prop_assert_eq!(ab, ba);
                match d.kind {
                    DimensionKind::Distribution => prop_assert!(ab <= 1.0),
                    DimensionKind::Vector => prop_assert!(ab <= 2.0),
                    _ => {}
                }
            }
        }

        #[test]
        fn farther_top_member_never_lowers_to_top(
            base in arb_attrs(),
            shift in 0.01f64..0.3,
        ) {
            // candidate sits at the origin of every scalar axis; the replacement
            // top member is strictly farther in every dimension
            let mut cand = base.clone();
            cand.population = 0.0;
            cand.median_income = 0.0;
            cand.education_rate = 0.0;
            cand.employment_rate = 0.0;
            cand.political_leaning = 0.0;
            cand.centroid_lat = 0.0;
            cand.centroid_lon = 0.0;
            cand.racial_composition = vec![1.0, 0.0, 0.0, 0.0];
            cand.venue_type_distribution = vec![1.0, 0.0, 0.0, 0.0, 0.0];
            cand.scenes_vector = vec![1.0, 0.0, 0.0];

            let mut near = cand.clone();
            near.population = 10.0;
            near.median_income = 10.0;
            near.education_rate = shift;
            near.employment_rate = shift;
            near.political_leaning = shift;
            near.centroid_lat = shift * 10.0;
            near.racial_composition = vec![1.0 - shift, shift, 0.0, 0.0];
            near.venue_type_distribution = vec![1.0 - shift, shift, 0.0, 0.0, 0.0];
            near.scenes_vector = vec![1.0, shift, 0.0];

            let mut far = near.clone();
            far.population = 1000.0;
            far.median_income = 1000.0;
            far.education_rate = shift * 2.0;
            far.employment_rate = shift * 2.0;
            far.political_leaning = shift * 2.0;
            far.centroid_lat = shift * 20.0;
            far.racial_composition = vec![1.0 - 2.0 * shift, 2.0 * shift, 0.0, 0.0];
            far.venue_type_distribution = vec![1.0 - 2.0 * shift, 2.0 * shift, 0.0, 0.0, 0.0];
            far.scenes_vector = vec![1.0, 2.0 * shift, 0.0];

            let other = base;
            let reg = DimensionRegistry::unit(true);
            let c = record("C", cand);
            let (n, f, o) = (record("N", near), record("F", far), record("O", other));
            let before = aggregate_features(&c, &[&n, &o], &[], &reg).unwrap();
            let after = aggregate_features(&c, &[&f, &o], &[], &reg).unwrap();
            for i in (0..before.len()).step_by(2) {
                prop_assert!(after.as_slice()[i] >= before.as_slice()[i]);
            }
        }
    }
}
