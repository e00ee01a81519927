use crate::model::{RegionAttributes, RegionId, RegionRecord, RegionTable, TableSchema};

pub(crate) fn attrs(seed: f64) -> RegionAttributes {
    let t = seed.fract();
    RegionAttributes {
        population: 1000.0 * (1.0 + seed),
        median_income: 40_000.0 + 1000.0 * seed,
        education_rate: 0.2 + 0.5 * t,
        employment_rate: 0.6,
        racial_composition: vec![t, 1.0 - t],
        political_leaning: 0.3 + 0.4 * t,
        scenes_vector: vec![1.0, seed],
        venue_type_distribution: vec![1.0 - t, t],
        centroid_lat: 30.0 + seed,
        centroid_lon: -100.0 + seed,
    }
}

/// Cities A-D, each with two neighborhoods `<city lowercase>1`, `<city lowercase>2`.
pub(crate) fn tiny_table() -> RegionTable {
    let schema = TableSchema {
        race_categories: vec!["x".into(), "y".into()],
        scene_dims: vec!["s".into(), "t".into()],
        venue_categories: vec!["v".into(), "w".into()],
    };
    let mut records = Vec::new();
    for (i, c) in ["A", "B", "C", "D"].iter().enumerate() {
        records.push(RegionRecord {
            id: RegionId::city(*c).unwrap(),
            name: format!("City {c}"),
            description: String::new(),
            image_url: None,
            total_reviews: 0,
            attributes: attrs(i as f64 + 0.25),
        });
        for j in 1..=2 {
            records.push(RegionRecord {
                id: RegionId::neighborhood(format!("{}{j}", c.to_lowercase()), *c).unwrap(),
                name: format!("{c} district {j}"),
                description: String::new(),
                image_url: None,
                total_reviews: 0,
                attributes: attrs(i as f64 + 0.1 * j as f64),
            });
        }
    }
    RegionTable::new(schema, records).unwrap()
}
