//! The bundled demo data directory and its trained models.

use std::path::PathBuf;

use regionrec::{EngineConfig, Level};
use regionrec_server::{CityRequest, Engine, HealthStatus, NeighborhoodRequest};

fn engine() -> Engine {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo");
    Engine::load(&dir, &dir.join("models"), EngineConfig::default()).unwrap()
}

const NEW_YORK: &str = "35620";

#[test]
fn demo_fixture_serves_both_stages() {
    let e = engine();
    assert_eq!(e.health().status, HealthStatus::Ready);
    assert_eq!(e.data.table.count_at_level(Level::City), 25);

    let cities = e.popular_cities();
    assert_eq!(cities.len(), 25);

    let zips = e.popular_neighborhoods(NEW_YORK).unwrap();
    assert_eq!(zips.len(), 10);

    let out = e
        .recommend_cities(&CityRequest {
            liked: vec![NEW_YORK.into()],
            disliked: vec![],
        })
        .unwrap();
    assert_eq!(out.recommendations.len(), 3);
    let dest = out.recommendations[0].code.clone();

    let out = e
        .recommend_neighborhoods(&NeighborhoodRequest {
            destination: dest.clone(),
            liked: zips[..2].iter().map(|z| z.code.clone()).collect(),
            disliked: vec![zips[9].code.clone()],
        })
        .unwrap();
    assert_eq!(out.recommendations.len(), 3);
    assert!(out.recommendations.iter().all(|r| r.parent_city.as_deref() == Some(dest.as_str())));
}
