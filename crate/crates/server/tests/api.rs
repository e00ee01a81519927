use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use regionrec::explain::LimeConfig;
use regionrec::ingest::{generate_synthetic, RegionData, SyntheticData, SyntheticSpec};
use regionrec::recsys::{train_level, FLAG_NO_NEIGHBORHOODS};
use regionrec::{EngineConfig, Level, RegionId, RegionRecord, RegionTable};
use regionrec_server::{
    router, ApiError, AppState, Engine, ErrorCode, Health, HealthStatus, RecommendationsBody, ServerConfig,
};

fn config() -> EngineConfig {
    EngineConfig {
        lime: LimeConfig {
            n_samples: 1000,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn synth(n_cities: usize, per_city: usize) -> SyntheticData {
    generate_synthetic(&SyntheticSpec {
        n_cities,
        n_neighborhoods_per_city: per_city,
        n_users: 200,
        min_cities_per_user: n_cities.min(6),
        rng_seed: 11,
        ..Default::default()
    })
    .unwrap()
}

/// 30 cities x 12 ZIPs, both models, plus one city without neighborhoods.
fn full_state() -> &'static AppState {
    static S: OnceLock<AppState> = OnceLock::new();
    S.get_or_init(|| {
        let s = synth(30, 12);
        let data = RegionData::new(s.table.clone(), s.registry.clone(), s.log.clone());
        let city = train_level(&data, Level::City, &config()).unwrap().bundle;
        let hood = train_level(&data, Level::Neighborhood, &config()).unwrap().bundle;
        let mut records = s.table.records().to_vec();
        let mut empty = records[0].clone();
        empty.id = RegionId::city("EMPTY").unwrap();
        empty.name = "Empty City".into();
        records.push(empty);
        let table = RegionTable::new(s.table.schema().clone(), records).unwrap();
        let data = RegionData::new(table, s.registry, s.log);
        AppState::ready(Engine::new(data, Some(city), Some(hood), config()).unwrap())
    })
}

fn app(state: &AppState) -> Router {
    router(state.clone(), &ServerConfig::default())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {}", String::from_utf8_lossy(&bytes)))
    };
    (status, value)
}

fn api_error(status: StatusCode, body: &Value) -> ApiError {
    assert!(!status.is_success());
    serde_json::from_value(body.clone()).unwrap_or_else(|_| panic!("not an ApiError: {body}"))
}

fn city_codes(state: &AppState, n: usize) -> Vec<String> {
    let engine = state.snapshot().unwrap();
    engine
        .data
        .table
        .at_level(Level::City)
        .take(n)
        .map(|r| r.id.code().to_string())
        .collect()
}

#[tokio::test]
async fn health_reports_starting_ready_and_degraded() {
    let (status, body) = call(&app(&AppState::starting()), "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_value(body).unwrap();
    assert_eq!(h.status, HealthStatus::Starting);

    let (_, body) = call(&app(full_state()), "GET", "/api/health", None).await;
    let h: Health = serde_json::from_value(body).unwrap();
    assert_eq!(h.status, HealthStatus::Ready);
    assert!(h.model_versions.city.is_some() && h.model_versions.neighborhood.is_some());
    assert_eq!(h.region_counts.cities, 31);
    assert_eq!(h.region_counts.neighborhoods, 360);

    let s = synth(8, 3);
    let data = RegionData::new(s.table, s.registry, s.log);
    let city = train_level(&data, Level::City, &config()).unwrap().bundle;
    let state = AppState::ready(Engine::new(data, Some(city), None, config()).unwrap());
    let (_, body) = call(&app(&state), "GET", "/api/health", None).await;
    let h: Health = serde_json::from_value(body).unwrap();
    assert_eq!(h.status, HealthStatus::Degraded);
    assert_eq!(h.missing, vec!["neighborhood model".to_string()]);

    // a stage without its model is unavailable, not a crash
    let zip = state.snapshot().unwrap().data.table.at_level(Level::Neighborhood).next().unwrap().id.code().to_string();
    let (status, body) = call(
        &app(&state),
        "POST",
        "/api/recommendations/neighborhoods",
        Some(json!({"destination": s_city(&state), "liked": [zip]})),
    )
    .await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(api_error(status, &body).code, ErrorCode::Internal);
}

fn s_city(state: &AppState) -> String {
    city_codes(state, 2)[1].clone()
}

#[tokio::test]
async fn endpoints_are_unavailable_while_starting() {
    let (status, body) = call(&app(&AppState::starting()), "GET", "/api/cities", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    api_error(status, &body);
}

#[tokio::test]
async fn popular_cities_are_capped_ordered_and_stable() {
    let a = app(full_state());
    let (status, body) = call(&a, "GET", "/api/cities", None).await;
    assert_eq!(status, StatusCode::OK);
    let items = body.as_array().unwrap();
    assert_eq!(items.len(), 25);
    let reviews: Vec<u64> = items.iter().map(|c| c["total_reviews"].as_u64().unwrap()).collect();
    assert!(reviews.windows(2).all(|w| w[0] >= w[1]));
    for key in ["code", "name", "description", "image_url", "centroid", "total_reviews"] {
        assert!(items[0].get(key).is_some(), "missing {key}");
    }
    let (_, again) = call(&a, "GET", "/api/cities", None).await;
    assert_eq!(body, again);

    let s = synth(3, 2);
    let state = AppState::ready(Engine::new(RegionData::new(s.table, s.registry, s.log), None, None, config()).unwrap());
    let (_, body) = call(&app(&state), "GET", "/api/cities", None).await;
    assert_eq!(body.as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn neighborhood_catalog_lists_ten_described_zips() {
    let a = app(full_state());
    let code = &city_codes(full_state(), 1)[0];
    let (status, body) = call(&a, "GET", &format!("/api/cities/{code}/neighborhoods"), None).await;
    assert_eq!(status, StatusCode::OK);
    let items = body.as_array().unwrap();
    assert_eq!(items.len(), 10);
    assert!(items.iter().all(|n| n["parent_city"] == json!(code)));
    assert!(items.iter().all(|n| !n["description"].as_str().unwrap().is_empty()));
    let reviews: Vec<u64> = items.iter().map(|c| c["total_reviews"].as_u64().unwrap()).collect();
    assert!(reviews.windows(2).all(|w| w[0] >= w[1]));

    let s = synth(6, 2);
    let state = AppState::ready(Engine::new(RegionData::new(s.table, s.registry, s.log), None, None, config()).unwrap());
    let code = &city_codes(&state, 1)[0];
    let (_, body) = call(&app(&state), "GET", &format!("/api/cities/{code}/neighborhoods"), None).await;
    assert_eq!(body.as_array().unwrap().len(), 2);

    let (status, body) = call(&a, "GET", "/api/cities/NOPE/neighborhoods", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(api_error(status, &body).code, ErrorCode::NotFound);
}

#[tokio::test]
async fn one_liked_city_gives_three_explained_recommendations() {
    let a = app(full_state());
    let liked = &city_codes(full_state(), 1)[0];
    let (status, body) = call(&a, "POST", "/api/recommendations/cities", Some(json!({"liked": [liked], "disliked": []}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let recs = body["recommendations"].as_array().unwrap();
    assert_eq!(recs.len(), 3);
    for r in recs {
        assert_ne!(&r["code"], &json!(liked));
        assert_eq!(r["attributions"].as_array().unwrap().len(), 16);
        assert_eq!(r["raw_distances"].as_object().unwrap().len(), 16);
        assert!(!r["rendered_text"].as_str().unwrap().is_empty());
        assert!(!r["llm_prompt"].as_str().unwrap().is_empty());
        assert!(r["score"].as_f64().unwrap() > 0.0);
    }

    // the typed body round-trips
    let typed: RecommendationsBody = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(serde_json::to_value(&typed).unwrap(), body);
}

#[tokio::test]
async fn label_rules_are_validation_errors() {
    let a = app(full_state());
    let codes = city_codes(full_state(), 7);
    let cases = [
        json!({"liked": [], "disliked": []}),
        json!({"liked": [], "disliked": ["X"]}),
        json!({"liked": codes[..4], "disliked": codes[4..7]}),
        json!({"liked": [codes[0]], "disliked": [codes[0]]}),
        json!({"liked": [codes[0], codes[0]]}),
    ];
    for case in cases {
        let (status, body) = call(&a, "POST", "/api/recommendations/cities", Some(case.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{case}");
        assert_eq!(api_error(status, &body).code, ErrorCode::Validation, "{case}");
    }
}

#[tokio::test]
async fn unknown_codes_are_not_found_and_named() {
    let a = app(full_state());
    let (status, body) = call(&a, "POST", "/api/recommendations/cities", Some(json!({"liked": ["ATLANTIS"]}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let e = api_error(status, &body);
    assert_eq!(e.code, ErrorCode::NotFound);
    assert!(e.message.contains("ATLANTIS"));
    assert_eq!(e.field.as_deref(), Some("liked"));
}

#[tokio::test]
async fn malformed_requests_still_get_api_errors() {
    let a = app(full_state());
    let req = Request::builder()
        .method("POST")
        .uri("/api/recommendations/cities")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{\"liked\": ["))
        .unwrap();
    let resp = a.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(api_error(status, &body).code, ErrorCode::Validation);

    let (status, body) = call(&a, "GET", "/api/nothing-here", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    api_error(status, &body);

    let (status, body) = call(&a, "DELETE", "/api/cities", None).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    api_error(status, &body);
}

fn zips_of(state: &AppState, city: &str) -> Vec<String> {
    state
        .snapshot()
        .unwrap()
        .data
        .table
        .neighborhoods_of(city)
        .map(|r: &RegionRecord| r.id.code().to_string())
        .collect()
}

#[tokio::test]
async fn neighborhood_recommendations_are_scoped_to_destination() {
    let a = app(full_state());
    let cities = city_codes(full_state(), 2);
    let liked = zips_of(full_state(), &cities[0])[..2].to_vec();
    let (status, body) = call(
        &a,
        "POST",
        "/api/recommendations/neighborhoods",
        Some(json!({"destination": cities[1], "liked": liked})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let recs = body["recommendations"].as_array().unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r["parent_city"] == json!(cities[1])));

    let own = zips_of(full_state(), &cities[1])[0].clone();
    let (_, body) = call(
        &a,
        "POST",
        "/api/recommendations/neighborhoods",
        Some(json!({"destination": cities[1], "liked": [own]})),
    )
    .await;
    assert!(body["recommendations"].as_array().unwrap().iter().all(|r| r["code"] != json!(own)));

    let (status, body) = call(
        &a,
        "POST",
        "/api/recommendations/neighborhoods",
        Some(json!({"destination": cities[1], "liked": []})),
    )
    .await;
    assert_eq!(api_error(status, &body).code, ErrorCode::Validation);

    let (status, body) = call(
        &a,
        "POST",
        "/api/recommendations/neighborhoods",
        Some(json!({"destination": "NOWHERE", "liked": [own]})),
    )
    .await;
    assert_eq!(api_error(status, &body).code, ErrorCode::NotFound);

    let (status, body) = call(
        &a,
        "POST",
        "/api/recommendations/neighborhoods",
        Some(json!({"destination": "EMPTY", "liked": [own]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["recommendations"].as_array().unwrap().is_empty());
    assert_eq!(body["flags"], json!([FLAG_NO_NEIGHBORHOODS]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_get_identical_bodies() {
    let a = app(full_state());
    let liked = city_codes(full_state(), 2);
    let req = json!({"liked": [liked[0]], "disliked": [liked[1]]});
    let handles: Vec<_> = (0..6)
        .map(|_| {
            let (a, req) = (a.clone(), req.clone());
            tokio::spawn(async move { call(&a, "POST", "/api/recommendations/cities", Some(req)).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        let (status, body) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn installing_a_new_engine_swaps_the_snapshot() {
    let state = AppState::starting();
    let s = synth(4, 2);
    state.install(Engine::new(RegionData::new(s.table, s.registry, s.log), None, None, config()).unwrap());
    let old = state.snapshot().unwrap();
    let s = synth(5, 2);
    state.install(Engine::new(RegionData::new(s.table, s.registry, s.log), None, None, config()).unwrap());
    assert_eq!(old.data.table.count_at_level(Level::City), 4);
    let (_, body) = call(&app(&state), "GET", "/api/cities", None).await;
    assert_eq!(body.as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let req = Request::builder()
        .uri("/api/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app(full_state()).oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");

    let restricted = router(
        full_state().clone(),
        &ServerConfig {
            cors_origins: vec!["http://ui.example".into()],
        },
    );
    let req = Request::builder()
        .uri("/api/health")
        .header(header::ORIGIN, "http://ui.example")
        .body(Body::empty())
        .unwrap();
    let resp = restricted.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://ui.example");
}
