//! HTTP JSON API over a trained region recommender.
//!
//! Handlers read an immutable [`Engine`] snapshot; [`AppState::install`]
//! swaps in a new one atomically. See `docs/api.md` for the schemas.

mod describe;
pub mod dto;
mod error;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use regionrec::ingest::RegionData;
use regionrec::recsys::{
    load_bundle, popular_regions, recommend_cities, recommend_neighborhoods, ModelBundle, PreferenceInput,
    BUNDLE_FORMAT, BUNDLE_VERSION,
};
use regionrec::model::MAX_CITY_LABELS;
use regionrec::{EngineConfig, Level, RegionId, RegionTable};

pub use describe::{description_prompt, neighborhood_description};
pub use dto::*;
pub use error::{ApiError, ErrorCode};

pub const CITY_MODEL_FILE: &str = "city.json";
pub const NEIGHBORHOOD_MODEL_FILE: &str = "neighborhood.json";

/// Everything a request needs, shared read-only between handlers.
#[derive(Debug)]
pub struct Engine {
    pub data: RegionData,
    pub city: Option<ModelBundle>,
    pub neighborhood: Option<ModelBundle>,
    pub config: EngineConfig,
}

impl Engine {
    pub fn new(
        data: RegionData,
        city: Option<ModelBundle>,
        neighborhood: Option<ModelBundle>,
        config: EngineConfig,
    ) -> regionrec::Result<Self> {
        config.validate()?;
        for (bundle, level) in [(&city, Level::City), (&neighborhood, Level::Neighborhood)] {
            if let Some(b) = bundle {
                b.validate()?;
                if b.level != level {
                    return Err(regionrec::Error::Config(format!(
                        "expected a {level} model, got a {} model",
                        b.level
                    )));
                }
            }
        }
        Ok(Self {
            data,
            city,
            neighborhood,
            config,
        })
    }

    /// Loads `regions.csv`/`reviews.csv` from `data_dir` and whichever of
    /// `city.json`/`neighborhood.json` exist in `models_dir`.
    pub fn load(data_dir: &Path, models_dir: &Path, config: EngineConfig) -> regionrec::Result<Self> {
        let data = RegionData::load_dir(data_dir, config.include_employment)?;
        let load = |name: &str| -> regionrec::Result<Option<ModelBundle>> {
            let path = models_dir.join(name);
            if path.exists() {
                load_bundle(&path).map(Some)
            } else {
                tracing::warn!(path = %path.display(), "model file missing");
                Ok(None)
            }
        };
        let city = load(CITY_MODEL_FILE)?;
        let neighborhood = load(NEIGHBORHOOD_MODEL_FILE)?;
        Self::new(data, city, neighborhood, config)
    }

    fn table(&self) -> &RegionTable {
        &self.data.table
    }

    fn version(bundle: &ModelBundle) -> String {
        format!(
            "{BUNDLE_FORMAT}/{BUNDLE_VERSION} level={} k={} m={} trees={}",
            bundle.level,
            bundle.k,
            bundle.m,
            bundle.model.trees.len()
        )
    }

    pub fn health(&self) -> Health {
        let mut missing = Vec::new();
        if self.city.is_none() {
            missing.push("city model".to_string());
        }
        if self.neighborhood.is_none() {
            missing.push("neighborhood model".to_string());
        }
        Health {
            status: if missing.is_empty() {
                HealthStatus::Ready
            } else {
                HealthStatus::Degraded
            },
            model_versions: ModelVersions {
                city: self.city.as_ref().map(Self::version),
                neighborhood: self.neighborhood.as_ref().map(Self::version),
            },
            region_counts: RegionCounts {
                cities: self.table().count_at_level(Level::City),
                neighborhoods: self.table().count_at_level(Level::Neighborhood),
            },
            missing,
        }
    }

    pub fn popular_cities(&self) -> Vec<CitySummary> {
        popular_regions(&self.data.log, self.table(), Level::City, self.config.n_popular_cities, None)
            .iter()
            .filter_map(|id| self.table().get(id))
            .map(CitySummary::from)
            .collect()
    }

    pub fn popular_neighborhoods(&self, city: &str) -> Result<Vec<NeighborhoodSummary>, ApiError> {
        let table = self.table();
        let city_rec = table
            .lookup(Level::City, city)
            .ok_or_else(|| ApiError::not_found(format!("unknown city `{city}`"), Some("code")))?;
        let ids = popular_regions(
            &self.data.log,
            table,
            Level::Neighborhood,
            self.config.n_popular_neighborhoods,
            Some(city),
        );
        Ok(ids
            .iter()
            .filter_map(|id| table.get(id))
            .map(|r| NeighborhoodSummary {
                code: r.id.code().to_string(),
                parent_city: city.to_string(),
                name: r.name.clone(),
                description: neighborhood_description(r, &city_rec.name, table.schema()),
                description_prompt: description_prompt(r, &city_rec.name, table.schema()),
                image_url: r.image_url.clone(),
                centroid: Centroid {
                    lat: r.attributes.centroid_lat,
                    lon: r.attributes.centroid_lon,
                },
                total_reviews: r.total_reviews,
            })
            .collect())
    }

    /// Label-count and overlap checks run before any code is resolved, so a
    /// malformed request is a validation error even if it names unknown codes.
    fn check_labels(liked: &[String], disliked: &[String], max_total: Option<usize>) -> Result<(), ApiError> {
        let total = liked.len() + disliked.len();
        if total == 0 {
            return Err(ApiError::validation("at least one region must be labeled", Some("liked")));
        }
        if let Some(max) = max_total {
            if total > max {
                return Err(ApiError::validation(
                    format!("at most {max} regions may be labeled, got {total}"),
                    Some("liked"),
                ));
            }
        }
        if liked.is_empty() {
            return Err(ApiError::validation("at least one liked region is required", Some("liked")));
        }
        let mut seen = BTreeSet::new();
        for (field, codes) in [("liked", liked), ("disliked", disliked)] {
            for code in codes {
                if code.trim().is_empty() {
                    return Err(ApiError::validation("region codes must not be empty", Some(field)));
                }
                if !seen.insert(code.as_str()) {
                    return Err(ApiError::validation(
                        format!("`{code}` is labeled more than once"),
                        Some(field),
                    ));
                }
            }
        }
        Ok(())
    }

    fn resolve(&self, level: Level, codes: &[String], field: &str) -> Result<Vec<RegionId>, ApiError> {
        codes
            .iter()
            .map(|code| {
                self.table()
                    .lookup(level, code)
                    .map(|r| r.id.clone())
                    .ok_or_else(|| ApiError::not_found(format!("unknown {level} `{code}`"), Some(field)))
            })
            .collect()
    }

    pub fn recommend_cities(&self, req: &CityRequest) -> Result<RecommendationsBody, ApiError> {
        Self::check_labels(&req.liked, &req.disliked, Some(MAX_CITY_LABELS))?;
        let input = PreferenceInput {
            liked: self.resolve(Level::City, &req.liked, "liked")?,
            disliked: self.resolve(Level::City, &req.disliked, "disliked")?,
        };
        let bundle = self
            .city
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("city model is not loaded"))?;
        Ok(recommend_cities(&input, bundle, self.table(), &self.config)?.into())
    }

    pub fn recommend_neighborhoods(&self, req: &NeighborhoodRequest) -> Result<RecommendationsBody, ApiError> {
        if req.destination.trim().is_empty() {
            return Err(ApiError::validation("destination is required", Some("destination")));
        }
        Self::check_labels(&req.liked, &req.disliked, None)?;
        if self.table().lookup(Level::City, &req.destination).is_none() {
            return Err(ApiError::not_found(
                format!("unknown city `{}`", req.destination),
                Some("destination"),
            ));
        }
        let input = PreferenceInput {
            liked: self.resolve(Level::Neighborhood, &req.liked, "liked")?,
            disliked: self.resolve(Level::Neighborhood, &req.disliked, "disliked")?,
        };
        let bundle = self
            .neighborhood
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("neighborhood model is not loaded"))?;
        Ok(recommend_neighborhoods(&req.destination, &input, bundle, self.table(), &self.config)?.into())
    }
}

/// Shared handler state; empty until an engine is installed.
#[derive(Debug, Clone, Default)]
pub struct AppState {
    engine: Arc<RwLock<Option<Arc<Engine>>>>,
}

impl AppState {
    pub fn starting() -> Self {
        Self::default()
    }

    pub fn ready(engine: Engine) -> Self {
        let state = Self::default();
        state.install(engine);
        state
    }

    /// Replaces the engine; in-flight requests keep their old snapshot.
    pub fn install(&self, engine: Engine) {
        let mut slot = self.engine.write().unwrap_or_else(|e| e.into_inner());
        *slot = Some(Arc::new(engine));
    }

    pub fn snapshot(&self) -> Option<Arc<Engine>> {
        self.engine.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn engine(&self) -> Result<Arc<Engine>, ApiError> {
        self.snapshot().ok_or_else(|| ApiError::unavailable("engine is starting"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Allowed browser origins; empty allows any origin.
    pub cors_origins: Vec<String>,
}

fn cors(config: &ServerConfig) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any);
    if config.cors_origins.is_empty() {
        layer.allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = config
            .cors_origins
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        layer.allow_origin(AllowOrigin::list(origins))
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(t)| t)
        .map_err(|e| ApiError::validation(e.body_text(), Some("body")))
}

/// Runs recommendation work off the async workers; LIME is CPU-bound.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(match state.snapshot() {
        Some(engine) => engine.health(),
        None => Health {
            status: HealthStatus::Starting,
            model_versions: ModelVersions {
                city: None,
                neighborhood: None,
            },
            region_counts: RegionCounts {
                cities: 0,
                neighborhoods: 0,
            },
            missing: vec!["region table".into(), "city model".into(), "neighborhood model".into()],
        },
    })
}

async fn cities(State(state): State<AppState>) -> Result<Json<Vec<CitySummary>>, ApiError> {
    Ok(Json(state.engine()?.popular_cities()))
}

async fn neighborhoods(
    State(state): State<AppState>,
    UrlPath(code): UrlPath<String>,
) -> Result<Json<Vec<NeighborhoodSummary>>, ApiError> {
    Ok(Json(state.engine()?.popular_neighborhoods(&code)?))
}

async fn city_recommendations(
    State(state): State<AppState>,
    payload: Result<Json<CityRequest>, JsonRejection>,
) -> Result<Json<RecommendationsBody>, ApiError> {
    let req = body(payload)?;
    let engine = state.engine()?;
    blocking(move || engine.recommend_cities(&req)).await.map(Json)
}

async fn neighborhood_recommendations(
    State(state): State<AppState>,
    payload: Result<Json<NeighborhoodRequest>, JsonRejection>,
) -> Result<Json<RecommendationsBody>, ApiError> {
    let req = body(payload)?;
    let engine = state.engine()?;
    blocking(move || engine.recommend_neighborhoods(&req)).await.map(Json)
}

pub fn router(state: AppState, config: &ServerConfig) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/cities", get(cities))
        .route("/api/cities/{code}/neighborhoods", get(neighborhoods))
        .route("/api/recommendations/cities", post(city_recommendations))
        .route("/api/recommendations/neighborhoods", post(neighborhood_recommendations))
        .fallback(|| async { ApiError::not_found("no such endpoint", None) })
        .method_not_allowed_fallback(|| async { ApiError::method_not_allowed() })
        .layer(cors(config))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState, config: &ServerConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
