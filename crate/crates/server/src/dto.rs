//! Request and response bodies.

use serde::{Deserialize, Serialize};

use regionrec::explain::Explanation;
use regionrec::recsys::{Recommendation, RecommendationSet};
use regionrec::RegionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySummary {
    pub code: String,
    pub name: String,
    pub description: String,
    pub image_url: Option<String>,
    pub centroid: Centroid,
    pub total_reviews: u64,
}

impl From<&RegionRecord> for CitySummary {
    fn from(r: &RegionRecord) -> Self {
        Self {
            code: r.id.code().to_string(),
            name: r.name.clone(),
            description: r.description.clone(),
            image_url: r.image_url.clone(),
            centroid: Centroid {
                lat: r.attributes.centroid_lat,
                lon: r.attributes.centroid_lon,
            },
            total_reviews: r.total_reviews,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSummary {
    pub code: String,
    pub parent_city: String,
    pub name: String,
    pub description: String,
    pub description_prompt: String,
    pub image_url: Option<String>,
    pub centroid: Centroid,
    pub total_reviews: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityRequest {
    #[serde(default)]
    pub liked: Vec<String>,
    #[serde(default)]
    pub disliked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodRequest {
    pub destination: String,
    #[serde(default)]
    pub liked: Vec<String>,
    #[serde(default)]
    pub disliked: Vec<String>,
}

/// A recommendation with its explanation fields inlined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationBody {
    pub code: String,
    pub parent_city: Option<String>,
    pub name: String,
    pub score: f64,
    pub image_url: Option<String>,
    pub description: String,
    #[serde(flatten)]
    pub explanation: Explanation,
}

impl From<Recommendation> for RecommendationBody {
    fn from(r: Recommendation) -> Self {
        Self {
            code: r.region.code().to_string(),
            parent_city: r.region.parent_city().map(str::to_string),
            name: r.name,
            score: r.score,
            image_url: r.image_url,
            description: r.description,
            explanation: r.explanation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationsBody {
    pub recommendations: Vec<RecommendationBody>,
    pub flags: Vec<String>,
}

impl From<RecommendationSet> for RecommendationsBody {
    fn from(set: RecommendationSet) -> Self {
        Self {
            recommendations: set.recommendations.into_iter().map(Into::into).collect(),
            flags: set.flags,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthStatus {
    Starting,
    Ready,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVersions {
    pub city: Option<String>,
    pub neighborhood: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub cities: usize,
    pub neighborhoods: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: HealthStatus,
    pub model_versions: ModelVersions,
    pub region_counts: RegionCounts,
    pub missing: Vec<String>,
}
