//! The recommendation response schema, shared by the CLI and the service so
//! both emit identical item lists.

use hybrec_core::recommend::{RecommendationList, Recommender};
use hybrec_core::{CorpusStore, Method};
use serde::{Deserialize, Serialize};

pub const DEFAULT_LIMIT: usize = 10;
pub const MAX_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedPaper {
    #[serde(rename = "paperId")]
    pub paper_id: String,
    pub title: String,
    pub score: f64,
    #[serde(rename = "citationCount")]
    pub citation_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationsResponse {
    #[serde(rename = "recommendedPapers")]
    pub recommended_papers: Vec<RecommendedPaper>,
}

/// CLI form: the same items plus query metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationListJson {
    pub query: String,
    pub method: String,
    #[serde(rename = "generatedAt")]
    pub generated_at: u64,
    #[serde(rename = "recommendedPapers")]
    pub recommended_papers: Vec<RecommendedPaper>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    UnknownPaper(String),
    MissingVector { id: String, missing: Vec<Method> },
    BadRequest(String),
    Internal(String),
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApiError::UnknownPaper(id) => write!(f, "unknown paper id {id:?}"),
            ApiError::MissingVector { id, missing } => {
                let m: Vec<&str> = missing.iter().map(|m| m.as_str()).collect();
                write!(f, "paper {id:?} has no vector in {}", m.join(", "))
            }
            ApiError::BadRequest(m) | ApiError::Internal(m) => f.write_str(m),
        }
    }
}

pub fn items(store: &CorpusStore, list: &RecommendationList) -> Vec<RecommendedPaper> {
    list.items
        .iter()
        .filter_map(|s| {
            let r = store.get(s.index)?;
            Some(RecommendedPaper {
                paper_id: r.external_id.clone(),
                title: r.title.clone(),
                score: s.score,
                citation_count: r.citation_count,
            })
        })
        .collect()
}

pub fn parse_method(s: Option<&str>) -> Result<Method, ApiError> {
    match s {
        None => Ok(Method::Hybrid),
        Some(s) => Method::parse(s).ok_or_else(|| ApiError::BadRequest(format!("unknown method {s:?}; expected cbf, gb, or hybrid"))),
    }
}

/// Looks up `id` and runs papers-like-this.
pub fn recommend(
    store: &CorpusStore,
    rec: &Recommender,
    id: &str,
    method: Method,
    limit: usize,
) -> Result<RecommendationList, ApiError> {
    if limit == 0 || limit > MAX_LIMIT {
        return Err(ApiError::BadRequest(format!("limit must be in 1..={MAX_LIMIT}")));
    }
    let q = store.resolve(id).ok_or_else(|| ApiError::UnknownPaper(id.to_string()))?;
    rec.papers_like_this(q, method, limit).map_err(|e| match e {
        hybrec_core::Error::NoVector { missing, .. } => ApiError::MissingVector { id: id.to_string(), missing },
        other => ApiError::Internal(other.to_string()),
    })
}
