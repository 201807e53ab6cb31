//! Pluggable query generation from post content.
//!
//! Every generator returns at most `max_queries` normalized, deduplicated
//! queries ranked from 1. [`ExtractiveGenerator`] copies n-grams out of the
//! title and first sentence, [`TemplateGenerator`] adds knowledge-table
//! associations ahead of those, and [`RemoteGenerator`] delegates to an HTTP
//! endpoint.

mod extractive;
mod remote;
mod template;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{normalize_query, GeneratedQuery, Location};

pub use extractive::{extractive_candidates, first_sentence, ExtractiveGenerator, Ngram};
pub use remote::{RemoteConfig, RemoteGenerator};
pub use template::{KnowledgeEntry, KnowledgeTable, TemplateGenerator};

/// Default number of queries kept per post.
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator request: {0}")]
    InvalidRequest(String),
    #[error("generator unavailable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("protocol violation: {reason}")]
    ProtocolViolation { reason: String, payload: String },
    #[error("generator configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub post_id: String,
    pub title: String,
    pub body: String,
    pub max_queries: usize,
}

impl GeneratorRequest {
    pub fn new(
        post_id: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
        max_queries: usize,
    ) -> Self {
        Self {
            post_id: post_id.into(),
            title: title.into(),
            body: body.into(),
            max_queries,
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.max_queries == 0 {
            return Err(GeneratorError::InvalidRequest("max_queries must be >= 1".into()));
        }
        if self.title.is_empty() && self.body.is_empty() {
            return Err(GeneratorError::InvalidRequest(format!(
                "post {} has neither title nor body",
                self.post_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub queries: Vec<GeneratedQuery>,
    pub location: Option<Location>,
}

impl GeneratorResponse {
    pub fn texts(&self) -> Vec<&str> {
        self.queries.iter().map(|q| q.text.as_str()).collect()
    }
}

pub trait QueryGenerator: Send + Sync {
    fn generator_id(&self) -> &str;

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError>;
}

/// Normalizes, drops empties and duplicates, truncates to the request's
/// `max_queries`, and assigns consecutive ranks in input order.
pub(crate) fn assemble_response<I>(
    req: &GeneratorRequest,
    generator_id: &str,
    texts: I,
    location: Option<Location>,
) -> GeneratorResponse
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for raw in texts {
        if queries.len() == req.max_queries {
            break;
        }
        let text = normalize_query(raw.as_ref());
        if text.is_empty() || !seen.insert(text.clone()) {
            continue;
        }
        queries.push(GeneratedQuery {
            post_id: req.post_id.clone(),
            text,
            rank: queries.len() as u32 + 1,
            location: location.clone(),
            generator_id: generator_id.to_string(),
        });
    }
    GeneratorResponse { queries, location }
}
