use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::Location;

use super::{assemble_response, GeneratorError, GeneratorRequest, GeneratorResponse, QueryGenerator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_ms: u64,
    /// Retries after the first attempt.
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
    /// Sent as a bearer token. Never read from or written to config files.
    #[serde(skip)]
    pub api_token: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            timeout_ms: 10_000,
            retries: 2,
            backoff_base_ms: 500,
            max_in_flight: 8,
            api_token: None,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    post_id: &'a str,
    title: &'a str,
    body: &'a str,
    max_queries: usize,
}

#[derive(Deserialize)]
struct WireQuery {
    text: String,
    rank: u32,
}

#[derive(Deserialize)]
struct WireLocation {
    #[serde(default)]
    country: Option<String>,
    #[serde(default)]
    state: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    queries: Vec<WireQuery>,
    #[serde(default)]
    location: Option<WireLocation>,
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// Delegates generation to an HTTP endpoint speaking the JSON protocol
/// `{post_id, title, body, max_queries}` → `{queries: [{text, rank}], location}`.
#[derive(Debug)]
pub struct RemoteGenerator {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    gate: InFlight,
}

enum Attempt {
    Retry(String),
    Fatal(GeneratorError),
}

impl RemoteGenerator {
    pub const ID: &'static str = "remote";

    pub fn new(config: RemoteConfig) -> Result<Self, GeneratorError> {
        if config.url.is_empty() {
            return Err(GeneratorError::Config("remote generator url is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GeneratorError::Config(e.to_string()))?;
        let gate = InFlight::new(config.max_in_flight);
        Ok(Self { config, client, gate })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, req: &GeneratorRequest) -> Result<GeneratorResponse, Attempt> {
        let wire = WireRequest {
            post_id: &req.post_id,
            title: &req.title,
            body: &req.body,
            max_queries: req.max_queries,
        };
        let resp = {
            let _permit = self.gate.acquire();
            let mut post = self.client.post(&self.config.url).json(&wire);
            if let Some(token) = &self.config.api_token {
                post = post.bearer_auth(token);
            }
            post.send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.text())
                .map_err(|e| Attempt::Retry(e.to_string()))?
        };
        let parsed: WireResponse = serde_json::from_str(&resp).map_err(|e| {
            Attempt::Fatal(GeneratorError::ProtocolViolation {
                reason: e.to_string(),
                payload: resp.clone(),
            })
        })?;

        let mut queries = parsed.queries;
        queries.sort_by_key(|q| q.rank);
        let location = parsed.location.and_then(|l| match l.country {
            Some(country) if !country.is_empty() => Some(Location {
                country,
                state: l.state.filter(|s| !s.is_empty()),
            }),
            _ => None,
        });
        Ok(assemble_response(
            req,
            Self::ID,
            queries.iter().map(|q| q.text.as_str()),
            location,
        ))
    }
}

impl QueryGenerator for RemoteGenerator {
    fn generator_id(&self) -> &str {
        Self::ID
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError> {
        req.validate()?;
        let attempts = self.config.retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(backoff));
            }
            match self.attempt(req) {
                Ok(resp) => return Ok(resp),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!("generator attempt {} for {} failed: {msg}", attempt + 1, req.post_id);
                    last_error = msg;
                }
            }
        }
        Err(GeneratorError::Unavailable { attempts, last_error })
    }
}
