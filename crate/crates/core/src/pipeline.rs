//! Windowed aggregation and ranking of trend candidates.
//!
//! Events are bucketed into fixed windows by `floor(time / window_length)`.
//! A post attaches its generated queries to its creation window; an
//! engagement makes its post a supporter of those queries in the window the
//! engagement falls in. Windows are sealed once the watermark (latest event
//! time minus allowed lateness) passes their end, after which they can be
//! ranked under any [`MethodVariant`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::burst::{window_surprise, BurstConfig, BurstError};
use crate::domain::{
    normalize_query, CandidateSource, Creator, EngagementEvent, Post, SearchLogEntry, Timestamp, TrendCandidate,
};
use crate::jsonl::{read_jsonl_or_empty, JsonlError};
use crate::querygen::{GeneratorError, GeneratorRequest, QueryGenerator, DEFAULT_K};
use crate::scoring::{
    creator_authority, trending_score, CreatorQualityScore, EngagementCounts, EngagementWeights, ScoringError,
};

pub const CREATORS_FILE: &str = "creators.jsonl";
pub const POSTS_FILE: &str = "posts.jsonl";
pub const ENGAGEMENTS_FILE: &str = "engagements.jsonl";
pub const SEARCHES_FILE: &str = "searches.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("window {0} not sealed")]
    NotSealed(i64),
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Burst(#[from] BurstError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodVariant {
    /// Poisson bursts over organic search volume.
    VolumeOnly,
    /// Bursts over organic volume plus one per distinct supporting post.
    VolumePlusGenerated,
    /// Generated queries scored by creator authority and engagement.
    RttpFull,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 3] = [
        MethodVariant::VolumeOnly,
        MethodVariant::VolumePlusGenerated,
        MethodVariant::RttpFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodVariant::VolumeOnly => "volume_only",
            MethodVariant::VolumePlusGenerated => "volume_plus_generated",
            MethodVariant::RttpFull => "rttp_full",
        }
    }
}

impl std::fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown method variant {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_length: i64,
    pub allowed_lateness: i64,
    /// Queries requested from the generator per post.
    pub queries_per_post: usize,
    pub weights: EngagementWeights,
    pub burst: BurstConfig,
    /// Multiplier mapping organic burst volume onto the engagement score scale.
    pub volume_to_score: f64,
    /// Whether organic bursts are merged into the engagement-scored ranking.
    pub include_organic_bursts: bool,
    pub generator_workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_length: 3600,
            allowed_lateness: 300,
            queries_per_post: DEFAULT_K,
            weights: EngagementWeights::default(),
            burst: BurstConfig::default(),
            volume_to_score: 1.0,
            include_organic_bursts: true,
            generator_workers: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.window_length <= 0 {
            return Err(PipelineError::Config("window_length must be positive".into()));
        }
        if self.allowed_lateness < 0 {
            return Err(PipelineError::Config("allowed_lateness must be >= 0".into()));
        }
        if self.queries_per_post == 0 {
            return Err(PipelineError::Config("queries_per_post must be >= 1".into()));
        }
        if !(self.volume_to_score.is_finite() && self.volume_to_score >= 0.0) {
            return Err(PipelineError::Config("volume_to_score must be finite and >= 0".into()));
        }
        self.weights.validate()?;
        self.burst.validate()?;
        Ok(())
    }

    pub fn window_of(&self, t: Timestamp) -> i64 {
        t.div_euclid(self.window_length)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Post(Post),
    Engagement(EngagementEvent),
    Search(SearchLogEntry),
}

impl Event {
    pub fn time(&self) -> Timestamp {
        match self {
            Event::Post(p) => p.created_at,
            Event::Engagement(e) => e.occurred_at,
            Event::Search(s) => s.occurred_at,
        }
    }

    fn order_rank(&self) -> u8 {
        match self {
            Event::Post(_) => 0,
            Event::Engagement(_) => 1,
            Event::Search(_) => 2,
        }
    }
}

/// The four ingestion streams as read from an events directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub creators: Vec<Creator>,
    pub posts: Vec<Post>,
    pub engagements: Vec<EngagementEvent>,
    pub searches: Vec<SearchLogEntry>,
}

impl EventLog {
    /// Missing files read as empty streams.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        Ok(Self {
            creators: read_jsonl_or_empty(&dir.join(CREATORS_FILE))?,
            posts: read_jsonl_or_empty(&dir.join(POSTS_FILE))?,
            engagements: read_jsonl_or_empty(&dir.join(ENGAGEMENTS_FILE))?,
            searches: read_jsonl_or_empty(&dir.join(SEARCHES_FILE))?,
        })
    }

    /// Event-time order; at equal times posts precede engagements precede
    /// searches, and input order breaks any remaining tie.
    pub fn ordered_events(&self) -> Vec<Event> {
        let mut events: Vec<Event> = self
            .posts
            .iter()
            .cloned()
            .map(Event::Post)
            .chain(self.engagements.iter().cloned().map(Event::Engagement))
            .chain(self.searches.iter().cloned().map(Event::Search))
            .collect();
        events.sort_by_key(|e| (e.time(), e.order_rank()));
        events
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    UnknownPost,
    LateEvent,
    InvalidEvent,
    DuplicatePost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Accepted,
    Dropped(DropReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounters {
    pub unknown_post: u64,
    pub late: u64,
    pub invalid: u64,
    pub duplicate_post: u64,
    pub unknown_creator: u64,
    /// Posts recorded without generated queries because the generator failed.
    pub generator_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_index: i64,
    pub window_start: Timestamp,
    pub posts: u64,
    pub engagements: u64,
    pub searches: u64,
    pub distinct_queries: usize,
    pub drops: DropCounters,
}

#[derive(Debug, Clone)]
struct PostRecord {
    creator_id: String,
    created_at: Timestamp,
    queries: Vec<String>,
}

#[derive(Debug, Clone, Default)]
struct Window {
    search_volume: HashMap<String, u64>,
    generated: HashMap<String, BTreeSet<String>>,
    engagement: HashMap<String, EngagementCounts>,
    active_posts: BTreeSet<String>,
    posts: u64,
    engagements: u64,
    searches: u64,
    summary: Option<WindowSummary>,
}

impl Window {
    fn support(&mut self, post_id: &str, record: &PostRecord) {
        if self.active_posts.insert(post_id.to_string()) {
            for q in &record.queries {
                self.generated.entry(q.clone()).or_default().insert(post_id.to_string());
            }
        }
    }
}

/// Queries per post, or the generator error message.
pub type Generations = HashMap<String, Result<Vec<String>, String>>;

/// Runs the generator over `posts` on up to `workers` threads.
pub fn pregenerate(
    generator: &dyn QueryGenerator,
    posts: &[&Post],
    queries_per_post: usize,
    workers: usize,
) -> Generations {
    let run = |p: &Post| -> (String, Result<Vec<String>, String>) {
        let req = GeneratorRequest::new(&p.post_id, &p.title, &p.body, queries_per_post);
        let out = generator
            .generate(&req)
            .map(|r| r.queries.into_iter().map(|q| q.text).collect())
            .map_err(|e: GeneratorError| e.to_string());
        (p.post_id.clone(), out)
    };
    let workers = workers.max(1);
    if workers == 1 || posts.len() < 2 {
        return posts.iter().map(|p| run(p)).collect();
    }
    let chunk = posts.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = posts
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|p| run(p)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("generator worker panicked"))
            .collect()
    })
}

pub struct WindowStore {
    cfg: PipelineConfig,
    generator: Arc<dyn QueryGenerator>,
    creators: HashMap<String, Creator>,
    posts: HashMap<String, PostRecord>,
    windows: BTreeMap<i64, Window>,
    max_event_time: Option<Timestamp>,
    drops: DropCounters,
}

impl std::fmt::Debug for WindowStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WindowStore")
            .field("generator", &self.generator.generator_id())
            .field("posts", &self.posts.len())
            .field("windows", &self.windows.len())
            .field("drops", &self.drops)
            .finish()
    }
}

impl WindowStore {
    pub fn new(cfg: PipelineConfig, generator: Arc<dyn QueryGenerator>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            generator,
            creators: HashMap::new(),
            posts: HashMap::new(),
            windows: BTreeMap::new(),
            max_event_time: None,
            drops: DropCounters::default(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn drops(&self) -> DropCounters {
        self.drops
    }

    /// Generated queries of every accepted post, keyed by post id.
    pub fn generations(&self) -> BTreeMap<&str, &[String]> {
        self.posts
            .iter()
            .map(|(id, r)| (id.as_str(), r.queries.as_slice()))
            .collect()
    }

    pub fn register_creator(&mut self, creator: Creator) -> Ack {
        if creator.validate().is_err() {
            self.drops.invalid += 1;
            return Ack::Dropped(DropReason::InvalidEvent);
        }
        self.creators.insert(creator.creator_id.clone(), creator);
        Ack::Accepted
    }

    /// Event time minus allowed lateness.
    pub fn watermark(&self) -> Option<Timestamp> {
        self.max_event_time.map(|t| t - self.cfg.allowed_lateness)
    }

    pub fn window_indices(&self) -> Vec<i64> {
        self.windows.keys().copied().collect()
    }

    pub fn is_sealed(&self, index: i64) -> bool {
        self.windows.get(&index).is_some_and(|w| w.summary.is_some())
    }

    fn drop_event(&mut self, reason: DropReason) -> Ack {
        match reason {
            DropReason::UnknownPost => {
                self.drops.unknown_post += 1;
                log::warn!("dropping engagement for unknown post");
            }
            DropReason::LateEvent => self.drops.late += 1,
            DropReason::InvalidEvent => self.drops.invalid += 1,
            DropReason::DuplicatePost => self.drops.duplicate_post += 1,
        }
        Ack::Dropped(reason)
    }

    /// An event is late when its window is sealed or already behind the
    /// watermark.
    fn is_late(&self, t: Timestamp) -> bool {
        let index = self.cfg.window_of(t);
        self.is_sealed(index)
            || self
                .watermark()
                .is_some_and(|wm| (index + 1) * self.cfg.window_length <= wm)
    }

    /// Window for time `t`, after advancing the event-time high-water mark.
    fn accept_at(&mut self, t: Timestamp) -> &mut Window {
        self.observe_time(t);
        let index = self.cfg.window_of(t);
        self.windows.entry(index).or_default()
    }

    fn observe_time(&mut self, t: Timestamp) {
        self.max_event_time = Some(self.max_event_time.map_or(t, |m| m.max(t)));
    }

    pub fn ingest(&mut self, event: Event) -> Ack {
        match event {
            Event::Post(post) => {
                let generated = self.generate_for(&post);
                self.ingest_post(post, generated)
            }
            Event::Engagement(e) => self.ingest_engagement(e),
            Event::Search(s) => self.ingest_search(s),
        }
    }

    fn generate_for(&self, post: &Post) -> Result<Vec<String>, String> {
        let req = GeneratorRequest::new(&post.post_id, &post.title, &post.body, self.cfg.queries_per_post);
        self.generator
            .generate(&req)
            .map(|r| r.queries.into_iter().map(|q| q.text).collect())
            .map_err(|e| e.to_string())
    }

    /// Ingests `post` with queries produced ahead of time.
    pub fn ingest_post(&mut self, post: Post, generated: Result<Vec<String>, String>) -> Ack {
        if post.validate().is_err() {
            return self.drop_event(DropReason::InvalidEvent);
        }
        if self.posts.contains_key(&post.post_id) {
            return self.drop_event(DropReason::DuplicatePost);
        }
        if self.is_late(post.created_at) {
            return self.drop_event(DropReason::LateEvent);
        }
        if !self.creators.contains_key(&post.creator_id) {
            self.drops.unknown_creator += 1;
        }
        let queries = generated.unwrap_or_else(|err| {
            log::debug!("post {} recorded without generated queries: {err}", post.post_id);
            self.drops.generator_failures += 1;
            Vec::new()
        });
        let record = PostRecord {
            creator_id: post.creator_id,
            created_at: post.created_at,
            queries,
        };
        let window = self.accept_at(post.created_at);
        window.posts += 1;
        window.support(&post.post_id, &record);
        self.posts.insert(post.post_id, record);
        Ack::Accepted
    }

    fn ingest_engagement(&mut self, e: EngagementEvent) -> Ack {
        let Some(record) = self.posts.get(&e.post_id) else {
            return self.drop_event(DropReason::UnknownPost);
        };
        if e.occurred_at < record.created_at {
            return self.drop_event(DropReason::InvalidEvent);
        }
        if self.is_late(e.occurred_at) {
            return self.drop_event(DropReason::LateEvent);
        }
        let record = record.clone();
        let window = self.accept_at(e.occurred_at);
        window.engagements += 1;
        window.support(&e.post_id, &record);
        window.engagement.entry(e.post_id).or_default().increment(e.kind);
        Ack::Accepted
    }

    fn ingest_search(&mut self, s: SearchLogEntry) -> Ack {
        let query = normalize_query(&s.query);
        if query.is_empty() {
            return self.drop_event(DropReason::InvalidEvent);
        }
        if self.is_late(s.occurred_at) {
            return self.drop_event(DropReason::LateEvent);
        }
        let window = self.accept_at(s.occurred_at);
        window.searches += 1;
        *window.search_volume.entry(query).or_default() += 1;
        Ack::Accepted
    }

    /// Ingests a log in event-time order, generating queries for all posts
    /// up front on the configured worker count, and sealing windows as the
    /// watermark advances.
    pub fn ingest_log(&mut self, log: &EventLog) -> Vec<WindowSummary> {
        for c in &log.creators {
            self.register_creator(c.clone());
        }
        let posts: Vec<&Post> = log.posts.iter().collect();
        let mut generations = pregenerate(
            self.generator.as_ref(),
            &posts,
            self.cfg.queries_per_post,
            self.cfg.generator_workers,
        );
        let mut sealed = Vec::new();
        for event in log.ordered_events() {
            match event {
                Event::Post(p) => {
                    let generated = generations
                        .remove(&p.post_id)
                        .unwrap_or_else(|| Err("no generation".into()));
                    self.ingest_post(p, generated);
                }
                other => {
                    self.ingest(other);
                }
            }
            sealed.extend(self.advance_watermark());
        }
        sealed
    }

    /// Seals every window whose end is at or before the watermark.
    pub fn advance_watermark(&mut self) -> Vec<WindowSummary> {
        let Some(wm) = self.watermark() else {
            return Vec::new();
        };
        let ready: Vec<i64> = self
            .windows
            .iter()
            .filter(|(i, w)| w.summary.is_none() && (*i + 1) * self.cfg.window_length <= wm)
            .map(|(i, _)| *i)
            .collect();
        ready.into_iter().map(|i| self.seal_window(i)).collect()
    }

    /// Makes a window immutable and rankable. Sealing twice returns the
    /// stored summary unchanged.
    pub fn seal_window(&mut self, index: i64) -> WindowSummary {
        let drops = self.drops;
        let start = index * self.cfg.window_length;
        let w = self.windows.entry(index).or_default();
        w.summary
            .get_or_insert_with(|| WindowSummary {
                window_index: index,
                window_start: start,
                posts: w.posts,
                engagements: w.engagements,
                searches: w.searches,
                distinct_queries: w
                    .search_volume
                    .keys()
                    .chain(w.generated.keys())
                    .collect::<BTreeSet<_>>()
                    .len(),
                drops,
            })
            .clone()
    }

    /// Seals every remaining window (end of stream).
    pub fn seal_all(&mut self) -> Vec<WindowSummary> {
        let open: Vec<i64> = self
            .windows
            .iter()
            .filter(|(_, w)| w.summary.is_none())
            .map(|(i, _)| *i)
            .collect();
        open.into_iter().map(|i| self.seal_window(i)).collect()
    }

    fn sealed(&self, index: i64) -> Result<&Window, PipelineError> {
        match self.windows.get(&index) {
            Some(w) if w.summary.is_some() => Ok(w),
            _ => Err(PipelineError::NotSealed(index)),
        }
    }

    fn origin(&self) -> Option<i64> {
        self.windows.keys().next().copied()
    }

    fn organic(&self, index: i64, query: &str) -> u64 {
        self.windows
            .get(&index)
            .and_then(|w| w.search_volume.get(query))
            .copied()
            .unwrap_or(0)
    }

    fn combined(&self, index: i64, query: &str) -> u64 {
        let generated = self
            .windows
            .get(&index)
            .and_then(|w| w.generated.get(query))
            .map_or(0, |p| p.len() as u64);
        self.organic(index, query) + generated
    }

    /// Whether `observed` at `index` is a burst relative to the trailing
    /// history returned by `count`. Windows too close to the first window
    /// of the store have no history and never burst.
    fn is_burst(&self, index: i64, observed: u64, count: impl Fn(i64) -> u64) -> Result<bool, PipelineError> {
        let h = self.cfg.burst.history_len as i64;
        let Some(origin) = self.origin() else {
            return Ok(false);
        };
        if observed == 0 || index - origin < h {
            return Ok(false);
        }
        let history: Vec<u64> = (index - h..index).map(count).collect();
        let (_, surprise) = window_surprise(&history, observed, &self.cfg.burst)?;
        Ok(surprise >= self.cfg.burst.threshold)
    }

    fn organic_bursts(&self, index: i64, w: &Window) -> Result<Vec<(String, u64)>, PipelineError> {
        let mut out = Vec::new();
        for (q, &vol) in &w.search_volume {
            if self.is_burst(index, vol, |i| self.organic(i, q))? {
                out.push((q.clone(), vol));
            }
        }
        Ok(out)
    }

    fn quality(&self, creator_id: &str) -> CreatorQualityScore {
        self.creators
            .get(creator_id)
            .map(creator_authority)
            .unwrap_or_else(|| CreatorQualityScore::new(0.0).expect("zero is a valid quality"))
    }

    /// Engagement-weighted score of one post within a window.
    fn post_score(&self, w: &Window, post_id: &str) -> f64 {
        let creator_id = self.posts.get(post_id).map_or("", |p| p.creator_id.as_str());
        let counts = w.engagement.get(post_id).copied().unwrap_or_default();
        trending_score(self.quality(creator_id), &counts, &self.cfg.weights)
    }

    /// Every candidate of a sealed window, unordered.
    pub fn candidates(&self, index: i64, variant: MethodVariant) -> Result<Vec<TrendCandidate>, PipelineError> {
        let w = self.sealed(index)?;
        let window_start = index * self.cfg.window_length;
        let make = |query: String, score: f64, search_volume: u64, posts: Vec<String>, source| TrendCandidate {
            query,
            window_start,
            window_length: self.cfg.window_length,
            score,
            search_volume,
            supporting_posts: posts,
            source,
        };

        let mut out = Vec::new();
        match variant {
            MethodVariant::VolumeOnly => {
                for (q, vol) in self.organic_bursts(index, w)? {
                    out.push(make(q, vol as f64, vol, Vec::new(), CandidateSource::Organic));
                }
            }
            MethodVariant::VolumePlusGenerated => {
                let queries: BTreeSet<&String> = w.search_volume.keys().chain(w.generated.keys()).collect();
                for q in queries {
                    let combined = self.combined(index, q);
                    if !self.is_burst(index, combined, |i| self.combined(i, q))? {
                        continue;
                    }
                    let organic = self.organic(index, q);
                    let posts: Vec<String> = w
                        .generated
                        .get(q)
                        .map(|p| p.iter().cloned().collect())
                        .unwrap_or_default();
                    let source = CandidateSource::from_flags(organic > 0, !posts.is_empty())
                        .expect("a burst has positive combined volume");
                    out.push(make(q.clone(), combined as f64, organic, posts, source));
                }
            }
            MethodVariant::RttpFull => {
                let mut by_query: BTreeMap<String, TrendCandidate> = BTreeMap::new();
                for (q, posts) in &w.generated {
                    // BTreeSet order fixes the summation order
                    let score: f64 = posts.iter().map(|p| self.post_score(w, p)).sum();
                    by_query.insert(
                        q.clone(),
                        make(
                            q.clone(),
                            score,
                            self.organic(index, q),
                            posts.iter().cloned().collect(),
                            CandidateSource::Generated,
                        ),
                    );
                }
                if self.cfg.include_organic_bursts {
                    let bursts = self.organic_bursts(index, w)?;
                    for (q, vol) in bursts {
                        let boost = self.cfg.volume_to_score * vol as f64;
                        match by_query.get_mut(&q) {
                            Some(c) => {
                                c.score += boost;
                                c.source = CandidateSource::Both;
                            }
                            None => {
                                by_query.insert(q.clone(), make(q, boost, vol, Vec::new(), CandidateSource::Organic));
                            }
                        }
                    }
                }
                out.extend(by_query.into_values());
            }
        }
        Ok(out)
    }

    /// Top `k` candidates of a sealed window by score, then search volume,
    /// then query text.
    pub fn rank_window(
        &self,
        index: i64,
        variant: MethodVariant,
        k: usize,
    ) -> Result<Vec<TrendCandidate>, PipelineError> {
        Ok(top_k(self.candidates(index, variant)?, k))
    }

    /// Ranks every sealed window in index order and flattens the results
    /// into output rows.
    pub fn rank_all(&self, variant: MethodVariant, k: usize) -> Result<Vec<RankedTrend>, PipelineError> {
        let mut rows = Vec::new();
        for index in self.window_indices() {
            if self.is_sealed(index) {
                rows.extend(RankedTrend::from_ranking(&self.rank_window(index, variant, k)?));
            }
        }
        Ok(rows)
    }
}

/// Total order used for ranking: higher score first, then higher search
/// volume, then lexicographically smaller query.
pub fn rank_order(a: &TrendCandidate, b: &TrendCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.search_volume.cmp(&a.search_volume))
        .then_with(|| a.query.cmp(&b.query))
}

struct Ranked(TrendCandidate);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        rank_order(&self.0, &other.0) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // max-heap top is the worst-ranked kept candidate
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// Bounded selection of the `k` best candidates under [`rank_order`].
pub fn top_k(candidates: impl IntoIterator<Item = TrendCandidate>, k: usize) -> Vec<TrendCandidate> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
    for c in candidates {
        if heap.len() < k {
            heap.push(Ranked(c));
        } else if let Some(worst) = heap.peek() {
            if rank_order(&c, &worst.0) == Ordering::Less {
                heap.pop();
                heap.push(Ranked(c));
            }
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
}

/// One line of a ranked-trends output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTrend {
    pub window_start: Timestamp,
    pub rank: u32,
    pub query: String,
    pub score: f64,
    pub search_volume: u64,
    pub source: CandidateSource,
    pub supporting_posts: Vec<String>,
}

impl RankedTrend {
    pub fn from_ranking(ranking: &[TrendCandidate]) -> Vec<Self> {
        ranking
            .iter()
            .enumerate()
            .map(|(i, c)| Self {
                window_start: c.window_start,
                rank: i as u32 + 1,
                query: c.query.clone(),
                score: c.score,
                search_volume: c.search_volume,
                source: c.source,
                supporting_posts: c.supporting_posts.clone(),
            })
            .collect()
    }
}
