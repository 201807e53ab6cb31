//! Seeded synthetic world: creators, posts, engagement, search logs and
//! planted trends with labels.
//!
//! Head trends are search-heavy with ordinary engagement. Tail trends are
//! search-sparse but posted by high-authority creators and engaged with
//! heavily, so they surface only through engagement plus generated queries.
//! Organic noise spikes on background queries are bursts that are not
//! trends.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AuthoritySignal, Creator, EngagementEvent, EngagementKind, Post, SearchLogEntry, Timestamp};
use crate::eval::{TrendKind, TrendLabel};
use crate::jsonl::{write_jsonl, JsonlError};
use crate::pipeline::{CREATORS_FILE, ENGAGEMENTS_FILE, POSTS_FILE, SEARCHES_FILE};
use crate::querygen::KnowledgeEntry;

pub const TRUTH_FILE: &str = "truth.jsonl";
pub const KNOWLEDGE_FILE: &str = "knowledge.jsonl";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("empty world")]
    EmptyWorld,
    #[error("invalid world config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_creators: usize,
    /// Background (non-trend) posts.
    pub n_posts: usize,
    /// Total windows, including warmup.
    pub horizon: usize,
    pub window_length: i64,
    /// Leading windows with background traffic only.
    pub warmup_windows: usize,
    /// First timestamp; aligned down to a whole day of windows.
    pub start_time: Timestamp,
    pub n_head_trends: usize,
    pub n_tail_trends: usize,
    /// Consecutive windows a trend stays active.
    pub trend_duration: usize,
    pub posts_per_trend: usize,
    pub head_search_rate: f64,
    pub tail_search_rate: f64,
    /// Engagements per post per active window for head-trend posts.
    pub trend_engagement_rate: f64,
    pub tail_engagement_multiplier: f64,
    /// Engagements per background post per window, for a few windows.
    pub background_engagement_rate: f64,
    /// Expected searches per background query per window.
    pub background_query_rate: f64,
    pub vocabulary_size: usize,
    /// Single-window organic spikes on background queries.
    pub n_noise_spikes: usize,
    pub noise_spike_rate: f64,
    pub follower_log_mean: f64,
    pub follower_log_sd: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_creators: 400,
            n_posts: 1500,
            horizon: 72,
            window_length: 3600,
            warmup_windows: 24,
            start_time: 1_699_920_000,
            n_head_trends: 24,
            n_tail_trends: 24,
            trend_duration: 4,
            posts_per_trend: 3,
            head_search_rate: 40.0,
            tail_search_rate: 0.2,
            trend_engagement_rate: 8.0,
            tail_engagement_multiplier: 4.0,
            background_engagement_rate: 1.0,
            background_query_rate: 0.5,
            vocabulary_size: 400,
            n_noise_spikes: 60,
            noise_spike_rate: 25.0,
            follower_log_mean: 6.0,
            follower_log_sd: 2.0,
        }
    }
}

const BACKGROUND_ENGAGEMENT_WINDOWS: usize = 3;

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let rates = [
            ("head_search_rate", self.head_search_rate),
            ("tail_search_rate", self.tail_search_rate),
            ("trend_engagement_rate", self.trend_engagement_rate),
            ("background_engagement_rate", self.background_engagement_rate),
            ("background_query_rate", self.background_query_rate),
            ("noise_spike_rate", self.noise_spike_rate),
        ];
        for (name, r) in rates {
            if !(r.is_finite() && r >= 0.0) {
                return bad(format!("{name} {r} must be finite and >= 0"));
            }
        }
        let trends = self.n_head_trends + self.n_tail_trends;
        let background = self.n_posts > 0 || (self.vocabulary_size > 0 && self.background_query_rate > 0.0);
        if trends == 0 && !background {
            return Err(SimError::EmptyWorld);
        }
        if self.window_length <= 0 {
            return bad("window_length must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.n_tail_trends > 0 && self.tail_search_rate >= self.head_search_rate {
            return bad(format!(
                "tail_search_rate {} must be below head_search_rate {}",
                self.tail_search_rate, self.head_search_rate
            ));
        }
        if !(self.tail_engagement_multiplier.is_finite() && self.tail_engagement_multiplier > 1.0) {
            return bad(format!(
                "tail_engagement_multiplier {} must be > 1",
                self.tail_engagement_multiplier
            ));
        }
        if trends > 0 {
            if self.trend_duration == 0 || self.posts_per_trend == 0 {
                return bad("trend_duration and posts_per_trend must be >= 1".into());
            }
            if self.warmup_windows + self.trend_duration > self.horizon {
                return bad("horizon too short for warmup plus one trend".into());
            }
        }
        if (self.n_posts > 0 || trends > 0) && self.n_creators == 0 {
            return bad("posts need at least one creator".into());
        }
        if (self.n_posts > 0 || self.n_noise_spikes > 0) && self.vocabulary_size == 0 {
            return bad("background posts and noise spikes need a vocabulary".into());
        }
        if self.n_noise_spikes > 0 && self.warmup_windows >= self.horizon {
            return bad("noise spikes need windows after warmup".into());
        }
        if !(self.follower_log_mean.is_finite() && self.follower_log_sd.is_finite() && self.follower_log_sd >= 0.0) {
            return bad("follower distribution parameters must be finite".into());
        }
        Ok(())
    }

    fn origin(&self) -> Timestamp {
        let day = self.window_length * 24;
        self.start_time.div_euclid(day) * day
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldTruth {
    pub planted_trends: Vec<TrendLabel>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct World {
    pub creators: Vec<Creator>,
    pub posts: Vec<Post>,
    pub engagements: Vec<EngagementEvent>,
    pub searches: Vec<SearchLogEntry>,
    pub truth: WorldTruth,
    pub knowledge: Vec<KnowledgeEntry>,
}

impl World {
    pub fn write_to(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|source| JsonlError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_jsonl(&dir.join(CREATORS_FILE), &self.creators)?;
        write_jsonl(&dir.join(POSTS_FILE), &self.posts)?;
        write_jsonl(&dir.join(ENGAGEMENTS_FILE), &self.engagements)?;
        write_jsonl(&dir.join(SEARCHES_FILE), &self.searches)?;
        write_jsonl(&dir.join(TRUTH_FILE), &self.truth.planted_trends)?;
        write_jsonl(&dir.join(KNOWLEDGE_FILE), &self.knowledge)?;
        Ok(())
    }
}

/// Files written by [`World::write_to`], in a fixed order.
pub const WORLD_FILES: [&str; 6] = [
    CREATORS_FILE,
    POSTS_FILE,
    ENGAGEMENTS_FILE,
    SEARCHES_FILE,
    TRUTH_FILE,
    KNOWLEDGE_FILE,
];

pub fn poisson_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive finite rate").sample(rng) as u64
}

/// Per-window search counts of one query active for `windows` windows.
pub fn sample_search_counts<R: Rng + ?Sized>(rate: f64, windows: usize, rng: &mut R) -> Vec<u64> {
    (0..windows).map(|_| poisson_count(rate, rng)).collect()
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const FILLER_TITLES: [&str; 6] = [
    "{} - fans react",
    "Everything we know about {}",
    "{}: what happened today",
    "Watch: {} explained",
    "Why everyone is talking about {}",
    "{} update",
];
const OBLIQUE_TITLES: [&str; 4] = [
    "New {} drop is here",
    "{} is finally out",
    "Hands on with {}",
    "Players can't stop talking about {}",
];
const BACKGROUND_TITLES: [&str; 4] = [
    "My thoughts on {} and {}",
    "{} vs {}: a quick look",
    "Weekend plans: {}, maybe {}",
    "Notes on {} with {}",
];

fn fake_word<R: Rng + ?Sized>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    (0..syllables)
        .map(|_| {
            let onset = ONSETS[rng.random_range(0..ONSETS.len())];
            let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
            format!("{onset}{vowel}")
        })
        .collect()
}

/// Draws `n` distinct phrases of `words` fake words, none in `taken`.
fn fresh_phrases<R: Rng + ?Sized>(n: usize, words: usize, taken: &mut HashSet<String>, rng: &mut R) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let phrase = (0..words).map(|_| fake_word(rng)).collect::<Vec<_>>().join(" ");
        let clashes = phrase.split(' ').any(|w| taken.contains(w));
        if !clashes && taken.insert(phrase.clone()) {
            for w in phrase.split(' ') {
                taken.insert(w.to_string());
            }
            out.push(phrase);
        }
    }
    out
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn fill(template: &str, parts: &[&str]) -> String {
    let mut out = template.to_string();
    for p in parts {
        out = out.replacen("{}", p, 1);
    }
    out
}

fn pick_kind<R: Rng + ?Sized>(rng: &mut R) -> EngagementKind {
    match rng.random_range(0..10) {
        0..=5 => EngagementKind::Reaction,
        6 => EngagementKind::Comment,
        7 => EngagementKind::Reshare,
        _ => EngagementKind::Click,
    }
}

struct Builder<'a> {
    cfg: &'a WorldConfig,
    rng: ChaCha8Rng,
    origin: Timestamp,
    world: World,
    actor_seq: u64,
}

impl Builder<'_> {
    fn window_start(&self, w: usize) -> Timestamp {
        self.origin + w as i64 * self.cfg.window_length
    }

    fn time_in_window(&mut self, w: usize, not_before: Timestamp) -> Timestamp {
        let lo = self.window_start(w).max(not_before);
        let hi = self.window_start(w) + self.cfg.window_length;
        self.rng.random_range(lo..hi)
    }

    fn searches(&mut self, query: &str, w: usize, count: u64) {
        for _ in 0..count {
            let t = self.time_in_window(w, 0);
            self.world.searches.push(SearchLogEntry {
                query: query.to_string(),
                occurred_at: t,
                engaged_post_id: None,
            });
        }
    }

    fn engage(&mut self, post_id: &str, created_at: Timestamp, windows: std::ops::Range<usize>, rate: f64) {
        for w in windows {
            for _ in 0..poisson_count(rate, &mut self.rng) {
                let t = self.time_in_window(w, created_at);
                let kind = pick_kind(&mut self.rng);
                self.actor_seq += 1;
                self.world.engagements.push(EngagementEvent {
                    post_id: post_id.to_string(),
                    kind,
                    occurred_at: t,
                    actor_id: format!("u{:07}", self.actor_seq),
                });
            }
        }
    }
}

/// Generates a world. Identical configs produce identical worlds.
pub fn generate_world(cfg: &WorldConfig) -> Result<World, SimError> {
    cfg.validate()?;
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        origin: cfg.origin(),
        world: World::default(),
        actor_seq: 0,
    };

    // creators, ordered by follower count so the top decile is easy to find
    let followers =
        LogNormal::new(cfg.follower_log_mean, cfg.follower_log_sd).map_err(|e| SimError::Config(e.to_string()))?;
    for i in 0..cfg.n_creators {
        let count = followers.sample(&mut b.rng).round().min(1e12) as u64;
        b.world.creators.push(Creator {
            creator_id: format!("c{i:05}"),
            follower_count: count,
            authority_signals: Vec::new(),
        });
    }
    let mut by_followers: Vec<usize> = (0..cfg.n_creators).collect();
    by_followers.sort_by(|&a, &c| {
        let (fa, fc) = (b.world.creators[a].follower_count, b.world.creators[c].follower_count);
        fc.cmp(&fa).then(a.cmp(&c))
    });
    let top = by_followers[..cfg.n_creators.div_ceil(10)].to_vec();
    for &i in &top[..top.len().div_ceil(2)] {
        b.world.creators[i].authority_signals.push(AuthoritySignal {
            signal_name: "verified".into(),
            value: 1.0,
        });
    }

    let mut taken = HashSet::new();
    let vocabulary = fresh_phrases(cfg.vocabulary_size, 1, &mut taken, &mut b.rng);
    let n_trends = cfg.n_head_trends + cfg.n_tail_trends;
    let trend_queries = fresh_phrases(n_trends, 2, &mut taken, &mut b.rng);
    let aliases = fresh_phrases(n_trends, 2, &mut taken, &mut b.rng);

    // background search traffic
    for query in &vocabulary {
        for w in 0..cfg.horizon {
            let n = poisson_count(cfg.background_query_rate, &mut b.rng);
            b.searches(query, w, n);
        }
    }
    let labeled = cfg.warmup_windows..cfg.horizon;
    for _ in 0..cfg.n_noise_spikes {
        let query = vocabulary[b.rng.random_range(0..vocabulary.len())].clone();
        let w = b.rng.random_range(labeled.clone());
        let n = poisson_count(cfg.noise_spike_rate, &mut b.rng);
        b.searches(&query, w, n);
    }

    // planted trends
    let mut post_seq = 0usize;
    for (t, query) in trend_queries.iter().enumerate() {
        let kind = if t < cfg.n_head_trends {
            TrendKind::Head
        } else {
            TrendKind::Tail
        };
        let first = b
            .rng
            .random_range(cfg.warmup_windows..=cfg.horizon - cfg.trend_duration);
        let active: Vec<usize> = (first..first + cfg.trend_duration).collect();
        let (search_rate, engagement_rate) = match kind {
            TrendKind::Head => (cfg.head_search_rate, cfg.trend_engagement_rate),
            TrendKind::Tail => (
                cfg.tail_search_rate,
                cfg.trend_engagement_rate * cfg.tail_engagement_multiplier,
            ),
        };
        for (&w, n) in active
            .iter()
            .zip(sample_search_counts(search_rate, active.len(), &mut b.rng))
        {
            b.searches(query, w, n);
        }

        let alias = &aliases[t];
        b.world.knowledge.push(KnowledgeEntry {
            term: alias.clone(),
            queries: vec![query.clone()],
        });
        b.world.knowledge.push(KnowledgeEntry {
            term: query.clone(),
            queries: vec![query.clone()],
        });

        for p in 0..cfg.posts_per_trend {
            let creator = match kind {
                TrendKind::Tail => top[b.rng.random_range(0..top.len())],
                TrendKind::Head => b.rng.random_range(0..cfg.n_creators),
            };
            let w = active[p % active.len()];
            let created_at = b.time_in_window(w, 0);
            let (title, body) = if p % 2 == 0 {
                let tpl = FILLER_TITLES[b.rng.random_range(0..FILLER_TITLES.len())];
                (
                    fill(tpl, &[&title_case(query)]),
                    format!("Latest on {query}. More soon."),
                )
            } else {
                let tpl = OBLIQUE_TITLES[b.rng.random_range(0..OBLIQUE_TITLES.len())];
                (
                    fill(tpl, &[&title_case(alias)]),
                    format!("Everyone is trying {alias} today. Details below."),
                )
            };
            post_seq += 1;
            let post_id = format!("p{post_seq:06}");
            b.engage(&post_id, created_at, w..first + cfg.trend_duration, engagement_rate);
            b.world.posts.push(Post {
                post_id,
                creator_id: b.world.creators[creator].creator_id.clone(),
                title,
                body,
                created_at,
                ground_truth_queries: BTreeSet::from([query.clone()]),
            });
        }

        b.world.truth.planted_trends.push(TrendLabel {
            query: query.clone(),
            active_windows: active
                .iter()
                .map(|&w| b.origin.div_euclid(cfg.window_length) + w as i64)
                .collect(),
            kind,
        });
    }

    // background posts
    for _ in 0..cfg.n_posts {
        let creator = b.rng.random_range(0..cfg.n_creators);
        let topic = vocabulary[b.rng.random_range(0..vocabulary.len())].clone();
        let other = vocabulary[b.rng.random_range(0..vocabulary.len())].clone();
        let w = b.rng.random_range(0..cfg.horizon);
        let created_at = b.time_in_window(w, 0);
        let tpl = BACKGROUND_TITLES[b.rng.random_range(0..BACKGROUND_TITLES.len())];
        post_seq += 1;
        let post_id = format!("p{post_seq:06}");
        let end = (w + BACKGROUND_ENGAGEMENT_WINDOWS).min(cfg.horizon);
        b.engage(&post_id, created_at, w..end, cfg.background_engagement_rate);
        b.world.posts.push(Post {
            post_id,
            creator_id: b.world.creators[creator].creator_id.clone(),
            title: fill(tpl, &[&title_case(&topic), &other]),
            body: format!("Some notes about {topic}. Nothing big."),
            created_at,
            ground_truth_queries: BTreeSet::from([topic]),
        });
    }

    let mut world = b.world;
    world
        .posts
        .sort_by(|a, b| (a.created_at, &a.post_id).cmp(&(b.created_at, &b.post_id)));
    world
        .engagements
        .sort_by(|a, b| (a.occurred_at, &a.post_id, &a.actor_id).cmp(&(b.occurred_at, &b.post_id, &b.actor_id)));
    world
        .searches
        .sort_by(|a, b| (a.occurred_at, &a.query).cmp(&(b.occurred_at, &b.query)));
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::normalize_query;
    use std::collections::HashMap;

    fn small() -> WorldConfig {
        WorldConfig {
            n_creators: 50,
            n_posts: 100,
            horizon: 40,
            n_head_trends: 4,
            n_tail_trends: 4,
            vocabulary_size: 60,
            n_noise_spikes: 5,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(generate_world(&small()).unwrap(), generate_world(&small()).unwrap());
        let other = WorldConfig { seed: 43, ..small() };
        assert_ne!(generate_world(&small()).unwrap(), generate_world(&other).unwrap());
    }

    #[test]
    fn no_tail_trends_means_head_only_truth() {
        let w = generate_world(&WorldConfig {
            n_tail_trends: 0,
            ..small()
        })
        .unwrap();
        assert_eq!(w.truth.planted_trends.len(), 4);
        assert!(w.truth.planted_trends.iter().all(|t| t.kind == TrendKind::Head));
    }

    #[test]
    fn empty_world_is_rejected() {
        let cfg = WorldConfig {
            n_head_trends: 0,
            n_tail_trends: 0,
            n_posts: 0,
            background_query_rate: 0.0,
            ..small()
        };
        assert!(matches!(generate_world(&cfg), Err(SimError::EmptyWorld)));
    }

    #[test]
    fn config_checks() {
        let cfg = WorldConfig {
            tail_search_rate: 50.0,
            ..small()
        };
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
        let cfg = WorldConfig {
            tail_engagement_multiplier: 1.0,
            ..small()
        };
        assert!(cfg.validate().is_err());
        let cfg = WorldConfig {
            head_search_rate: -1.0,
            ..small()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn records_are_valid() {
        let w = generate_world(&small()).unwrap();
        let posts: HashMap<&str, &Post> = w.posts.iter().map(|p| (p.post_id.as_str(), p)).collect();
        for p in &w.posts {
            p.validate().unwrap();
        }
        for e in &w.engagements {
            e.validate_against(posts[e.post_id.as_str()]).unwrap();
        }
        for s in &w.searches {
            s.validate().unwrap();
        }
        for c in &w.creators {
            c.validate().unwrap();
        }
        for k in &w.knowledge {
            assert_eq!(normalize_query(&k.term), k.term);
        }
    }

    #[test]
    fn every_trend_is_some_posts_ground_truth() {
        let w = generate_world(&small()).unwrap();
        for t in &w.truth.planted_trends {
            assert!(w.posts.iter().any(|p| p.ground_truth_queries.contains(&t.query)));
        }
    }

    #[test]
    fn tail_trends_have_high_authority_authors() {
        let cfg = small();
        let w = generate_world(&cfg).unwrap();
        let mut counts: Vec<u64> = w.creators.iter().map(|c| c.follower_count).collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let cutoff = counts[cfg.n_creators.div_ceil(10) - 1];
        let followers: HashMap<&str, u64> = w
            .creators
            .iter()
            .map(|c| (c.creator_id.as_str(), c.follower_count))
            .collect();
        for t in w.truth.planted_trends.iter().filter(|t| t.kind == TrendKind::Tail) {
            for p in w.posts.iter().filter(|p| p.ground_truth_queries.contains(&t.query)) {
                assert!(followers[p.creator_id.as_str()] >= cutoff);
            }
        }
    }

    #[test]
    fn tail_volume_expectation() {
        // 0.2 searches per window over 24 windows: 4.8 expected
        let total: u64 = (0..1000)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sample_search_counts(0.2, 24, &mut rng).iter().sum::<u64>()
            })
            .sum();
        let mean = total as f64 / 1000.0;
        // sd of the mean is sqrt(4.8 / 1000) ~ 0.07
        assert!((mean - 4.8).abs() < 0.3, "{mean}");
    }
}
