use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rttp_core::burst::{window_surprise, BurstConfig};
use rttp_core::domain::{
    AuthoritySignal, Creator, EngagementEvent, EngagementKind, GeneratedQuery, Post, SearchLogEntry,
};
use rttp_core::pipeline::{EventLog, MethodVariant, PipelineConfig, WindowStore};
use rttp_core::querygen::{GeneratorError, GeneratorRequest, GeneratorResponse, QueryGenerator};
use rttp_core::scoring::EngagementWeights;

const L: i64 = 100;
const WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "omega", "sigma"];

/// Each whitespace-separated title word is one query.
struct WordsGenerator;

impl QueryGenerator for WordsGenerator {
    fn generator_id(&self) -> &str {
        "words"
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError> {
        let mut seen = Vec::new();
        for w in req.title.split_whitespace() {
            if !seen.contains(&w) && seen.len() < req.max_queries {
                seen.push(w);
            }
        }
        Ok(GeneratorResponse {
            queries: seen
                .iter()
                .enumerate()
                .map(|(i, w)| GeneratedQuery {
                    post_id: req.post_id.clone(),
                    text: w.to_string(),
                    rank: i as u32 + 1,
                    location: None,
                    generator_id: "words".into(),
                })
                .collect(),
            location: None,
        })
    }
}

fn random_log(seed: u64) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let creators: Vec<Creator> = (0..4)
        .map(|i| Creator {
            creator_id: format!("c{i}"),
            follower_count: rng.random_range(0..100_000),
            authority_signals: if i == 0 {
                vec![AuthoritySignal {
                    signal_name: "verified".into(),
                    value: 1.5,
                }]
            } else {
                vec![]
            },
        })
        .collect();
    let windows = 8;
    let mut posts = Vec::new();
    let mut engagements = Vec::new();
    for p in 0..30 {
        let created_at = rng.random_range(L..L * windows);
        let n_words = rng.random_range(1..=3);
        let title = (0..n_words)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ");
        let post_id = format!("p{p:02}");
        for _ in 0..rng.random_range(0..6) {
            engagements.push(EngagementEvent {
                post_id: post_id.clone(),
                kind: EngagementKind::ALL[rng.random_range(0..4)],
                occurred_at: rng.random_range(created_at..L * windows),
                actor_id: "u".into(),
            });
        }
        posts.push(Post {
            post_id,
            creator_id: format!("c{}", rng.random_range(0..5)),
            title,
            body: String::new(),
            created_at,
            ground_truth_queries: BTreeSet::new(),
        });
    }
    let mut searches = Vec::new();
    for w in 0..windows {
        for q in WORDS {
            let n = if rng.random_bool(0.1) {
                rng.random_range(5..15)
            } else {
                rng.random_range(0..2)
            };
            for _ in 0..n {
                searches.push(SearchLogEntry {
                    query: q.into(),
                    occurred_at: w * L + rng.random_range(0..L),
                    engaged_post_id: None,
                });
            }
        }
    }
    EventLog {
        creators,
        posts,
        engagements,
        searches,
    }
}

fn config(include_organic_bursts: bool) -> PipelineConfig {
    PipelineConfig {
        window_length: L,
        allowed_lateness: 0,
        queries_per_post: 3,
        burst: BurstConfig {
            history_len: 3,
            threshold: 3.0,
            rate_floor: 0.5,
        },
        include_organic_bursts,
        generator_workers: 2,
        ..PipelineConfig::default()
    }
}

fn store(log: &EventLog, cfg: PipelineConfig) -> WindowStore {
    let mut s = WindowStore::new(cfg, Arc::new(WordsGenerator)).unwrap();
    s.ingest_log(log);
    s.seal_all();
    s
}

/// Engagement-only scores recomputed from the raw log.
fn oracle_rttp(log: &EventLog, w: &EngagementWeights) -> BTreeMap<(i64, String), f64> {
    let quality: HashMap<&str, f64> = log
        .creators
        .iter()
        .map(|c| {
            let q = (c.follower_count.max(1) as f64).ln() + c.authority_signals.iter().map(|s| s.value).sum::<f64>();
            (c.creator_id.as_str(), q)
        })
        .collect();
    let mut supporters: BTreeSet<(i64, &str)> = BTreeSet::new();
    let mut engagement_score: HashMap<(i64, &str), f64> = HashMap::new();
    for p in &log.posts {
        supporters.insert((p.created_at.div_euclid(L), p.post_id.as_str()));
    }
    for e in &log.engagements {
        let win = e.occurred_at.div_euclid(L);
        supporters.insert((win, e.post_id.as_str()));
        *engagement_score.entry((win, e.post_id.as_str())).or_default() += w.get(e.kind);
    }
    let by_id: HashMap<&str, &Post> = log.posts.iter().map(|p| (p.post_id.as_str(), p)).collect();
    let mut out = BTreeMap::new();
    for (win, pid) in supporters {
        let post = by_id[pid];
        let score = quality.get(post.creator_id.as_str()).copied().unwrap_or(0.0)
            + engagement_score.get(&(win, pid)).copied().unwrap_or(0.0);
        let words: BTreeSet<&str> = post.title.split_whitespace().take(3).collect();
        for q in words {
            *out.entry((win, q.to_string())).or_insert(0.0) += score;
        }
    }
    out
}

fn oracle_volume_bursts(log: &EventLog, cfg: &BurstConfig) -> BTreeSet<(i64, String)> {
    let mut counts: BTreeMap<(String, i64), u64> = BTreeMap::new();
    let mut min_window = i64::MAX;
    let mut max_window = i64::MIN;
    for s in &log.searches {
        let w = s.occurred_at.div_euclid(L);
        *counts.entry((s.query.clone(), w)).or_default() += 1;
        min_window = min_window.min(w);
        max_window = max_window.max(w);
    }
    // the store's first window may come from a post or engagement instead
    for p in &log.posts {
        min_window = min_window.min(p.created_at.div_euclid(L));
    }
    let mut out = BTreeSet::new();
    for q in WORDS {
        for w in min_window + cfg.history_len as i64..=max_window {
            let observed = counts.get(&(q.to_string(), w)).copied().unwrap_or(0);
            if observed == 0 {
                continue;
            }
            let history: Vec<u64> = (w - cfg.history_len as i64..w)
                .map(|i| counts.get(&(q.to_string(), i)).copied().unwrap_or(0))
                .collect();
            if window_surprise(&history, observed, cfg).unwrap().1 >= cfg.threshold {
                out.insert((w, q.to_string()));
            }
        }
    }
    out
}

#[test]
fn rttp_scores_match_raw_log_oracle() {
    for seed in 0..40 {
        let log = random_log(seed);
        let cfg = config(false);
        let s = store(&log, cfg.clone());
        let want = oracle_rttp(&log, &cfg.weights);
        let mut got = BTreeMap::new();
        for index in s.window_indices() {
            for c in s.candidates(index, MethodVariant::RttpFull).unwrap() {
                got.insert((index, c.query), c.score);
            }
        }
        assert_eq!(
            got.keys().collect::<Vec<_>>(),
            want.keys().collect::<Vec<_>>(),
            "seed {seed}"
        );
        for (k, v) in &want {
            assert!(
                (got[k] - v).abs() <= 1e-9 * v.abs().max(1.0),
                "seed {seed} {k:?}: {} vs {v}",
                got[k]
            );
        }
    }
}

#[test]
fn volume_bursts_match_oracle() {
    let mut total = 0;
    for seed in 0..40 {
        let log = random_log(seed);
        let cfg = config(true);
        let s = store(&log, cfg.clone());
        let got: BTreeSet<(i64, String)> = s
            .window_indices()
            .into_iter()
            .flat_map(|i| {
                s.candidates(i, MethodVariant::VolumeOnly)
                    .unwrap()
                    .into_iter()
                    .map(move |c| (i, c.query))
            })
            .collect();
        assert_eq!(got, oracle_volume_bursts(&log, &cfg.burst), "seed {seed}");
        total += got.len();
    }
    assert!(total > 40, "only {total} bursts");
}

#[test]
fn input_order_does_not_matter() {
    for seed in 0..10 {
        let log = random_log(seed);
        let mut shuffled = log.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        shuffled.posts.shuffle(&mut rng);
        shuffled.engagements.shuffle(&mut rng);
        shuffled.searches.shuffle(&mut rng);
        shuffled.creators.shuffle(&mut rng);
        let (a, b) = (store(&log, config(true)), store(&shuffled, config(true)));
        for v in MethodVariant::ALL {
            assert_eq!(
                a.rank_all(v, 10).unwrap(),
                b.rank_all(v, 10).unwrap(),
                "seed {seed} {v:?}"
            );
        }
    }
}

#[test]
fn more_engagement_never_lowers_a_score() {
    for seed in 0..20 {
        let log = random_log(seed);
        let before = store(&log, config(true));
        let mut more = log.clone();
        let target = &log.posts[seed as usize % log.posts.len()];
        more.engagements.push(EngagementEvent {
            post_id: target.post_id.clone(),
            kind: EngagementKind::Comment,
            occurred_at: target.created_at,
            actor_id: "extra".into(),
        });
        let after = store(&more, config(true));
        let index = target.created_at.div_euclid(L);
        let score = |s: &WindowStore| -> HashMap<String, f64> {
            s.candidates(index, MethodVariant::RttpFull)
                .unwrap()
                .into_iter()
                .map(|c| (c.query, c.score))
                .collect()
        };
        let (b, a) = (score(&before), score(&after));
        for (q, s) in &b {
            assert!(a[q] >= *s, "seed {seed} {q}");
        }
        for q in target.title.split_whitespace() {
            assert!(a[q] > b[q], "seed {seed} {q}");
        }
    }
}

#[test]
fn late_events_are_counted_not_applied() {
    let log = random_log(3);
    let mut s = WindowStore::new(config(false), Arc::new(WordsGenerator)).unwrap();
    s.ingest_log(&log);
    let last = *s.window_indices().last().unwrap();
    let before = s.drops().late;
    let first_post = &log.posts[0];
    s.ingest(rttp_core::pipeline::Event::Engagement(EngagementEvent {
        post_id: first_post.post_id.clone(),
        kind: EngagementKind::Reshare,
        occurred_at: first_post.created_at.max((last - 2) * L),
        actor_id: "late".into(),
    }));
    assert_eq!(s.drops().late, before + 1);
}
