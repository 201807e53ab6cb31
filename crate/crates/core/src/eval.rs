//! Ranking metrics and the recall-based retraining trigger.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CandidateSource, TrendCandidate};
use crate::pipeline::{rank_order, RankedTrend};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no samples")]
    NoSamples,
    #[error("uninitialized baseline")]
    UninitializedBaseline,
    #[error("invalid evaluation parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallSample {
    pub post_id: String,
    pub generated: Vec<String>,
    pub ground_truth: BTreeSet<String>,
}

/// Fraction of samples with at least one ground-truth query among the
/// first `k` generations.
pub fn recall_at_k(samples: &[RecallSample], k: usize) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    if k == 0 {
        return Err(EvalError::InvalidParameter("k must be >= 1".into()));
    }
    let hits = samples
        .iter()
        .filter(|s| s.generated.iter().take(k).any(|q| s.ground_truth.contains(q)))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// `|top-k queries ∩ labeled_true| / min(k, |ranked|)`, or 0 for an empty list.
pub fn precision_at_k(ranked: &[TrendCandidate], labeled_true: &HashSet<String>, k: usize) -> f64 {
    precision_of_queries(ranked.iter().map(|c| c.query.as_str()), labeled_true, k)
}

pub fn precision_of_queries<'a>(
    ranked: impl IntoIterator<Item = &'a str>,
    labeled_true: &HashSet<String>,
    k: usize,
) -> f64 {
    let top: Vec<&str> = ranked.into_iter().take(k).collect();
    if top.is_empty() {
        return 0.0;
    }
    let hits: HashSet<&str> = top.iter().copied().filter(|q| labeled_true.contains(*q)).collect();
    hits.len() as f64 / top.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropMode {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub k: usize,
    pub drop_threshold: f64,
    pub baseline_recall: f64,
    pub mode: DropMode,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            k: 3,
            drop_threshold: 0.10,
            baseline_recall: 0.0,
            mode: DropMode::Relative,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k == 0 {
            return Err(EvalError::InvalidParameter("k must be >= 1".into()));
        }
        if !(self.drop_threshold > 0.0 && self.drop_threshold < 1.0) {
            return Err(EvalError::InvalidParameter(format!(
                "drop_threshold {} not in (0, 1)",
                self.drop_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.baseline_recall) {
            return Err(EvalError::InvalidParameter(format!(
                "baseline_recall {} not in [0, 1]",
                self.baseline_recall
            )));
        }
        Ok(())
    }
}

/// True when recall has regressed from the baseline by more than the
/// configured threshold (relative to the baseline by default).
pub fn should_retrain(current_recall: f64, cfg: &TriggerConfig) -> Result<bool, EvalError> {
    if cfg.baseline_recall <= 0.0 {
        return Err(EvalError::UninitializedBaseline);
    }
    let drop = cfg.baseline_recall - current_recall;
    let drop = match cfg.mode {
        DropMode::Relative => drop / cfg.baseline_recall,
        DropMode::Absolute => drop,
    };
    Ok(drop > cfg.drop_threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendKind {
    Head,
    Tail,
}

/// A labeled trending query and the windows in which it is trending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendLabel {
    pub query: String,
    pub active_windows: Vec<i64>,
    pub kind: TrendKind,
}

/// Collapses per-window rows into one ranking, keeping each query's best
/// row under the window ranking order.
pub fn merge_rankings(rows: &[RankedTrend]) -> Vec<RankedTrend> {
    let as_candidate = |r: &RankedTrend| TrendCandidate {
        query: r.query.clone(),
        window_start: r.window_start,
        window_length: 0,
        score: r.score,
        search_volume: r.search_volume,
        supporting_posts: Vec::new(),
        source: CandidateSource::Organic,
    };
    let mut best: BTreeMap<&str, &RankedTrend> = BTreeMap::new();
    for r in rows {
        best.entry(r.query.as_str())
            .and_modify(|cur| {
                if rank_order(&as_candidate(r), &as_candidate(cur)).is_lt() {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut merged: Vec<RankedTrend> = best.into_values().cloned().collect();
    merged.sort_by(|a, b| rank_order(&as_candidate(a), &as_candidate(b)));
    for (i, r) in merged.iter_mut().enumerate() {
        r.rank = i as u32 + 1;
    }
    merged
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayLayout {
    pub window_length: i64,
    pub windows_per_day: i64,
}

impl DayLayout {
    pub fn day_of_window(&self, window_index: i64) -> i64 {
        window_index.div_euclid(self.windows_per_day)
    }

    pub fn day_of_start(&self, window_start: i64) -> i64 {
        self.day_of_window(window_start.div_euclid(self.window_length))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAt {
    pub k: usize,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub method: String,
    /// Days with at least one labeled trend.
    pub days: usize,
    /// Mean over evaluated days of precision of the merged daily ranking.
    pub precision: Vec<PrecisionAt>,
    pub head_detection: f64,
    pub tail_detection: f64,
}

fn detection_rate(labels: &[&TrendLabel], found: &HashSet<(&str, i64)>) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hit = labels
        .iter()
        .filter(|l| l.active_windows.iter().any(|w| found.contains(&(l.query.as_str(), *w))))
        .count();
    hit as f64 / labels.len() as f64
}

/// Scores one method's per-window rows against trend labels.
///
/// A trend counts as detected when its query appears in the rows of any
/// window in which it is active. Precision is computed per day on the
/// merged daily ranking against the trends active that day.
pub fn evaluate_method(
    method: &str,
    rows: &[RankedTrend],
    labels: &[TrendLabel],
    layout: DayLayout,
    ks: &[usize],
) -> MethodEvaluation {
    let mut labeled_by_day: BTreeMap<i64, HashSet<String>> = BTreeMap::new();
    for l in labels {
        for &w in &l.active_windows {
            labeled_by_day
                .entry(layout.day_of_window(w))
                .or_default()
                .insert(l.query.clone());
        }
    }
    let mut rows_by_day: BTreeMap<i64, Vec<RankedTrend>> = BTreeMap::new();
    for r in rows {
        rows_by_day
            .entry(layout.day_of_start(r.window_start))
            .or_default()
            .push(r.clone());
    }

    let precision = ks
        .iter()
        .map(|&k| {
            let per_day: Vec<f64> = labeled_by_day
                .iter()
                .map(|(day, truth)| {
                    let merged = rows_by_day.get(day).map(|r| merge_rankings(r)).unwrap_or_default();
                    precision_of_queries(merged.iter().map(|r| r.query.as_str()), truth, k)
                })
                .collect();
            let mean = if per_day.is_empty() {
                0.0
            } else {
                per_day.iter().sum::<f64>() / per_day.len() as f64
            };
            PrecisionAt { k, precision: mean }
        })
        .collect();

    let found: HashSet<(&str, i64)> = rows
        .iter()
        .map(|r| (r.query.as_str(), r.window_start.div_euclid(layout.window_length)))
        .collect();
    let of_kind = |kind| labels.iter().filter(|l| l.kind == kind).collect::<Vec<_>>();

    MethodEvaluation {
        method: method.to_string(),
        days: labeled_by_day.len(),
        precision,
        head_detection: detection_rate(&of_kind(TrendKind::Head), &found),
        tail_detection: detection_rate(&of_kind(TrendKind::Tail), &found),
    }
}
