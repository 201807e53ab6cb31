//! Creator authority and engagement-weighted trending score.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Creator, EngagementKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("invalid engagement weights: {0}")]
    InvalidWeights(String),
    #[error("no supporting posts")]
    NoSupportingPosts,
}

/// Per-kind engagement weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementWeights {
    pub reaction: f64,
    pub comment: f64,
    pub reshare: f64,
    pub click: f64,
}

impl Default for EngagementWeights {
    fn default() -> Self {
        Self {
            reaction: 1.0,
            comment: 3.0,
            reshare: 2.0,
            click: 0.5,
        }
    }
}

impl EngagementWeights {
    pub fn new(reaction: f64, comment: f64, reshare: f64, click: f64) -> Result<Self, ScoringError> {
        let w = Self {
            reaction,
            comment,
            reshare,
            click,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn get(&self, kind: EngagementKind) -> f64 {
        match kind {
            EngagementKind::Reaction => self.reaction,
            EngagementKind::Comment => self.comment,
            EngagementKind::Reshare => self.reshare,
            EngagementKind::Click => self.click,
        }
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        for kind in EngagementKind::ALL {
            let w = self.get(kind);
            if !(w.is_finite() && w >= 0.0) {
                return Err(ScoringError::InvalidWeights(format!("{kind} weight {w}")));
            }
        }
        // comments are deep engagement and must outweigh reactions
        if self.comment <= self.reaction {
            return Err(ScoringError::InvalidWeights(format!(
                "comment weight {} must exceed reaction weight {}",
                self.comment, self.reaction
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            reaction: self.reaction * factor,
            comment: self.comment * factor,
            reshare: self.reshare * factor,
            click: self.click * factor,
        }
    }
}

/// Engagement tallies per kind for one post.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct EngagementCounts([u64; 4]);

impl EngagementCounts {
    pub fn from_pairs(pairs: &[(EngagementKind, u64)]) -> Self {
        let mut c = Self::default();
        for &(k, n) in pairs {
            c.0[k.index()] += n;
        }
        c
    }

    pub fn get(&self, kind: EngagementKind) -> u64 {
        self.0[kind.index()]
    }

    pub fn increment(&mut self, kind: EngagementKind) {
        self.0[kind.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

impl Add for EngagementCounts {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for EngagementCounts {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CreatorQualityScore(f64);

impl CreatorQualityScore {
    /// Returns `None` for negative or non-finite values.
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && value >= 0.0).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `ln(max(1, followers)) + sum of authority signals`.
pub fn creator_authority(creator: &Creator) -> CreatorQualityScore {
    let followers = creator.follower_count.max(1) as f64;
    let signals: f64 = creator.authority_signals.iter().map(|s| s.value).sum();
    CreatorQualityScore(followers.ln() + signals)
}

/// `quality + sum_i w_i * E_i`.
pub fn trending_score(quality: CreatorQualityScore, counts: &EngagementCounts, weights: &EngagementWeights) -> f64 {
    quality.value()
        + EngagementKind::ALL
            .iter()
            .map(|&k| weights.get(k) * counts.get(k) as f64)
            .sum::<f64>()
}

/// Per-query reduction over supporting posts: a plain sum.
pub fn aggregate_candidate_score(post_scores: &[f64]) -> Result<f64, ScoringError> {
    if post_scores.is_empty() {
        return Err(ScoringError::NoSupportingPosts);
    }
    Ok(post_scores.iter().sum())
}
