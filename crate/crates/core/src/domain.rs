//! Shared record types for the content, engagement and search streams,
//! plus the canonical query normalization every other module relies on.
//!
//! Query identity anywhere downstream is byte equality of normalized text.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Integer seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {record}: {detail}")]
pub struct DomainError {
    pub record: &'static str,
    pub detail: String,
}

impl DomainError {
    fn new(record: &'static str, detail: impl Into<String>) -> Self {
        Self {
            record,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthoritySignal {
    pub signal_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Creator {
    pub creator_id: String,
    pub follower_count: u64,
    #[serde(default)]
    pub authority_signals: Vec<AuthoritySignal>,
}

impl Creator {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.creator_id.is_empty() {
            return Err(DomainError::new("creator", "empty creator_id"));
        }
        for s in &self.authority_signals {
            if !(s.value.is_finite() && s.value >= 0.0) {
                return Err(DomainError::new(
                    "creator",
                    format!("signal {} has value {}", s.signal_name, s.value),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub creator_id: String,
    pub title: String,
    pub body: String,
    pub created_at: Timestamp,
    /// Present only in evaluation and training data.
    #[serde(default)]
    pub ground_truth_queries: BTreeSet<String>,
}

impl Post {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.post_id.is_empty() {
            return Err(DomainError::new("post", "empty post_id"));
        }
        if self.created_at <= 0 {
            return Err(DomainError::new(
                "post",
                format!("{}: created_at {} is not positive", self.post_id, self.created_at),
            ));
        }
        for q in &self.ground_truth_queries {
            if q.is_empty() || normalize_query(q) != *q {
                return Err(DomainError::new(
                    "post",
                    format!("{}: ground truth query {q:?} is not normalized", self.post_id),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngagementKind {
    Reaction,
    Comment,
    Reshare,
    Click,
}

impl EngagementKind {
    pub const ALL: [EngagementKind; 4] = [
        EngagementKind::Reaction,
        EngagementKind::Comment,
        EngagementKind::Reshare,
        EngagementKind::Click,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EngagementKind::Reaction => "reaction",
            EngagementKind::Comment => "comment",
            EngagementKind::Reshare => "reshare",
            EngagementKind::Click => "click",
        }
    }
}

impl fmt::Display for EngagementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub post_id: String,
    pub kind: EngagementKind,
    pub occurred_at: Timestamp,
    pub actor_id: String,
}

impl EngagementEvent {
    /// Checks the event against the post it references.
    pub fn validate_against(&self, post: &Post) -> Result<(), DomainError> {
        if self.post_id != post.post_id {
            return Err(DomainError::new("engagement", "post_id mismatch"));
        }
        if self.occurred_at < post.created_at {
            return Err(DomainError::new(
                "engagement",
                format!(
                    "{} on {} at {} precedes post creation {}",
                    self.kind, self.post_id, self.occurred_at, post.created_at
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub country: String,
    #[serde(default)]
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub post_id: String,
    pub text: String,
    pub rank: u32,
    #[serde(default)]
    pub location: Option<Location>,
    pub generator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLogEntry {
    pub query: String,
    pub occurred_at: Timestamp,
    #[serde(default)]
    pub engaged_post_id: Option<String>,
}

impl SearchLogEntry {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.query.is_empty() || normalize_query(&self.query) != self.query {
            return Err(DomainError::new(
                "search log entry",
                format!("query {:?} is not normalized", self.query),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Organic,
    Generated,
    Both,
}

impl CandidateSource {
    pub fn from_flags(organic: bool, generated: bool) -> Option<Self> {
        match (organic, generated) {
            (true, true) => Some(CandidateSource::Both),
            (true, false) => Some(CandidateSource::Organic),
            (false, true) => Some(CandidateSource::Generated),
            (false, false) => None,
        }
    }

    pub fn includes_generated(self) -> bool {
        !matches!(self, CandidateSource::Organic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCandidate {
    pub query: String,
    pub window_start: Timestamp,
    pub window_length: i64,
    pub score: f64,
    pub search_volume: u64,
    pub supporting_posts: Vec<String>,
    pub source: CandidateSource,
}

impl TrendCandidate {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !self.score.is_finite() {
            return Err(DomainError::new("trend candidate", "score is not finite"));
        }
        if self.source.includes_generated() && self.supporting_posts.is_empty() {
            return Err(DomainError::new(
                "trend candidate",
                format!("{}: generated source without supporting posts", self.query),
            ));
        }
        Ok(())
    }
}

fn is_joiner(c: char) -> bool {
    c == '\'' || c == '-'
}

fn normalize_pass(raw: &str) -> String {
    let folded: String = raw.nfkc().collect::<String>().to_lowercase().nfkc().collect();
    let chars: Vec<char> = folded.chars().map(|c| if c == '\u{2019}' { '\'' } else { c }).collect();

    let mut kept = String::with_capacity(folded.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            kept.push(c);
        } else if c.is_whitespace() {
            kept.push(' ');
        } else if is_joiner(c) {
            let before = i > 0 && chars[i - 1].is_alphanumeric();
            let after = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if before && after {
                kept.push(c);
            }
        }
    }

    if !kept.chars().any(char::is_alphanumeric) {
        return String::new();
    }
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical form of a query: NFKC-folded, lowercased, punctuation dropped
/// (apostrophes and hyphens survive between two alphanumerics), whitespace
/// trimmed and collapsed.
///
/// Returns the empty string when the input holds no letters or digits.
/// Case folding and composition can interact (a lowercase mapping may
/// produce combining sequences), so the pass is repeated to a fixed point.
pub fn normalize_query(raw: &str) -> String {
    let mut current = normalize_pass(raw);
    for _ in 0..8 {
        let next = normalize_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collapses_case_and_whitespace() {
        assert_eq!(normalize_query("  Taylor   SWIFT  "), "taylor swift");
        assert_eq!(normalize_query("minecraft"), "minecraft");
    }

    #[test]
    fn strips_punctuation_keeps_intra_word_joiners() {
        assert_eq!(normalize_query("Mounts of Mayhem!!!"), "mounts of mayhem");
        assert_eq!(normalize_query("O'Brien"), "o'brien");
        assert_eq!(normalize_query("O\u{2019}Brien"), "o'brien");
        assert_eq!(normalize_query("spider-man: no way home"), "spider-man no way home");
        assert_eq!(normalize_query("'quoted' - dash"), "quoted dash");
    }

    #[test]
    fn empty_when_no_alphanumerics() {
        assert_eq!(normalize_query(""), "");
        assert_eq!(normalize_query("  !!! -- ''  "), "");
    }

    #[test]
    fn compatibility_folding() {
        // fullwidth letters and the fi ligature fold under NFKC
        assert_eq!(normalize_query("ＡＢＣ ﬁsh"), "abc fish");
    }

    /// Character-by-character reference for ASCII input, written without
    /// the Unicode machinery.
    fn ascii_reference(raw: &str) -> String {
        let bytes: Vec<char> = raw.chars().collect();
        let mut out = String::new();
        for i in 0..bytes.len() {
            let c = bytes[i].to_ascii_lowercase();
            let alnum = |x: char| x.is_ascii_alphanumeric();
            if alnum(c) {
                out.push(c);
            } else if c == ' ' || c == '\t' || c == '\n' {
                out.push(' ');
            } else if (c == '\'' || c == '-')
                && i > 0
                && alnum(bytes[i - 1])
                && i + 1 < bytes.len()
                && alnum(bytes[i + 1])
            {
                out.push(c);
            }
        }
        out.split(' ').filter(|t| !t.is_empty()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn matches_ascii_reference_on_examples() {
        for s in ["Mounts of Mayhem!!!", "  Taylor   SWIFT  ", "a--b", "it's-a me!", "x"] {
            assert_eq!(normalize_query(s), ascii_reference(s), "{s:?}");
        }
    }

    proptest! {
        #[test]
        fn idempotent(s in any::<String>()) {
            let once = normalize_query(&s);
            prop_assert_eq!(normalize_query(&once), once.clone());
        }

        #[test]
        fn ascii_agrees_with_reference(s in "[ -~\t\n]{0,40}") {
            prop_assert_eq!(normalize_query(&s), ascii_reference(&s));
        }
    }

    #[test]
    fn enums_serialize_lowercase() {
        let e = EngagementEvent {
            post_id: "p1".into(),
            kind: EngagementKind::Reshare,
            occurred_at: 12,
            actor_id: "u".into(),
        };
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"kind\":\"reshare\""), "{s}");
        let src = serde_json::to_string(&CandidateSource::Both).unwrap();
        assert_eq!(src, "\"both\"");
    }

    #[test]
    fn post_validation() {
        let mut p = Post {
            post_id: "p".into(),
            creator_id: "c".into(),
            title: "t".into(),
            body: String::new(),
            created_at: 5,
            ground_truth_queries: BTreeSet::from(["minecraft".to_string()]),
        };
        assert!(p.validate().is_ok());
        p.ground_truth_queries.insert("Minecraft".into());
        assert!(p.validate().is_err());
        p.ground_truth_queries.clear();
        p.created_at = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn engagement_must_follow_post() {
        let p = Post {
            post_id: "p".into(),
            creator_id: "c".into(),
            title: "t".into(),
            body: String::new(),
            created_at: 100,
            ground_truth_queries: BTreeSet::new(),
        };
        let mut e = EngagementEvent {
            post_id: "p".into(),
            kind: EngagementKind::Comment,
            occurred_at: 99,
            actor_id: "a".into(),
        };
        assert!(e.validate_against(&p).is_err());
        e.occurred_at = 100;
        assert!(e.validate_against(&p).is_ok());
    }
}
