use std::collections::{HashMap, HashSet};

use crate::domain::normalize_query;

use super::{assemble_response, GeneratorError, GeneratorRequest, GeneratorResponse, QueryGenerator};

const MAX_NGRAM: usize = 4;

/// Text up to the first `.`, `!` or `?` that is followed by whitespace.
pub fn first_sentence(body: &str) -> &str {
    let mut chars = body.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    return &body[..i];
                }
            }
        }
    }
    body
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ngram {
    pub text: String,
    pub len: usize,
    pub in_title: bool,
    /// Token offset of the first occurrence; title tokens precede body tokens.
    pub position: usize,
}

impl Ngram {
    pub fn score(&self) -> usize {
        self.len + if self.in_title { 2 } else { 0 }
    }
}

fn tokens(text: &str) -> Vec<String> {
    normalize_query(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// All 1- to 4-grams of the normalized title and first body sentence,
/// ordered by score (length, plus 2 when the n-gram occurs in the title),
/// then earliest position, then text.
pub fn extractive_candidates(title: &str, body: &str) -> Vec<Ngram> {
    let title_tokens = tokens(title);
    let sentence_tokens = tokens(first_sentence(body));

    let title_grams: HashSet<String> = (1..=MAX_NGRAM)
        .flat_map(|n| title_tokens.windows(n).map(|w| w.join(" ")))
        .collect();

    let mut by_text: HashMap<String, Ngram> = HashMap::new();
    let segments = [(&title_tokens, 0), (&sentence_tokens, title_tokens.len())];
    for (segment, offset) in segments {
        for n in 1..=MAX_NGRAM {
            for (start, window) in segment.windows(n).enumerate() {
                let text = window.join(" ");
                let position = offset + start;
                by_text
                    .entry(text.clone())
                    .and_modify(|g| g.position = g.position.min(position))
                    .or_insert_with(|| Ngram {
                        in_title: title_grams.contains(&text),
                        text,
                        len: n,
                        position,
                    });
            }
        }
    }

    let mut grams: Vec<Ngram> = by_text.into_values().collect();
    grams.sort_by(|a, b| {
        b.score()
            .cmp(&a.score())
            .then(a.position.cmp(&b.position))
            .then_with(|| a.text.cmp(&b.text))
    });
    grams
}

/// Copies the highest-scoring n-grams out of the post text.
#[derive(Debug, Clone, Default)]
pub struct ExtractiveGenerator;

impl ExtractiveGenerator {
    pub const ID: &'static str = "extractive";
}

impl QueryGenerator for ExtractiveGenerator {
    fn generator_id(&self) -> &str {
        Self::ID
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError> {
        req.validate()?;
        let grams = extractive_candidates(&req.title, &req.body);
        Ok(assemble_response(
            req,
            Self::ID,
            grams.iter().map(|g| g.text.as_str()),
            None,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gen(title: &str, body: &str, k: usize) -> Vec<String> {
        ExtractiveGenerator
            .generate(&GeneratorRequest::new("p", title, body, k))
            .unwrap()
            .queries
            .into_iter()
            .map(|q| q.text)
            .collect()
    }

    /// Exhaustive reference: every contiguous token span of length 1..=4
    /// scored independently, then a stable sort of all spans.
    fn brute_force(title: &str, body: &str, k: usize) -> Vec<String> {
        let t = tokens(title);
        let s = tokens(first_sentence(body));
        let mut all: Vec<(usize, usize, String)> = Vec::new();
        let joined: Vec<(usize, &Vec<String>)> = vec![(0, &t), (t.len(), &s)];
        for (off, seg) in joined {
            for i in 0..seg.len() {
                for n in 1..=4 {
                    if i + n > seg.len() {
                        break;
                    }
                    let text = seg[i..i + n].join(" ");
                    let in_title = (0..t.len()).any(|j| j + n <= t.len() && t[j..j + n].join(" ") == text);
                    let score = n + if in_title { 2 } else { 0 };
                    all.push((score, off + i, text));
                }
            }
        }
        all.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out: Vec<String> = Vec::new();
        for (_, _, text) in all {
            if out.len() == k {
                break;
            }
            if !out.contains(&text) {
                out.push(text);
            }
        }
        out
    }

    #[test]
    fn mounts_of_mayhem() {
        assert_eq!(
            gen("mounts of mayhem", "", 3),
            vec!["mounts of mayhem", "mounts of", "of mayhem"]
        );
        assert_eq!(brute_force("mounts of mayhem", "", 3), gen("mounts of mayhem", "", 3));
    }

    #[test]
    fn taylor_swift_title() {
        assert_eq!(
            gen("Taylor Swift announces tour", "", 3),
            vec![
                "taylor swift announces tour",
                "taylor swift announces",
                "swift announces tour"
            ]
        );
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(gen("minecraft", "", 3), vec!["minecraft"]);
        assert_eq!(gen("x", "", 1), vec!["x"]);
        assert!(ExtractiveGenerator
            .generate(&GeneratorRequest::new("p", "", "", 3))
            .is_err());
    }

    #[test]
    fn title_repeated_in_body_changes_nothing() {
        let title = "new minecraft update drops today";
        assert_eq!(gen(title, &format!("{title}. More text here."), 3), gen(title, "", 3));
    }

    #[test]
    fn body_first_sentence_only() {
        assert_eq!(first_sentence("One two. Three four"), "One two");
        assert_eq!(first_sentence("v1.2 is out! yes"), "v1.2 is out");
        assert_eq!(first_sentence("no terminator"), "no terminator");
        // body-only n-grams rank by length alone
        assert_eq!(
            gen("", "alpha beta. gamma delta epsilon", 2),
            vec!["alpha beta", "alpha"]
        );
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(
            title in prop::collection::vec("[a-d]{1,2}", 0..7),
            body in prop::collection::vec("[a-d]{1,2}[.]?", 0..7),
            k in 1usize..6,
        ) {
            let title = title.join(" ");
            let body = body.join(" ");
            prop_assume!(!title.is_empty() || !body.is_empty());
            prop_assert_eq!(gen(&title, &body, k), brute_force(&title, &body, k));
        }
    }
}
