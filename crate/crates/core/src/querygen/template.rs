use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::normalize_query;
use crate::jsonl::read_jsonl;

use super::{
    assemble_response, extractive_candidates, GeneratorError, GeneratorRequest, GeneratorResponse, QueryGenerator,
};

/// One line of the knowledge sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub term: String,
    pub queries: Vec<String>,
}

/// Maps a normalized term to the queries it is associated with.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeTable {
    entries: BTreeMap<String, Vec<String>>,
    max_term_tokens: usize,
}

impl KnowledgeTable {
    pub fn from_entries<I: IntoIterator<Item = KnowledgeEntry>>(entries: I) -> Self {
        let mut table = Self::default();
        for e in entries {
            let term = normalize_query(&e.term);
            if term.is_empty() {
                continue;
            }
            table.max_term_tokens = table.max_term_tokens.max(term.split(' ').count());
            let slot = table.entries.entry(term).or_default();
            for q in e.queries {
                let q = normalize_query(&q);
                if !q.is_empty() && !slot.contains(&q) {
                    slot.push(q);
                }
            }
        }
        table
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        if !path.is_file() {
            return Err(GeneratorError::Config(format!(
                "knowledge file {} not found",
                path.display()
            )));
        }
        let entries: Vec<KnowledgeEntry> = read_jsonl(path).map_err(|e| GeneratorError::Config(e.to_string()))?;
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Associated queries of every term found as a whole-token span of the
    /// title or body, ordered by first match position (title first).
    pub fn expansions(&self, title: &str, body: &str) -> Vec<&str> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        let mut matched: Vec<(usize, &str)> = Vec::new();
        let mut offset = 0;
        for text in [normalize_query(title), normalize_query(body)] {
            let toks: Vec<&str> = text.split(' ').filter(|t| !t.is_empty()).collect();
            for start in 0..toks.len() {
                for n in 1..=self.max_term_tokens.min(toks.len() - start) {
                    let span = toks[start..start + n].join(" ");
                    if let Some((term, _)) = self.entries.get_key_value(&span) {
                        if !matched.iter().any(|(_, t)| *t == term.as_str()) {
                            matched.push((offset + start, term.as_str()));
                        }
                    }
                }
            }
            offset += toks.len();
        }
        matched.sort();
        matched
            .into_iter()
            .flat_map(|(_, term)| self.entries[term].iter().map(String::as_str))
            .collect()
    }
}

/// Extractive output with knowledge-table associations placed first.
#[derive(Debug, Clone, Default)]
pub struct TemplateGenerator {
    knowledge: KnowledgeTable,
}

impl TemplateGenerator {
    pub const ID: &'static str = "template";

    pub fn new(knowledge: KnowledgeTable) -> Self {
        Self { knowledge }
    }

    pub fn knowledge(&self) -> &KnowledgeTable {
        &self.knowledge
    }
}

impl QueryGenerator for TemplateGenerator {
    fn generator_id(&self) -> &str {
        Self::ID
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse, GeneratorError> {
        req.validate()?;
        let expansions = self.knowledge.expansions(&req.title, &req.body);
        let grams = extractive_candidates(&req.title, &req.body);
        let texts = expansions.into_iter().chain(grams.iter().map(|g| g.text.as_str()));
        Ok(assemble_response(req, Self::ID, texts, None))
    }
}
