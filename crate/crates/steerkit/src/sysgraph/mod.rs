//! System-model ingestion and graph extraction: loads a Capella-style JSON
//! export, picks the requirement-relevant seed component by embedding
//! similarity, and walks the model breadth-first into pipe-notation triples.

mod embed;
mod extract;
mod model;

pub use embed::{cosine_similarity, NgramEmbedder};
pub use extract::{extract_triples, select_seed, select_seed_with, SeedCandidate};
pub use model::{ComponentDef, ExchangeDef, FunctionDef, SystemModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `|subject| |relation| |object|` fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }

    /// Parses one serialized line. Inverse of `Display`, lossless for
    /// entity names free of `|`.
    pub fn parse_line(line: &str) -> Result<Self> {
        let trimmed = line.trim();
        let fail = || Error::MalformedTriple {
            line: line.to_string(),
        };
        if !trimmed.starts_with('|') || !trimmed.ends_with('|') {
            return Err(fail());
        }
        let inner = &trimmed[1..trimmed.len() - 1];
        let parts: Vec<&str> = inner.split("| |").collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty() || p.contains('|')) {
            return Err(fail());
        }
        Ok(Self::new(parts[0], parts[1], parts[2]))
    }
}

impl std::fmt::Display for Triple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "|{}| |{}| |{}|",
            self.subject, self.relation, self.object
        )
    }
}

/// How deep extraction may go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionBudget {
    pub max_triples: usize,
    pub top_k: usize,
}

impl Default for ExtractionBudget {
    fn default() -> Self {
        Self {
            max_triples: 60,
            top_k: 5,
        }
    }
}

impl ExtractionBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_triples == 0 || self.top_k == 0 {
            return Err(Error::InvalidThresholds(
                "extraction budget fields must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic text embedding; similarity is cosine.
pub trait Embedder {
    fn embed(&self, text: &str) -> Vec<f64>;
}
