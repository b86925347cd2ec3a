//! Divide-and-conquer attention-head search over a pluggable configuration
//! evaluator: per-layer recursive halving (divide), recombination of the top
//! performers (conquer), and per-configuration strength tuning
//! (optimize-alphas) with memoized evaluations.

mod search;

pub use search::{HeadSearch, OptimizeResult};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::steering::{DirectionSet, InterventionConfig};

/// Precision/recall of one evaluated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigScore {
    pub precision: f64,
    pub recall: f64,
}

impl ConfigScore {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self { precision, recall }
    }

    /// Lexicographic (precision, then recall) comparison.
    pub fn lex_gt(&self, other: &ConfigScore) -> bool {
        self.precision > other.precision
            || (self.precision == other.precision && self.recall > other.recall)
    }

    pub fn lex_ge(&self, other: &ConfigScore) -> bool {
        !other.lex_gt(self)
    }
}

/// Anything that can score an intervention configuration. Implementations
/// must be deterministic for a fixed config and evaluation seed; the search
/// itself serializes all queue and memo mutations, so `parallel_safe`
/// describes whether the evaluator may parallelize internally.
pub trait Evaluator {
    fn evaluate(&self, config: &InterventionConfig) -> Result<ConfigScore>;

    fn parallel_safe(&self) -> bool {
        false
    }
}

/// Alignment thresholds and alpha-loop controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchThresholds {
    pub min_precision: f64,
    pub min_recall: f64,
    pub alpha0: f64,
    pub max_iterations: usize,
    pub required_no_improve: usize,
}

impl Default for SearchThresholds {
    fn default() -> Self {
        Self {
            min_precision: 1.0,
            min_recall: 0.1,
            alpha0: 5.0,
            max_iterations: 50,
            required_no_improve: 5,
        }
    }
}

impl SearchThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_precision", self.min_precision),
            ("min_recall", self.min_recall),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidThresholds(format!(
                    "{name} must be in [0, 1], got {v}"
                )));
            }
        }
        if !self.alpha0.is_finite() || self.alpha0 <= 0.0 {
            return Err(Error::InvalidThresholds(format!(
                "alpha0 must be > 0, got {}",
                self.alpha0
            )));
        }
        if self.max_iterations == 0 || self.required_no_improve == 0 {
            return Err(Error::InvalidThresholds(
                "max_iterations and required_no_improve must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One evaluated head set with its optimized strengths and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: usize,
    pub heads: Vec<crate::microformer::HeadAddress>,
    pub alphas: Vec<f64>,
    pub precision: f64,
    pub recall: f64,
    pub parent: Option<usize>,
}

impl SearchNode {
    pub fn score(&self) -> ConfigScore {
        ConfigScore::new(self.precision, self.recall)
    }
}

/// Canonical-config-key -> score cache. A key is never evaluated twice.
#[derive(Debug, Clone, Default)]
pub struct Memo {
    map: BTreeMap<String, ConfigScore>,
}

impl Memo {
    pub fn get(&self, key: &str) -> Option<ConfigScore> {
        self.map.get(key).copied()
    }

    pub fn insert(&mut self, key: String, score: ConfigScore) {
        self.map.insert(key, score);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Everything a finished search produced. Node lines persist as JSONL; the
/// best configuration and counters travel with the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchReport {
    pub best: SearchNode,
    pub nodes: Vec<SearchNode>,
    pub evaluation_count: usize,
    pub wall_time_ms: u128,
    /// Set when no divide node met the thresholds and the best node is the
    /// lexicographic maximum instead.
    pub below_threshold: bool,
}

impl SearchReport {
    /// Materializes the best node as a persistable config.
    pub fn best_config(&self, directions: &DirectionSet) -> Result<InterventionConfig> {
        let dirs = self
            .best
            .heads
            .iter()
            .map(|a| {
                directions.get(a).cloned().ok_or(Error::MissingDirection {
                    layer: a.layer,
                    head: a.head,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InterventionConfig::build(&dirs, &self.best.alphas)?.with_provenance("search-best"))
    }

    /// One evaluated node per line: heads, alphas, precision, recall,
    /// parent, timestamp.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let stamp = chrono::Utc::now().to_rfc3339();
        let mut out = String::new();
        for node in &self.nodes {
            let line = serde_json::json!({
                "id": node.id,
                "heads": node.heads,
                "alphas": node.alphas,
                "precision": node.precision,
                "recall": node.recall,
                "parent": node.parent,
                "timestamp": stamp,
            });
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}
