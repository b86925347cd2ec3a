//! Requirement-verification verdicts: prompt construction, answer parsing,
//! self-consistency voting, precision/recall scoring, configuration
//! evaluation and robustness sweeps. This module supplies the `Evaluator`
//! the head search consumes.

mod backend;
mod evaluate;
mod metrics;
mod prompt;
mod sweep;
mod vote;

pub use backend::{ScriptedResponder, TransformerBackend, VerdictBackend};
pub use evaluate::{evaluate_config, ConfigEvaluator};
pub use metrics::{score, EvalOutcome};
pub use prompt::{build_prompt, parse_verdict, ANSWER_MARKER};
pub use sweep::{sweep, SweepRow, SweepTable};
pub use vote::majority_vote;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysgraph::Triple;

/// One labeled verification case: a requirement plus the triple graph
/// extracted for it.
#[derive(Debug, Clone, PartialEq)]
pub struct RequirementCase {
    pub id: String,
    pub requirement: String,
    pub triples: Vec<Triple>,
    /// `true` = fulfilled, `false` = not fulfilled, `None` = unlabeled.
    pub label: Option<bool>,
}

impl RequirementCase {
    pub fn gold(&self) -> Result<bool> {
        self.label.ok_or_else(|| Error::MissingGoldLabel {
            id: self.id.clone(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CaseRecord {
    id: String,
    requirement: String,
    #[serde(default)]
    triples: Vec<String>,
    #[serde(default)]
    label: Option<String>,
}

/// Loads cases from JSONL (`{id, requirement, triples[], label}` per line;
/// label is `"fulfilled"` or `"not_fulfilled"`).
pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<RequirementCase>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_cases(&text).map_err(|e| match e {
        Error::Json(inner) => Error::BadInput {
            path: path.display().to_string(),
            reason: inner.to_string(),
        },
        other => other,
    })
}

pub fn parse_cases(text: &str) -> Result<Vec<RequirementCase>> {
    let mut cases = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: CaseRecord = serde_json::from_str(line)?;
        let label = match record.label.as_deref() {
            None => None,
            Some("fulfilled") => Some(true),
            Some("not_fulfilled") => Some(false),
            Some(other) => {
                return Err(Error::BadInput {
                    path: record.id.clone(),
                    reason: format!(
                        "label must be \"fulfilled\" or \"not_fulfilled\", got {other:?}"
                    ),
                })
            }
        };
        let triples = record
            .triples
            .iter()
            .map(|t| Triple::parse_line(t))
            .collect::<Result<Vec<_>>>()?;
        if record.requirement.trim().is_empty() {
            return Err(Error::BadInput {
                path: record.id.clone(),
                reason: "empty requirement".into(),
            });
        }
        cases.push(RequirementCase {
            id: record.id,
            requirement: record.requirement,
            triples,
            label,
        });
    }
    Ok(cases)
}

/// One generation's parsed answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub prediction: Prediction,
    pub raw: String,
    pub seed: u64,
}

impl Verdict {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Yes,
    No,
    Abstain,
}

impl std::fmt::Display for Prediction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prediction::Yes => write!(f, "Yes"),
            Prediction::No => write!(f, "No"),
            Prediction::Abstain => write!(f, "Abstain"),
        }
    }
}

/// Final per-case record inside an [`EvalOutcome`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    /// `None` means the gold label was missing; `score` rejects that.
    pub gold: Option<bool>,
    pub prediction: Prediction,
    /// Generations completed for this case (K unless the backend failed).
    #[serde(default)]
    pub runs: usize,
    /// Abstaining runs among the K generations (visible even though the
    /// vote resolves them away).
    pub abstained_runs: usize,
    /// Backend failure recorded for this case, which forces an Abstain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Alpha-multiplier x temperature robustness grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub alpha_multipliers: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub repetitions: usize,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidThresholds(
                "sweep repetitions must be >= 1".into(),
            ));
        }
        if self.alpha_multipliers.is_empty() || self.temperatures.is_empty() {
            return Err(Error::InvalidThresholds(
                "sweep grid must have at least one alpha multiplier and temperature".into(),
            ));
        }
        Ok(())
    }
}
