//! Prompt construction and verdict parsing.

use std::sync::OnceLock;

use regex::Regex;

use super::{Prediction, RequirementCase, Verdict};
use crate::error::{Error, Result};

/// The explicit answer statement the prompt instructs the model to end
/// with, and the anchor the parser looks for.
pub const ANSWER_MARKER: &str = "Final Answer:";

/// Substitutes `{triples}` (one pipe-notation triple per line) and
/// `{requirement}` into the template. Both placeholders must be present.
pub fn build_prompt(case: &RequirementCase, template: &str) -> Result<String> {
    for placeholder in ["{triples}", "{requirement}"] {
        if !template.contains(placeholder) {
            return Err(Error::MissingPlaceholder {
                placeholder: placeholder.into(),
            });
        }
    }
    let triples = case
        .triples
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(template
        .replace("{triples}", &triples)
        .replace("{requirement}", &case.requirement))
}

fn marker_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)final answer:\s*(yes|no)\b").expect("valid regex"))
}

/// Case-insensitive match on the last occurrence of the answer marker.
/// A missing marker is the total fallback: Abstain.
pub fn parse_verdict(text: &str) -> Verdict {
    let prediction = marker_pattern()
        .captures_iter(text)
        .last()
        .map(|cap| {
            if cap[1].eq_ignore_ascii_case("yes") {
                Prediction::Yes
            } else {
                Prediction::No
            }
        })
        .unwrap_or(Prediction::Abstain);
    Verdict {
        prediction,
        raw: text.to_string(),
        seed: 0,
    }
}
