//! Self-consistency majority voting.

use super::{Prediction, Verdict};
use crate::error::{Error, Result};

/// Argmax over the Yes/No counts of K verdicts. Abstains are excluded from
/// the counts; ties and all-Abstain rounds resolve to No (the conservative
/// verdict — a false positive is the costly mistake here).
pub fn majority_vote(verdicts: &[Verdict]) -> Result<Prediction> {
    if verdicts.is_empty() {
        return Err(Error::EmptyVote);
    }
    let yes = verdicts
        .iter()
        .filter(|v| v.prediction == Prediction::Yes)
        .count();
    let no = verdicts
        .iter()
        .filter(|v| v.prediction == Prediction::No)
        .count();
    Ok(if yes > no {
        Prediction::Yes
    } else {
        Prediction::No
    })
}
