//! Precision/recall scoring over verdicted cases.

use serde::{Deserialize, Serialize};

use super::{CaseResult, Prediction};
use crate::error::{Error, Result};

/// Metrics for one configuration run. Fulfilled is the positive class;
/// an Abstain scores as a No prediction but stays visible in the counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// Total abstaining runs plus abstaining final predictions.
    pub abstentions: usize,
    /// Precision fell back to 1.0 because there were zero positive
    /// predictions (vacuous truth).
    pub vacuous_precision: bool,
    /// Recall fell back to 1.0 because there were zero gold positives.
    pub vacuous_recall: bool,
    pub per_case: Vec<CaseResult>,
}

/// Confusion counts and metrics. Every case must carry a gold label;
/// `precision = TP/(TP+FP)` with the zero-positive-predictions convention
/// `precision = 1.0` (flagged vacuous), `recall = TP/(TP+FN)`.
pub fn score(cases: &[CaseResult]) -> Result<EvalOutcome> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    let mut abstentions = 0usize;

    for case in cases {
        let gold = case.gold.ok_or_else(|| Error::MissingGoldLabel {
            id: case.id.clone(),
        })?;
        abstentions += case.abstained_runs;
        if case.prediction == Prediction::Abstain {
            abstentions += 1;
        }
        let predicted_yes = case.prediction == Prediction::Yes;
        match (gold, predicted_yes) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }

    let vacuous_precision = tp + fp == 0;
    let precision = if vacuous_precision {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let vacuous_recall = tp + fn_ == 0;
    let recall = if vacuous_recall {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };

    Ok(EvalOutcome {
        precision,
        recall,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        abstentions,
        vacuous_precision,
        vacuous_recall,
        per_case: cases.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn case(id: usize, gold: bool, prediction: Prediction) -> CaseResult {
        CaseResult {
            id: format!("c{id}"),
            gold: Some(gold),
            prediction,
            runs: 1,
            abstained_runs: 0,
            error: None,
        }
    }

    use Prediction::{Abstain, No, Yes};

    #[test]
    fn arithmetic_example() {
        // TP=3, FP=1, FN=2, TN=4 -> precision 0.75, recall 0.60
        let mut cases = Vec::new();
        let mut id = 0;
        for _ in 0..3 {
            cases.push(case(id, true, Yes));
            id += 1;
        }
        cases.push(case(id, false, Yes));
        id += 1;
        for _ in 0..2 {
            cases.push(case(id, true, No));
            id += 1;
        }
        for _ in 0..4 {
            cases.push(case(id, false, No));
            id += 1;
        }
        let out = score(&cases).unwrap();
        assert_eq!(out.precision, 0.75);
        assert_eq!(out.recall, 0.6);
        assert!(!out.vacuous_precision);
    }

    #[test]
    fn zero_positive_predictions_use_vacuous_convention() {
        let cases = vec![
            case(0, true, No),
            case(1, false, No),
            case(2, true, Abstain),
        ];
        let out = score(&cases).unwrap();
        assert_eq!(out.precision, 1.0);
        assert!(out.vacuous_precision);
        assert_eq!(out.recall, 0.0);
        assert_eq!(out.abstentions, 1);
    }

    #[test]
    fn abstain_scores_as_no() {
        let cases = vec![case(0, false, Abstain), case(1, true, Yes)];
        let out = score(&cases).unwrap();
        assert_eq!(out.true_negatives, 1);
        assert_eq!(out.precision, 1.0);
        assert!(!out.vacuous_precision);
        assert_eq!(out.recall, 1.0);
    }

    #[test]
    fn missing_gold_label_rejected() {
        let cases = vec![CaseResult {
            id: "x".into(),
            gold: None,
            prediction: Yes,
            runs: 1,
            abstained_runs: 0,
            error: None,
        }];
        assert!(matches!(score(&cases), Err(Error::MissingGoldLabel { .. })));
    }

    /// Independent confusion-matrix oracle on raw vectors.
    fn oracle(golds: &[bool], preds: &[Prediction]) -> (usize, usize, usize, usize) {
        let mut counts = (0, 0, 0, 0);
        for (g, p) in golds.iter().zip(preds.iter()) {
            let yes = matches!(p, Yes);
            match (g, yes) {
                (true, true) => counts.0 += 1,
                (false, true) => counts.1 += 1,
                (true, false) => counts.2 += 1,
                (false, false) => counts.3 += 1,
            }
        }
        counts
    }

    #[test]
    fn random_vectors_match_confusion_oracle() {
        // cheap LCG so the test stays dependency-free and deterministic
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let n = (next() % 40 + 1) as usize;
            let golds: Vec<bool> = (0..n).map(|_| next() % 2 == 0).collect();
            let preds: Vec<Prediction> = (0..n)
                .map(|_| match next() % 3 {
                    0 => Yes,
                    1 => No,
                    _ => Abstain,
                })
                .collect();
            let cases: Vec<CaseResult> = golds
                .iter()
                .zip(preds.iter())
                .enumerate()
                .map(|(i, (&g, &p))| case(i, g, p))
                .collect();
            let out = score(&cases).unwrap();
            let (tp, fp, fn_, tn) = oracle(&golds, &preds);
            assert_eq!(out.true_positives, tp);
            assert_eq!(out.false_positives, fp);
            assert_eq!(out.false_negatives, fn_);
            assert_eq!(out.true_negatives, tn);
        }
    }

    proptest! {
        #[test]
        fn score_is_order_invariant(
            seq in proptest::collection::vec((any::<bool>(), 0..3usize), 1..30),
            rot in 0..30usize,
        ) {
            let options = [Yes, No, Abstain];
            let cases: Vec<CaseResult> = seq
                .iter()
                .enumerate()
                .map(|(i, &(g, p))| case(i, g, options[p]))
                .collect();
            let mut rotated = cases.clone();
            rotated.rotate_left(rot % cases.len());
            let a = score(&cases).unwrap();
            let b = score(&rotated).unwrap();
            prop_assert_eq!(a.precision, b.precision);
            prop_assert_eq!(a.recall, b.recall);
            prop_assert_eq!(a.true_positives, b.true_positives);
            prop_assert_eq!(a.abstentions, b.abstentions);
        }
    }
}
