//! Full configuration evaluation: K generations per case, vote, score.

use rayon::prelude::*;

use super::metrics::{score, EvalOutcome};
use super::prompt::parse_verdict;
use super::vote::majority_vote;
use super::{CaseResult, Prediction, RequirementCase, VerdictBackend};
use crate::error::{Error, Result};
use crate::hashutil::derive_seed;
use crate::headsearch::{ConfigScore, Evaluator};
use crate::microformer::GenerationSettings;
use crate::steering::InterventionConfig;

/// Generates K verdicts per case under the intervention, votes, scores.
/// Per-case backend failures are recorded and scored as Abstain rather than
/// aborting the run. Per-case generation parallelizes when the backend
/// allows it; the reduction is serial either way.
pub fn evaluate_config<B: VerdictBackend + Sync + ?Sized>(
    backend: &B,
    cases: &[RequirementCase],
    config: &InterventionConfig,
    k: usize,
    settings: &GenerationSettings,
) -> Result<EvalOutcome> {
    if k == 0 {
        return Err(Error::InvalidThresholds(
            "self-consistency factor K must be >= 1".into(),
        ));
    }
    for case in cases {
        case.gold()?;
    }

    let run_case = |case: &RequirementCase| -> CaseResult {
        let mut verdicts = Vec::with_capacity(k);
        let mut error = None;
        for rep in 0..k {
            let seed = derive_seed(settings.seed, &case.id, rep as u64);
            match backend.respond(case, config, settings, seed) {
                Ok(text) => verdicts.push(parse_verdict(&text).with_seed(seed)),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let abstained_runs = verdicts
            .iter()
            .filter(|v| v.prediction == Prediction::Abstain)
            .count();
        let prediction = if error.is_some() {
            Prediction::Abstain
        } else {
            majority_vote(&verdicts).unwrap_or(Prediction::Abstain)
        };
        CaseResult {
            id: case.id.clone(),
            gold: case.label,
            prediction,
            runs: verdicts.len(),
            abstained_runs,
            error,
        }
    };

    let results: Vec<CaseResult> = if backend.parallel_safe() {
        cases.par_iter().map(run_case).collect()
    } else {
        cases.iter().map(run_case).collect()
    };
    score(&results)
}

/// The evaluator handed to the head search: a backend plus a fixed case set
/// and generation settings.
pub struct ConfigEvaluator<'a, B: VerdictBackend + Sync + ?Sized> {
    pub backend: &'a B,
    pub cases: &'a [RequirementCase],
    pub k: usize,
    pub settings: GenerationSettings,
}

impl<'a, B: VerdictBackend + Sync + ?Sized> ConfigEvaluator<'a, B> {
    pub fn new(
        backend: &'a B,
        cases: &'a [RequirementCase],
        k: usize,
        settings: GenerationSettings,
    ) -> Self {
        Self {
            backend,
            cases,
            k,
            settings,
        }
    }
}

impl<B: VerdictBackend + Sync + ?Sized> Evaluator for ConfigEvaluator<'_, B> {
    fn evaluate(&self, config: &InterventionConfig) -> Result<ConfigScore> {
        let outcome = evaluate_config(self.backend, self.cases, config, self.k, &self.settings)?;
        Ok(ConfigScore::new(outcome.precision, outcome.recall))
    }

    fn parallel_safe(&self) -> bool {
        self.backend.parallel_safe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microformer::{Microformer, ModelDims, ModelVariant, PlantedLayout};
    use crate::steering::SteeringDirection;
    use crate::verdicts::{ScriptedResponder, TransformerBackend};

    fn balanced_cases(n: usize) -> Vec<RequirementCase> {
        (0..n)
            .map(|i| RequirementCase {
                id: format!("c{i}"),
                requirement: format!("The unit shall do thing {i}."),
                triples: vec![],
                label: Some(i % 2 == 0),
            })
            .collect()
    }

    #[test]
    fn always_yes_script_on_balanced_cases() {
        let backend = ScriptedResponder::constant("Final Answer: Yes");
        let cases = balanced_cases(8);
        let out = evaluate_config(
            &backend,
            &cases,
            &InterventionConfig::empty(),
            1,
            &GenerationSettings::greedy(1),
        )
        .unwrap();
        assert_eq!(out.precision, 0.5);
        assert_eq!(out.recall, 1.0);
        assert_eq!(out.abstentions, 0);
    }

    #[test]
    fn k1_equals_k6_on_deterministic_backend() {
        let backend = ScriptedResponder::constant("reasoning... Final Answer: No");
        let cases = balanced_cases(6);
        let settings = GenerationSettings::greedy(1);
        let k1 =
            evaluate_config(&backend, &cases, &InterventionConfig::empty(), 1, &settings).unwrap();
        let k6 =
            evaluate_config(&backend, &cases, &InterventionConfig::empty(), 6, &settings).unwrap();
        assert_eq!(k1.precision, k6.precision);
        assert_eq!(k1.recall, k6.recall);
        for (a, b) in k1.per_case.iter().zip(k6.per_case.iter()) {
            assert_eq!(a.prediction, b.prediction);
            assert_eq!(a.runs, 1);
            assert_eq!(b.runs, 6);
        }
    }

    #[test]
    fn planted_model_above_threshold_goes_all_no() {
        let model = Microformer::new(ModelDims::default_dims(), 9, ModelVariant::Planted).unwrap();
        let dims = *model.dims();
        let backend =
            TransformerBackend::new(model, "G:\n{triples}\nR: {requirement}\nFinal Answer:")
                .unwrap();
        let dir = SteeringDirection {
            address: PlantedLayout::address(),
            v: PlantedLayout::direction(dims.head_dim),
        };
        let cfg =
            InterventionConfig::build(&[dir], &[PlantedLayout::clean_flip_alpha() + 1.0]).unwrap();
        let out = evaluate_config(
            &backend,
            &balanced_cases(4),
            &cfg,
            1,
            &GenerationSettings::greedy(3),
        )
        .unwrap();
        assert_eq!(out.precision, 1.0);
        assert!(out.vacuous_precision);
        assert_eq!(out.recall, 0.0);
    }

    #[test]
    fn empty_config_equals_baseline_exactly() {
        let model = Microformer::new(ModelDims::default_dims(), 9, ModelVariant::Planted).unwrap();
        let backend =
            TransformerBackend::new(model, "G:\n{triples}\nR: {requirement}\nFinal Answer:")
                .unwrap();
        let cases = balanced_cases(4);
        let settings = GenerationSettings::greedy(3);
        let baseline =
            evaluate_config(&backend, &cases, &InterventionConfig::empty(), 1, &settings).unwrap();
        // a zero-strength entry is semantically the same no-op
        let dir = SteeringDirection {
            address: PlantedLayout::address(),
            v: PlantedLayout::direction(8),
        };
        let noop = InterventionConfig::build(&[dir], &[0.0]).unwrap();
        let out = evaluate_config(&backend, &cases, &noop, 1, &settings).unwrap();
        assert_eq!(out.precision, baseline.precision);
        assert_eq!(out.recall, baseline.recall);
        assert_eq!(out.per_case, baseline.per_case);
    }

    #[test]
    fn missing_gold_label_aborts() {
        let backend = ScriptedResponder::constant("Final Answer: Yes");
        let mut cases = balanced_cases(2);
        cases[1].label = None;
        assert!(matches!(
            evaluate_config(
                &backend,
                &cases,
                &InterventionConfig::empty(),
                1,
                &GenerationSettings::greedy(1)
            ),
            Err(Error::MissingGoldLabel { .. })
        ));
    }

    #[test]
    fn backend_failure_scores_case_as_abstain() {
        // no script for c1 and no fallback -> per-case failure
        let mut map = std::collections::BTreeMap::new();
        map.insert("c0".to_string(), "Final Answer: Yes".to_string());
        let backend = ScriptedResponder::new(map);
        let cases = balanced_cases(2);
        let out = evaluate_config(
            &backend,
            &cases,
            &InterventionConfig::empty(),
            1,
            &GenerationSettings::greedy(1),
        )
        .unwrap();
        let failed = out.per_case.iter().find(|c| c.id == "c1").unwrap();
        assert_eq!(failed.prediction, Prediction::Abstain);
        assert!(failed.error.is_some());
        assert!(out.abstentions >= 1);
    }

    #[test]
    fn k_zero_rejected() {
        let backend = ScriptedResponder::constant("Final Answer: Yes");
        assert!(evaluate_config(
            &backend,
            &balanced_cases(2),
            &InterventionConfig::empty(),
            0,
            &GenerationSettings::greedy(1)
        )
        .is_err());
    }
}
