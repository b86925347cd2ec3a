//! Python bindings: the micro-transformer with intervention hooks,
//! steering-direction math, verdict parsing/voting/scoring, triple
//! extraction and the divide-and-conquer head search driven by a Python
//! evaluator.

use ndarray::Array1;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use steerkit::headsearch::{ConfigScore, Evaluator, HeadSearch, SearchThresholds};
use steerkit::microformer::{
    decode_tokens, encode_text, GenerationSettings, HookSet, Microformer, ModelDims, ModelSnapshot,
    PlantedLayout,
};
use steerkit::steering::{DirectionSet, InterventionConfig, SteeringDirection};
use steerkit::sysgraph::{ExtractionBudget, NgramEmbedder, SystemModel};
use steerkit::verdicts::{
    majority_vote as vote, parse_verdict as parse, CaseResult, Prediction, Verdict,
};
use steerkit::HeadAddress;

fn err(e: steerkit::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dims_from_kwargs(
    n_layers: usize,
    n_heads: usize,
    hidden: usize,
    head_dim: usize,
    vocab: usize,
    max_seq: usize,
) -> ModelDims {
    ModelDims {
        n_layers,
        n_heads,
        hidden,
        head_dim,
        vocab,
        max_seq,
    }
}

/// An intervention configuration: (layer, head, alpha, direction) entries.
#[pyclass(name = "Config", module = "steerkit_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: InterventionConfig,
}

#[pymethods]
impl PyConfig {
    /// Builds a config from `(layer, head, alpha, direction)` tuples.
    #[new]
    fn new(entries: Vec<(usize, usize, f64, Vec<f64>)>) -> PyResult<Self> {
        let directions: Vec<SteeringDirection> = entries
            .iter()
            .map(|(layer, head, _, v)| SteeringDirection {
                address: HeadAddress::new(*layer, *head),
                v: Array1::from(v.clone()),
            })
            .collect();
        let alphas: Vec<f64> = entries.iter().map(|e| e.2).collect();
        Ok(Self {
            inner: InterventionConfig::build(&directions, &alphas).map_err(err)?,
        })
    }

    #[staticmethod]
    fn empty() -> Self {
        Self {
            inner: InterventionConfig::empty(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: InterventionConfig::from_json(text).map_err(err)?,
        })
    }

    fn entries(&self) -> Vec<(usize, usize, f64, Vec<f64>)> {
        self.inner
            .entries()
            .iter()
            .map(|e| {
                (
                    e.address.layer,
                    e.address.head,
                    e.alpha,
                    e.direction.to_vec(),
                )
            })
            .collect()
    }

    fn canonical_key(&self) -> String {
        self.inner.canonical_key()
    }

    fn scaled(&self, multiplier: f64) -> Self {
        Self {
            inner: self.inner.scaled(multiplier),
        }
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: InterventionConfig::load(path).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Config({} entries)", self.inner.entries().len())
    }
}

/// The micro-transformer with per-head capture and intervention hooks.
#[pyclass(name = "Model", module = "steerkit_py")]
struct PyModel {
    inner: Microformer,
}

#[pymethods]
impl PyModel {
    /// `variant` is "random" or "planted"; dims default to the desk-scale
    /// 4x8 model with hidden 64 and a byte-level vocab.
    #[new]
    #[pyo3(signature = (variant, seed, n_layers=4, n_heads=8, hidden=64, head_dim=8, vocab=256, max_seq=512))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        variant: &str,
        seed: u64,
        n_layers: usize,
        n_heads: usize,
        hidden: usize,
        head_dim: usize,
        vocab: usize,
        max_seq: usize,
    ) -> PyResult<Self> {
        let dims = dims_from_kwargs(n_layers, n_heads, hidden, head_dim, vocab, max_seq);
        let variant = variant.parse().map_err(err)?;
        Ok(Self {
            inner: Microformer::new(dims, seed, variant).map_err(err)?,
        })
    }

    /// Byte-level generation; returns the decoded continuation.
    #[pyo3(signature = (prompt, max_new_tokens=8, temperature=0.0, seed=0, config=None))]
    fn generate(
        &self,
        prompt: &str,
        max_new_tokens: usize,
        temperature: f64,
        seed: u64,
        config: Option<&PyConfig>,
    ) -> PyResult<String> {
        let hooks = match config {
            Some(c) => HookSet::new(self.inner.dims(), c.inner.to_interventions()).map_err(err)?,
            None => HookSet::empty(),
        };
        let settings = GenerationSettings {
            temperature,
            max_new_tokens,
            seed,
        };
        let tokens = self
            .inner
            .generate(&encode_text(prompt), &settings, &hooks)
            .map_err(err)?;
        Ok(decode_tokens(&tokens))
    }

    /// Final-token activation per requested `(layer, head)`.
    fn capture(&self, prompt: &str, heads: Vec<(usize, usize)>) -> PyResult<Vec<Vec<f64>>> {
        let addresses: Vec<HeadAddress> =
            heads.iter().map(|&(l, h)| HeadAddress::new(l, h)).collect();
        let caps = self
            .inner
            .capture_activations(&encode_text(prompt), &addresses)
            .map_err(err)?;
        Ok(caps.into_iter().map(|c| c.z.to_vec()).collect())
    }

    /// Min-max scaled per-token activation-norm profile.
    fn token_norms(&self, prompt: &str, heads: Vec<(usize, usize)>) -> PyResult<Vec<f64>> {
        let addresses: Vec<HeadAddress> =
            heads.iter().map(|&(l, h)| HeadAddress::new(l, h)).collect();
        let profile =
            steerkit::steering::token_norm_profile(&self.inner, &encode_text(prompt), &addresses)
                .map_err(err)?;
        Ok(profile.scores)
    }

    fn dims(&self) -> (usize, usize, usize, usize, usize, usize) {
        let d = self.inner.dims();
        (
            d.n_layers, d.n_heads, d.hidden, d.head_dim, d.vocab, d.max_seq,
        )
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ModelSnapshot::of(&self.inner).save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ModelSnapshot::load(path)
                .and_then(ModelSnapshot::into_model)
                .map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims();
        format!(
            "Model(variant={}, layers={}, heads={}, hidden={})",
            self.inner.variant(),
            d.n_layers,
            d.n_heads,
            d.hidden
        )
    }
}

/// The planted head's address, its unit direction and the two analytic flip
/// thresholds `(marked, clean)`.
#[pyfunction]
fn planted_oracle(head_dim: usize) -> ((usize, usize), Vec<f64>, (f64, f64)) {
    let addr = PlantedLayout::address();
    (
        (addr.layer, addr.head),
        PlantedLayout::direction(head_dim).to_vec(),
        (
            PlantedLayout::marked_flip_alpha(),
            PlantedLayout::clean_flip_alpha(),
        ),
    )
}

/// Normalized contrastive mean difference between the two sample sets.
#[pyfunction]
fn compute_direction(trues: Vec<Vec<f64>>, falses: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let mut ds = steerkit::steering::ActivationDataset::new();
    let addr = HeadAddress::new(0, 0);
    for z in trues {
        ds.push_true(steerkit::HeadActivation {
            address: addr,
            position: 0,
            z: Array1::from(z),
        });
    }
    for z in falses {
        ds.push_false(steerkit::HeadActivation {
            address: addr,
            position: 0,
            z: Array1::from(z),
        });
    }
    Ok(steerkit::compute_direction(&ds, addr)
        .map_err(err)?
        .v
        .to_vec())
}

/// Parses the final-answer marker: "Yes", "No" or "Abstain".
#[pyfunction]
fn parse_verdict(text: &str) -> String {
    parse(text).prediction.to_string()
}

/// Majority vote over "Yes"/"No"/"Abstain" strings (ties resolve to "No").
#[pyfunction]
fn majority_vote(verdicts: Vec<String>) -> PyResult<String> {
    let parsed: Vec<Verdict> = verdicts
        .iter()
        .map(|s| {
            let prediction = match s.as_str() {
                "Yes" => Prediction::Yes,
                "No" => Prediction::No,
                "Abstain" => Prediction::Abstain,
                other => {
                    return Err(PyValueError::new_err(format!(
                        "verdict must be Yes/No/Abstain, got {other:?}"
                    )))
                }
            };
            Ok(Verdict {
                prediction,
                raw: s.clone(),
                seed: 0,
            })
        })
        .collect::<PyResult<_>>()?;
    Ok(vote(&parsed).map_err(err)?.to_string())
}

/// Precision/recall scoring; `predictions` are "Yes"/"No"/"Abstain".
#[pyfunction]
fn score<'py>(
    py: Python<'py>,
    golds: Vec<bool>,
    predictions: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    if golds.len() != predictions.len() {
        return Err(PyValueError::new_err(
            "golds and predictions differ in length",
        ));
    }
    let cases: Vec<CaseResult> = golds
        .iter()
        .zip(predictions.iter())
        .enumerate()
        .map(|(i, (&gold, p))| {
            let prediction = match p.as_str() {
                "Yes" => Prediction::Yes,
                "No" => Prediction::No,
                _ => Prediction::Abstain,
            };
            CaseResult {
                id: format!("c{i}"),
                gold: Some(gold),
                prediction,
                runs: 1,
                abstained_runs: 0,
                error: None,
            }
        })
        .collect();
    let outcome = steerkit::verdicts::score(&cases).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("precision", outcome.precision)?;
    out.set_item("recall", outcome.recall)?;
    out.set_item("tp", outcome.true_positives)?;
    out.set_item("fp", outcome.false_positives)?;
    out.set_item("fn", outcome.false_negatives)?;
    out.set_item("tn", outcome.true_negatives)?;
    out.set_item("abstentions", outcome.abstentions)?;
    out.set_item("vacuous_precision", outcome.vacuous_precision)?;
    Ok(out)
}

/// Ranks components against the requirement and returns the seed id.
#[pyfunction]
#[pyo3(signature = (model_json, requirement, top_k=5))]
fn select_seed(model_json: &str, requirement: &str, top_k: usize) -> PyResult<String> {
    let model = SystemModel::from_json(model_json).map_err(err)?;
    steerkit::sysgraph::select_seed(&model, requirement, &NgramEmbedder::default(), top_k)
        .map_err(err)
}

/// Breadth-first triple extraction; returns pipe-notation lines.
#[pyfunction]
#[pyo3(signature = (model_json, seed_id, max_triples=60))]
fn extract_triples(model_json: &str, seed_id: &str, max_triples: usize) -> PyResult<Vec<String>> {
    let model = SystemModel::from_json(model_json).map_err(err)?;
    let budget = ExtractionBudget {
        max_triples,
        top_k: 1,
    };
    Ok(
        steerkit::sysgraph::extract_triples(&model, seed_id, &budget)
            .map_err(err)?
            .iter()
            .map(|t| t.to_string())
            .collect(),
    )
}

/// Evaluator backed by a Python callable `(heads, alphas) -> (precision,
/// recall)` where `heads` is a list of `(layer, head)` tuples.
struct CallableEvaluator {
    callable: Py<PyAny>,
}

impl Evaluator for CallableEvaluator {
    fn evaluate(&self, config: &InterventionConfig) -> steerkit::Result<ConfigScore> {
        Python::attach(|py| {
            let heads: Vec<(usize, usize)> = config
                .addresses()
                .iter()
                .map(|a| (a.layer, a.head))
                .collect();
            let alphas = config.alphas();
            let result = self
                .callable
                .call1(py, (heads, alphas))
                .and_then(|r| r.extract::<(f64, f64)>(py))
                .map_err(|e| steerkit::Error::BadInput {
                    path: "python evaluator".into(),
                    reason: e.to_string(),
                })?;
            Ok(ConfigScore::new(result.0, result.1))
        })
    }
}

/// Divide-and-conquer head search over a Python-defined landscape.
/// `evaluate(heads, alphas)` must be deterministic. Returns a dict with the
/// best heads/alphas/scores and the evaluation count.
#[pyfunction]
#[pyo3(signature = (evaluate, n_layers=4, n_heads=8, head_dim=8, min_precision=1.0, min_recall=0.1, alpha0=5.0, max_iterations=50, required_no_improve=5))]
#[allow(clippy::too_many_arguments)]
fn divide_and_conquer<'py>(
    py: Python<'py>,
    evaluate: Py<PyAny>,
    n_layers: usize,
    n_heads: usize,
    head_dim: usize,
    min_precision: f64,
    min_recall: f64,
    alpha0: f64,
    max_iterations: usize,
    required_no_improve: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let dims = ModelDims {
        n_layers,
        n_heads,
        hidden: n_heads * head_dim,
        head_dim,
        vocab: 256,
        max_seq: 16,
    };
    let mut directions = DirectionSet::new();
    for address in dims.all_heads() {
        let mut v = Array1::zeros(head_dim);
        v[0] = 1.0;
        directions.insert(address, SteeringDirection { address, v });
    }
    let thresholds = SearchThresholds {
        min_precision,
        min_recall,
        alpha0,
        max_iterations,
        required_no_improve,
    };
    let evaluator = CallableEvaluator { callable: evaluate };
    let report = HeadSearch::new(&evaluator, &directions, thresholds)
        .and_then(|hs| hs.run(&dims.layer_heads()))
        .map_err(err)?;

    let out = PyDict::new(py);
    out.set_item(
        "best_heads",
        report
            .best
            .heads
            .iter()
            .map(|a| (a.layer, a.head))
            .collect::<Vec<_>>(),
    )?;
    out.set_item("best_alphas", report.best.alphas.clone())?;
    out.set_item("precision", report.best.precision)?;
    out.set_item("recall", report.best.recall)?;
    out.set_item("evaluations", report.evaluation_count)?;
    out.set_item("nodes", report.nodes.len())?;
    out.set_item("below_threshold", report.below_threshold)?;
    Ok(out)
}

#[pymodule]
fn steerkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(planted_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(compute_direction, m)?)?;
    m.add_function(wrap_pyfunction!(parse_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(select_seed, m)?)?;
    m.add_function(wrap_pyfunction!(extract_triples, m)?)?;
    m.add_function(wrap_pyfunction!(divide_and_conquer, m)?)?;
    Ok(())
}
