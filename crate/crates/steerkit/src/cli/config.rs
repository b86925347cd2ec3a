//! Run configuration: one TOML/JSON file plus flag overrides (flags win).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashutil::derive_seed;
use crate::headsearch::SearchThresholds;
use crate::microformer::{GenerationSettings, Microformer, ModelDims, ModelVariant};
use crate::sysgraph::ExtractionBudget;
use crate::verdicts::{ScriptedResponder, SweepGrid, TransformerBackend, VerdictBackend};

/// Compact template used when no template file is configured.
pub const DEFAULT_TEMPLATE: &str = include_str!("../../assets/planted_template.txt");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Global seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Worker threads for parallel sections; 0 = available cores.
    pub jobs: usize,
    /// Output directory for run artifacts.
    pub out: PathBuf,
    pub model: ModelSection,
    pub data: DataSection,
    pub search: SearchSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub extract: ExtractSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            jobs: 0,
            out: PathBuf::from("runs"),
            model: ModelSection::default(),
            data: DataSection::default(),
            search: SearchSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            extract: ExtractSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    /// "random" or "planted".
    pub variant: String,
    /// Weight seed; derived from the global seed when absent.
    pub seed: Option<u64>,
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden: usize,
    pub head_dim: usize,
    pub vocab: usize,
    pub max_seq: usize,
    /// Load weights from a snapshot instead of constructing them.
    pub snapshot: Option<PathBuf>,
    /// "transformer" or "scripted".
    pub backend: String,
    /// Response map for the scripted backend.
    pub responses: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let dims = ModelDims::default_dims();
        Self {
            variant: "planted".into(),
            seed: None,
            n_layers: dims.n_layers,
            n_heads: dims.n_heads,
            hidden: dims.hidden,
            head_dim: dims.head_dim,
            vocab: dims.vocab,
            max_seq: dims.max_seq,
            snapshot: None,
            backend: "transformer".into(),
            responses: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DataSection {
    pub cases: Option<PathBuf>,
    pub template: Option<PathBuf>,
    /// Share of each label class reserved for direction identification.
    pub direction_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSection {
    pub min_precision: f64,
    pub min_recall: f64,
    pub alpha0: f64,
    pub max_iterations: usize,
    pub required_no_improve: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let th = SearchThresholds::default();
        Self {
            min_precision: th.min_precision,
            min_recall: th.min_recall,
            alpha0: th.alpha0,
            max_iterations: th.max_iterations,
            required_no_improve: th.required_no_improve,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Self-consistency factor K.
    pub k: usize,
    pub temperature: f64,
    pub max_new_tokens: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k: 1,
            temperature: 0.0,
            max_new_tokens: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub alpha_multipliers: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub repetitions: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alpha_multipliers: vec![0.6, 0.85, 1.0, 1.2],
            temperatures: vec![0.0, 0.1, 0.5],
            repetitions: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractSection {
    pub max_triples: usize,
    pub top_k: usize,
}

impl Default for ExtractSection {
    fn default() -> Self {
        let b = ExtractionBudget::default();
        Self {
            max_triples: b.max_triples,
            top_k: b.top_k,
        }
    }
}

/// Flag overrides; every `Some` wins over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub k: Option<usize>,
    pub alpha0: Option<f64>,
    pub min_precision: Option<f64>,
    pub min_recall: Option<f64>,
    pub max_triples: Option<usize>,
    pub top_k: Option<usize>,
    pub cases: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub repetitions: Option<usize>,
}

impl RunConfig {
    /// Loads a TOML (`.toml`) or JSON (anything else) config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            toml::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.k {
            self.eval.k = v;
        }
        if let Some(v) = o.alpha0 {
            self.search.alpha0 = v;
        }
        if let Some(v) = o.min_precision {
            self.search.min_precision = v;
        }
        if let Some(v) = o.min_recall {
            self.search.min_recall = v;
        }
        if let Some(v) = o.max_triples {
            self.extract.max_triples = v;
        }
        if let Some(v) = o.top_k {
            self.extract.top_k = v;
        }
        if let Some(v) = &o.cases {
            self.data.cases = Some(v.clone());
        }
        if let Some(v) = &o.template {
            self.data.template = Some(v.clone());
        }
        if let Some(v) = o.repetitions {
            self.sweep.repetitions = v;
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            hidden: self.model.hidden,
            head_dim: self.model.head_dim,
            vocab: self.model.vocab,
            max_seq: self.model.max_seq,
        }
    }

    pub fn build_model(&self) -> Result<Microformer> {
        if let Some(snapshot) = &self.model.snapshot {
            return crate::microformer::ModelSnapshot::load(snapshot)?.into_model();
        }
        let variant: ModelVariant = self.model.variant.parse()?;
        let seed = self
            .model
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, "model-weights", 0));
        Microformer::new(self.dims(), seed, variant)
    }

    pub fn build_backend(&self) -> Result<Box<dyn VerdictBackend>> {
        match self.model.backend.as_str() {
            "transformer" => Ok(Box::new(TransformerBackend::new(
                self.build_model()?,
                self.template_text()?,
            )?)),
            "scripted" => {
                let path = self.model.responses.as_ref().ok_or_else(|| {
                    Error::ConfigParse("scripted backend needs model.responses".into())
                })?;
                Ok(Box::new(ScriptedResponder::from_file(path)?))
            }
            other => Err(Error::ConfigParse(format!(
                "unknown backend {other:?} (expected \"transformer\" or \"scripted\")"
            ))),
        }
    }

    pub fn template_text(&self) -> Result<String> {
        match &self.data.template {
            Some(path) => {
                std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
            }
            None => Ok(DEFAULT_TEMPLATE.to_string()),
        }
    }

    pub fn cases_path(&self) -> Result<&PathBuf> {
        self.data.cases.as_ref().ok_or_else(|| {
            Error::ConfigParse("no cases file configured (set data.cases or pass --cases)".into())
        })
    }

    pub fn thresholds(&self) -> SearchThresholds {
        SearchThresholds {
            min_precision: self.search.min_precision,
            min_recall: self.search.min_recall,
            alpha0: self.search.alpha0,
            max_iterations: self.search.max_iterations,
            required_no_improve: self.search.required_no_improve,
        }
    }

    pub fn budget(&self) -> ExtractionBudget {
        ExtractionBudget {
            max_triples: self.extract.max_triples,
            top_k: self.extract.top_k,
        }
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            alpha_multipliers: self.sweep.alpha_multipliers.clone(),
            temperatures: self.sweep.temperatures.clone(),
            repetitions: self.sweep.repetitions,
        }
    }

    /// Generation settings for a named stage, seeded from the global seed.
    pub fn stage_settings(&self, stage: &str) -> GenerationSettings {
        GenerationSettings {
            temperature: self.eval.temperature,
            max_new_tokens: self.eval.max_new_tokens,
            seed: derive_seed(self.seed, stage, 0),
        }
    }

    pub fn direction_fraction(&self) -> f64 {
        self.data.direction_fraction.unwrap_or(0.25)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_with_overrides() {
        let toml_text = r#"
            seed = 7
            [model]
            variant = "random"
            [search]
            alpha0 = 3.0
        "#;
        let mut cfg: RunConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.variant, "random");
        assert_eq!(cfg.search.alpha0, 3.0);
        assert_eq!(cfg.eval.k, 1);

        cfg.apply(&Overrides {
            seed: Some(99),
            alpha0: Some(8.0),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.search.alpha0, 8.0);
    }

    #[test]
    fn default_template_has_placeholders_and_marker() {
        assert!(DEFAULT_TEMPLATE.contains("{triples}"));
        assert!(DEFAULT_TEMPLATE.contains("{requirement}"));
        assert!(DEFAULT_TEMPLATE.trim_end().ends_with("Final Answer:"));
    }

    #[test]
    fn model_seed_derives_from_global_when_absent() {
        let a = RunConfig {
            seed: 1,
            ..Default::default()
        };
        let b = RunConfig {
            seed: 2,
            ..Default::default()
        };
        let ma = a.build_model().unwrap();
        let mb = b.build_model().unwrap();
        assert_ne!(ma.seed(), mb.seed());
    }
}
