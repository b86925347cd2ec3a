//! Generation backends: the micro-transformer adapter and a scripted test
//! double. The real-LLM adapter is an extension point behind the same trait.

use std::collections::BTreeMap;
use std::path::Path;

use super::prompt::{build_prompt, ANSWER_MARKER};
use super::RequirementCase;
use crate::error::{Error, Result};
use crate::microformer::{decode_tokens, encode_text, GenerationSettings, HookSet, Microformer};
use crate::steering::InterventionConfig;

/// Produces the answer text for one case under an intervention. `seed`
/// varies per (case, repetition); implementations must be deterministic for
/// a fixed (case, config, settings, seed).
pub trait VerdictBackend: Sync {
    fn respond(
        &self,
        case: &RequirementCase,
        config: &InterventionConfig,
        settings: &GenerationSettings,
        seed: u64,
    ) -> Result<String>;

    /// Whether per-case generations may run concurrently.
    fn parallel_safe(&self) -> bool {
        false
    }
}

/// Test double mapping case id -> canned text. Lets every verdicts-level
/// property run without a transformer.
#[derive(Debug, Clone, Default)]
pub struct ScriptedResponder {
    responses: BTreeMap<String, String>,
    fallback: Option<String>,
}

impl ScriptedResponder {
    pub fn new(responses: BTreeMap<String, String>) -> Self {
        Self {
            responses,
            fallback: None,
        }
    }

    /// Same response for every case.
    pub fn constant(text: impl Into<String>) -> Self {
        Self {
            responses: BTreeMap::new(),
            fallback: Some(text.into()),
        }
    }

    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    /// Loads a JSON object `{case id: response text}`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let responses: BTreeMap<String, String> = serde_json::from_str(&text)?;
        Ok(Self::new(responses))
    }
}

impl VerdictBackend for ScriptedResponder {
    fn respond(
        &self,
        case: &RequirementCase,
        _config: &InterventionConfig,
        _settings: &GenerationSettings,
        _seed: u64,
    ) -> Result<String> {
        self.responses
            .get(&case.id)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| Error::BadInput {
                path: case.id.clone(),
                reason: "no scripted response for case".into(),
            })
    }

    fn parallel_safe(&self) -> bool {
        true
    }
}

/// Runs the micro-transformer over the templated prompt with the config's
/// hooks installed. Byte-level models complete the answer line rather than
/// restating the marker, so when the prompt ends with the marker the
/// response is returned as the reassembled final line.
pub struct TransformerBackend {
    model: Microformer,
    template: String,
}

impl TransformerBackend {
    pub fn new(model: Microformer, template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        for placeholder in ["{triples}", "{requirement}"] {
            if !template.contains(placeholder) {
                return Err(Error::MissingPlaceholder {
                    placeholder: placeholder.into(),
                });
            }
        }
        Ok(Self { model, template })
    }

    pub fn model(&self) -> &Microformer {
        &self.model
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn prompt_for(&self, case: &RequirementCase) -> Result<String> {
        build_prompt(case, &self.template)
    }
}

impl VerdictBackend for TransformerBackend {
    fn respond(
        &self,
        case: &RequirementCase,
        config: &InterventionConfig,
        settings: &GenerationSettings,
        seed: u64,
    ) -> Result<String> {
        let prompt = self.prompt_for(case)?;
        let hooks = HookSet::new(self.model.dims(), config.to_interventions())?;
        let run = GenerationSettings {
            temperature: settings.temperature,
            max_new_tokens: settings.max_new_tokens,
            seed,
        };
        let tokens = self.model.generate(&encode_text(&prompt), &run, &hooks)?;
        let text = decode_tokens(&tokens);
        if prompt.ends_with(ANSWER_MARKER) {
            Ok(format!("{ANSWER_MARKER}{text}"))
        } else {
            Ok(text)
        }
    }

    fn parallel_safe(&self) -> bool {
        true
    }
}
