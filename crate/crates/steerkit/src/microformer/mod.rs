//! Minimal decoder-only transformer with per-head activation capture and
//! per-head additive intervention hooks.
//!
//! A block applies multi-head causal attention and updates the residual
//! stream as `x + sum_h (z_h + theta_h) . W_O_h`, where `theta_h = alpha * v`
//! is an optional steering vector for head `h`. There is no MLP, no layer
//! norm and no KV cache: every block is exactly the attention residual
//! update, which keeps the head decomposition auditable.

mod attention;
mod model;
mod params;
mod planted;
mod snapshot;

pub use model::{decode_tokens, encode_text, ForwardTrace, Microformer, ResidualState};
pub use params::AttentionParams;
pub use planted::PlantedLayout;
pub use snapshot::ModelSnapshot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// (layer, head) pair naming one attention head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadAddress {
    pub layer: usize,
    pub head: usize,
}

impl HeadAddress {
    pub fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl std::fmt::Display for HeadAddress {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}:H{}", self.layer, self.head)
    }
}

/// Model shape. `n_heads * head_dim` must equal `hidden` so that the output
/// projection is square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden: usize,
    pub head_dim: usize,
    pub vocab: usize,
    pub max_seq: usize,
}

impl ModelDims {
    /// Desk-scale default: 4 layers x 8 heads, hidden 64, byte-level vocab.
    pub fn default_dims() -> Self {
        Self {
            n_layers: 4,
            n_heads: 8,
            hidden: 64,
            head_dim: 8,
            vocab: 256,
            max_seq: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.n_layers,
            self.n_heads,
            self.hidden,
            self.head_dim,
            self.vocab,
            self.max_seq,
        ];
        if fields.contains(&0) {
            return Err(Error::InvalidDims("all dims must be >= 1".into()));
        }
        if self.n_heads * self.head_dim != self.hidden {
            return Err(Error::InvalidDims(format!(
                "n_heads * head_dim must equal hidden ({} * {} != {})",
                self.n_heads, self.head_dim, self.hidden
            )));
        }
        Ok(())
    }

    pub fn check_address(&self, address: HeadAddress) -> Result<()> {
        if address.layer >= self.n_layers || address.head >= self.n_heads {
            return Err(Error::AddressOutOfRange {
                layer: address.layer,
                head: address.head,
                n_layers: self.n_layers,
                n_heads: self.n_heads,
            });
        }
        Ok(())
    }

    /// All head addresses, grouped per layer in index order.
    pub fn layer_heads(&self) -> Vec<Vec<HeadAddress>> {
        (0..self.n_layers)
            .map(|l| (0..self.n_heads).map(|h| HeadAddress::new(l, h)).collect())
            .collect()
    }

    /// All head addresses in (layer, head) order.
    pub fn all_heads(&self) -> Vec<HeadAddress> {
        self.layer_heads().into_iter().flatten().collect()
    }
}

/// Decoding controls. `temperature == 0` selects argmax decoding, which is
/// deterministic for a fixed prompt regardless of the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl GenerationSettings {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            temperature: 0.0,
            max_new_tokens,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }
}

/// One captured head output `z_h` at a token position.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadActivation {
    pub address: HeadAddress,
    pub position: usize,
    pub z: ndarray::Array1<f64>,
}

/// Additive steering applied to one head: `z_h + alpha * direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub address: HeadAddress,
    pub alpha: f64,
    pub direction: ndarray::Array1<f64>,
}

/// Validated set of interventions, indexed by layer for the forward pass.
#[derive(Debug, Clone, Default)]
pub struct HookSet {
    by_layer: std::collections::BTreeMap<usize, Vec<Intervention>>,
}

impl HookSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(dims: &ModelDims, interventions: Vec<Intervention>) -> Result<Self> {
        let mut by_layer: std::collections::BTreeMap<usize, Vec<Intervention>> =
            std::collections::BTreeMap::new();
        for iv in interventions {
            dims.check_address(iv.address)?;
            if iv.direction.len() != dims.head_dim {
                return Err(Error::DimensionMismatch {
                    context: format!("steering direction for {}", iv.address),
                    expected: dims.head_dim,
                    actual: iv.direction.len(),
                });
            }
            by_layer.entry(iv.address.layer).or_default().push(iv);
        }
        Ok(Self { by_layer })
    }

    pub fn for_layer(&self, layer: usize) -> &[Intervention] {
        self.by_layer.get(&layer).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.by_layer.is_empty()
    }
}

/// Which weights a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Seeded Gaussian weights.
    Random,
    /// Mostly-zero weights with one hand-wired sensitive head whose
    /// intervention threshold is known in closed form.
    Planted,
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelVariant::Random => write!(f, "random"),
            ModelVariant::Planted => write!(f, "planted"),
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ModelVariant::Random),
            "planted" => Ok(ModelVariant::Planted),
            other => Err(Error::ConfigParse(format!(
                "unknown model variant {other:?} (expected \"random\" or \"planted\")"
            ))),
        }
    }
}
