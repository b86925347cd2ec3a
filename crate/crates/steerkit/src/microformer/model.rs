//! The micro-transformer: embedding, stacked attention blocks, unembedding.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::attention_z;
use super::params::{gaussian, sinusoidal_positional};
use super::{
    AttentionParams, GenerationSettings, HeadActivation, HeadAddress, HookSet, ModelDims,
    ModelVariant,
};
use crate::error::{Error, Result};

/// Residual stream for one forward pass, plus the index of the next block.
#[derive(Debug, Clone)]
pub struct ResidualState {
    pub hidden: Array2<f64>,
    pub layer: usize,
}

/// Everything a forward pass produces: the final residual stream and the
/// pre-intervention head outputs `Z` per layer (`T x n_heads*head_dim`).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub final_hidden: Array2<f64>,
    pub head_outputs: Vec<Array2<f64>>,
}

impl ForwardTrace {
    /// Extract `z_h` at one token position.
    pub fn head_activation(
        &self,
        dims: &ModelDims,
        address: HeadAddress,
        position: usize,
    ) -> Array1<f64> {
        let dh = dims.head_dim;
        self.head_outputs[address.layer]
            .slice(s![position, address.head * dh..(address.head + 1) * dh])
            .to_owned()
    }
}

#[derive(Debug, Clone)]
pub struct Microformer {
    dims: ModelDims,
    seed: u64,
    variant: ModelVariant,
    pub(super) embedding: Array2<f64>,
    pub(super) positional: Array2<f64>,
    pub(super) layers: Vec<AttentionParams>,
    pub(super) unembedding: Array2<f64>,
}

impl Microformer {
    pub fn new(dims: ModelDims, seed: u64, variant: ModelVariant) -> Result<Self> {
        match variant {
            ModelVariant::Random => Self::random(dims, seed),
            ModelVariant::Planted => Self::planted(dims, seed),
        }
    }

    /// Seeded Gaussian weights with sinusoidal positional encoding.
    pub fn random(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = gaussian(dims.vocab, dims.hidden, 0.1, &mut rng);
        let layers = (0..dims.n_layers)
            .map(|_| AttentionParams::random(&dims, &mut rng))
            .collect();
        let unembedding = gaussian(
            dims.hidden,
            dims.vocab,
            1.0 / (dims.hidden as f64).sqrt(),
            &mut rng,
        );
        Ok(Self {
            dims,
            seed,
            variant: ModelVariant::Random,
            embedding,
            positional: sinusoidal_positional(dims.max_seq, dims.hidden, 0),
            layers,
            unembedding,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub(super) fn from_parts(
        dims: ModelDims,
        seed: u64,
        variant: ModelVariant,
        embedding: Array2<f64>,
        positional: Array2<f64>,
        layers: Vec<AttentionParams>,
        unembedding: Array2<f64>,
    ) -> Self {
        Self {
            dims,
            seed,
            variant,
            embedding,
            positional,
            layers,
            unembedding,
        }
    }

    pub fn params(&self, layer: usize) -> &AttentionParams {
        &self.layers[layer]
    }

    /// Token embeddings plus positional encoding.
    pub fn embed_prompt(&self, tokens: &[u32]) -> Result<ResidualState> {
        if tokens.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        if tokens.len() > self.dims.max_seq {
            return Err(Error::ContextOverflow {
                requested: tokens.len(),
                max_seq: self.dims.max_seq,
            });
        }
        let mut hidden = Array2::zeros((tokens.len(), self.dims.hidden));
        for (i, &tok) in tokens.iter().enumerate() {
            if tok as usize >= self.dims.vocab {
                return Err(Error::TokenOutOfRange {
                    token: tok,
                    vocab: self.dims.vocab,
                });
            }
            let row = &self.embedding.row(tok as usize) + &self.positional.row(i);
            hidden.row_mut(i).assign(&row);
        }
        Ok(ResidualState { hidden, layer: 0 })
    }

    /// One attention block: `x + (Z + theta) . W_O`, summed per head.
    /// Hooks for other layers are ignored; `alpha == 0` entries are skipped
    /// so a zero-strength hook is bit-identical to no hook.
    pub fn forward_block(&self, state: ResidualState, hooks: &HookSet) -> Result<ResidualState> {
        let (state, _) = self.block_with_trace(state, hooks)?;
        Ok(state)
    }

    fn block_with_trace(
        &self,
        state: ResidualState,
        hooks: &HookSet,
    ) -> Result<(ResidualState, Array2<f64>)> {
        let layer = state.layer;
        if layer >= self.dims.n_layers {
            return Err(Error::DimensionMismatch {
                context: "layer cursor".into(),
                expected: self.dims.n_layers,
                actual: layer,
            });
        }
        if state.hidden.ncols() != self.dims.hidden {
            return Err(Error::DimensionMismatch {
                context: "residual width".into(),
                expected: self.dims.hidden,
                actual: state.hidden.ncols(),
            });
        }
        let params = &self.layers[layer];
        let z_clean = attention_z(&self.dims, params, &state.hidden);

        let mut z = z_clean.clone();
        let dh = self.dims.head_dim;
        for iv in hooks.for_layer(layer) {
            if iv.alpha == 0.0 {
                continue;
            }
            let cols = iv.address.head * dh..(iv.address.head + 1) * dh;
            let theta = iv.direction.mapv(|d| d * iv.alpha);
            for mut row in z.slice_mut(s![.., cols]).rows_mut() {
                row += &theta;
            }
        }

        let hidden = &state.hidden + &z.dot(&params.w_o);
        if hidden.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteActivation { layer });
        }
        Ok((
            ResidualState {
                hidden,
                layer: layer + 1,
            },
            z_clean,
        ))
    }

    /// Full forward pass over all blocks, recording pre-intervention head
    /// outputs for capture.
    pub fn forward(&self, tokens: &[u32], hooks: &HookSet) -> Result<ForwardTrace> {
        let mut state = self.embed_prompt(tokens)?;
        let mut head_outputs = Vec::with_capacity(self.dims.n_layers);
        for _ in 0..self.dims.n_layers {
            let (next, z) = self.block_with_trace(state, hooks)?;
            head_outputs.push(z);
            state = next;
        }
        Ok(ForwardTrace {
            final_hidden: state.hidden,
            head_outputs,
        })
    }

    /// Logits for the last prompt position.
    pub fn last_logits(&self, tokens: &[u32], hooks: &HookSet) -> Result<Array1<f64>> {
        let trace = self.forward(tokens, hooks)?;
        let last = trace.final_hidden.nrows() - 1;
        Ok(trace.final_hidden.row(last).dot(&self.unembedding))
    }

    /// Final-token activation `z_h` for each requested head, from an
    /// un-intervened pass. Capture never perturbs generation.
    pub fn capture_activations(
        &self,
        tokens: &[u32],
        addresses: &[HeadAddress],
    ) -> Result<Vec<HeadActivation>> {
        for &a in addresses {
            self.dims.check_address(a)?;
        }
        let trace = self.forward(tokens, &HookSet::empty())?;
        let position = tokens.len() - 1;
        Ok(addresses
            .iter()
            .map(|&address| HeadActivation {
                address,
                position,
                z: trace.head_activation(&self.dims, address, position),
            })
            .collect())
    }

    /// Per-position `z_h` matrices (`T x head_dim`) for the requested heads.
    pub fn capture_all_positions(
        &self,
        tokens: &[u32],
        addresses: &[HeadAddress],
    ) -> Result<Vec<(HeadAddress, Array2<f64>)>> {
        for &a in addresses {
            self.dims.check_address(a)?;
        }
        let trace = self.forward(tokens, &HookSet::empty())?;
        let dh = self.dims.head_dim;
        Ok(addresses
            .iter()
            .map(|&a| {
                let z = trace.head_outputs[a.layer]
                    .slice(s![.., a.head * dh..(a.head + 1) * dh])
                    .to_owned();
                (a, z)
            })
            .collect())
    }

    /// Autoregressive continuation. Hooks are applied at every decode step;
    /// the whole prefix is recomputed each step (no KV cache).
    pub fn generate(
        &self,
        prompt: &[u32],
        settings: &GenerationSettings,
        hooks: &HookSet,
    ) -> Result<Vec<u32>> {
        if prompt.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        if settings.temperature < 0.0 {
            return Err(Error::InvalidSettings(format!(
                "temperature must be nonnegative, got {}",
                settings.temperature
            )));
        }
        let total = prompt.len() + settings.max_new_tokens;
        if total > self.dims.max_seq {
            return Err(Error::ContextOverflow {
                requested: total,
                max_seq: self.dims.max_seq,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut tokens = prompt.to_vec();
        for _ in 0..settings.max_new_tokens {
            let logits = self.last_logits(&tokens, hooks)?;
            tokens.push(sample_token(&logits, settings.temperature, &mut rng));
        }
        Ok(tokens[prompt.len()..].to_vec())
    }
}

/// Argmax at temperature 0 (ties -> lowest token id), otherwise multinomial
/// sampling from the temperature-scaled softmax.
fn sample_token(logits: &Array1<f64>, temperature: f64, rng: &mut ChaCha8Rng) -> u32 {
    if temperature == 0.0 {
        let mut best = 0usize;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        return best as u32;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits
        .iter()
        .map(|&l| ((l - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u: f64 = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i as u32;
        }
    }
    (weights.len() - 1) as u32
}

/// Byte-level tokenizer: one token per byte.
pub fn encode_text(text: &str) -> Vec<u32> {
    text.bytes().map(u32::from).collect()
}

/// Lossy byte-level detokenizer.
pub fn decode_tokens(tokens: &[u32]) -> String {
    let bytes: Vec<u8> = tokens.iter().map(|&t| t as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}
