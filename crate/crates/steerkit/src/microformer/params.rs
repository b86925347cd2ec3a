//! Model parameters and seeded initialization.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ModelDims;

/// Per-layer attention projections. `w_q`/`w_k`/`w_v` map the residual
/// stream into per-head subspaces (columns `[h*head_dim, (h+1)*head_dim)`
/// belong to head `h`); `w_o` maps the concatenated head outputs back,
/// with rows `[h*head_dim, (h+1)*head_dim)` forming the per-head block
/// `W_O_h`. Stacking the blocks vertically reconstructs `w_o` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
}

impl AttentionParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        let inner = dims.n_heads * dims.head_dim;
        Self {
            w_q: Array2::zeros((dims.hidden, inner)),
            w_k: Array2::zeros((dims.hidden, inner)),
            w_v: Array2::zeros((dims.hidden, inner)),
            w_o: Array2::zeros((inner, dims.hidden)),
        }
    }

    pub fn random(dims: &ModelDims, rng: &mut ChaCha8Rng) -> Self {
        let inner = dims.n_heads * dims.head_dim;
        let scale = 1.0 / (dims.hidden as f64).sqrt();
        Self {
            w_q: gaussian(dims.hidden, inner, scale, rng),
            w_k: gaussian(dims.hidden, inner, scale, rng),
            w_v: gaussian(dims.hidden, inner, scale, rng),
            w_o: gaussian(inner, dims.hidden, scale, rng),
        }
    }

    /// Column range of head `h` in the q/k/v projections.
    pub fn head_cols(&self, head: usize, head_dim: usize) -> std::ops::Range<usize> {
        head * head_dim..(head + 1) * head_dim
    }

    /// Per-head output block `W_O_h` (rows of `w_o`).
    pub fn w_o_head(&self, head: usize, head_dim: usize) -> ArrayView2<'_, f64> {
        self.w_o
            .slice(s![head * head_dim..(head + 1) * head_dim, ..])
    }
}

pub(super) fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let x: f64 = rng.sample(StandardNormal);
        x * scale
    })
}

/// Fixed sinusoidal positional encoding over `[start_dim, hidden)`.
/// Dims below `start_dim` stay zero (the planted variant reserves them).
pub(super) fn sinusoidal_positional(
    max_seq: usize,
    hidden: usize,
    start_dim: usize,
) -> Array2<f64> {
    let mut pe = Array2::zeros((max_seq, hidden));
    let span = hidden - start_dim;
    for pos in 0..max_seq {
        for i in 0..span {
            let pair = (i / 2) as f64;
            let rate = (pos as f64) / 10_000f64.powf(2.0 * pair / span as f64);
            pe[[pos, start_dim + i]] = if i % 2 == 0 { rate.sin() } else { rate.cos() };
        }
    }
    pe
}
