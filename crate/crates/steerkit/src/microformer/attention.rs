//! Scaled dot-product attention with a causal mask.

use ndarray::{s, Array2};

use super::{AttentionParams, ModelDims};

/// Computes all per-head outputs for one layer. Returns the concatenated
/// activation matrix `Z` of shape `(T, n_heads * head_dim)`; columns
/// `[h*head_dim, (h+1)*head_dim)` hold `z_h`.
pub(super) fn attention_z(
    dims: &ModelDims,
    params: &AttentionParams,
    x: &Array2<f64>,
) -> Array2<f64> {
    let t = x.nrows();
    let dh = dims.head_dim;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = x.dot(&params.w_q);
    let k = x.dot(&params.w_k);
    let v = x.dot(&params.w_v);

    let mut z = Array2::zeros((t, dims.n_heads * dh));
    for head in 0..dims.n_heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);

        let mut scores = qh.dot(&kh.t());
        scores.mapv_inplace(|x| x * scale);
        causal_softmax_inplace(&mut scores);

        let zh = scores.dot(&vh);
        z.slice_mut(cols).assign(&zh);
    }
    z
}

/// Row-wise softmax over the causal window `j <= i`, numerically stabilized
/// by subtracting the row max. Future positions get exactly zero weight.
fn causal_softmax_inplace(scores: &mut Array2<f64>) {
    let t = scores.nrows();
    for i in 0..t {
        let mut row = scores.row_mut(i);
        let max = row
            .iter()
            .take(i + 1)
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..t {
            if j <= i {
                let e = (row[j] - max).exp();
                row[j] = e;
                sum += e;
            } else {
                row[j] = 0.0;
            }
        }
        for j in 0..=i {
            row[j] /= sum;
        }
    }
}
