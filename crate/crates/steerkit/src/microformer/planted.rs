//! Planted-head model: a mostly-zero transformer with one hand-wired
//! sensitive head whose intervention threshold is known in closed form.
//!
//! Layout of the reserved residual axes `[0, 16)`:
//!
//! - axis 0 drives the logit of the No-verdict token ('N'),
//! - axes 2..=7 tag the verdict-chain bytes `Y e s N o .` so that after the
//!   first verdict byte the model deterministically spells out "Yes." or
//!   "No..",
//! - axis 8 carries the content marker: the byte `~` embeds there and the
//!   planted head attends to (and reads) exactly that axis,
//! - axis 9 is an always-on bias every byte embeds; it drives the
//!   Yes-verdict logit and the planted head's query.
//!
//! Consequences, exact up to an attention leak below 1e-18:
//!
//! - un-intervened, the first generated byte is 'Y' (logit `YES_MARGIN`
//!   beats everything else),
//! - steering the planted head along its unit direction adds `alpha` to the
//!   No logit, so a prompt without markers flips to 'N' at
//!   `alpha >= YES_MARGIN` and a prompt containing `~` flips at
//!   `alpha >= YES_MARGIN - MARKER_BOOST` (markers already contribute
//!   `MARKER_BOOST` to the No logit),
//! - every other head has a zero output block, so interventions anywhere
//!   else change nothing at all.
//!
//! The sinusoidal positional encoding is masked off the reserved axes so the
//! thresholds stay exact; it is live on `[16, hidden)` as usual.

use ndarray::Array1;

use super::model::Microformer;
use super::params::{gaussian, sinusoidal_positional, AttentionParams};
use super::{HeadAddress, ModelDims, ModelVariant};
use crate::error::{Error, Result};

/// Constants of the planted wiring. All thresholds derive from these.
#[derive(Debug, Clone, Copy)]
pub struct PlantedLayout;

impl PlantedLayout {
    pub const NO_AXIS: usize = 0;
    pub const MARKER_AXIS: usize = 8;
    pub const BIAS_AXIS: usize = 9;
    pub const RESERVED_AXES: usize = 16;

    /// Baseline advantage of the Yes verdict over everything else.
    pub const YES_MARGIN: f64 = 10.0;
    /// Contribution of a `~` marker to the No logit via the planted head.
    pub const MARKER_BOOST: f64 = 2.0;
    /// Logit weight that locks each verdict-chain successor in place.
    pub const CHAIN_GAIN: f64 = 1e4;
    /// Query/key gain; marker attention mass is `1 - O(exp(-50))`.
    pub const ATTN_GAIN: f64 = 12.0;

    pub const MARKER_BYTE: u8 = b'~';

    /// The single sensitive head.
    pub fn address() -> HeadAddress {
        HeadAddress::new(2, 3)
    }

    /// Unit steering direction of the planted head (its first axis).
    pub fn direction(head_dim: usize) -> Array1<f64> {
        let mut v = Array1::zeros(head_dim);
        v[0] = 1.0;
        v
    }

    /// Flip threshold for a prompt with no `~` markers: exactly
    /// `YES_MARGIN` (argmax ties resolve to 'N' < 'Y').
    pub fn clean_flip_alpha() -> f64 {
        Self::YES_MARGIN
    }

    /// Flip threshold for a prompt containing `~` markers.
    pub fn marked_flip_alpha() -> f64 {
        Self::YES_MARGIN - Self::MARKER_BOOST
    }

    /// Verdict-chain bytes and their successors.
    fn chain() -> [(u8, u8); 6] {
        [
            (b'Y', b'e'),
            (b'e', b's'),
            (b's', b'.'),
            (b'N', b'o'),
            (b'o', b'.'),
            (b'.', b'.'),
        ]
    }

    fn chain_tag(byte: u8) -> Option<usize> {
        match byte {
            b'Y' => Some(2),
            b'e' => Some(3),
            b's' => Some(4),
            b'N' => Some(5),
            b'o' => Some(6),
            b'.' => Some(7),
            _ => None,
        }
    }
}

impl Microformer {
    /// Mostly-zero model with the planted head wired at
    /// [`PlantedLayout::address`]. The seed only varies the inert random
    /// tails of text-byte embeddings; all thresholds are seed-independent.
    pub fn planted(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        if dims.hidden < PlantedLayout::RESERVED_AXES + 1 {
            return Err(Error::InvalidDims(format!(
                "planted variant needs hidden > {} (got {})",
                PlantedLayout::RESERVED_AXES,
                dims.hidden
            )));
        }
        if dims.vocab < 128 {
            return Err(Error::InvalidDims(
                "planted variant needs a byte-level vocab (>= 128)".into(),
            ));
        }
        let planted = PlantedLayout::address();
        dims.check_address(planted)?;

        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let text_span = dims.hidden - PlantedLayout::RESERVED_AXES;

        let mut embedding = ndarray::Array2::zeros((dims.vocab, dims.hidden));
        for byte in 0..dims.vocab {
            embedding[[byte, PlantedLayout::BIAS_AXIS]] = 1.0;
            let b = byte as u8;
            if byte < 256 && b == PlantedLayout::MARKER_BYTE {
                embedding[[byte, PlantedLayout::MARKER_AXIS]] = 1.0;
            } else if let Some(tag) = (byte < 256).then(|| PlantedLayout::chain_tag(b)).flatten() {
                embedding[[byte, tag]] = 1.0;
            } else {
                let tail = gaussian(1, text_span, 0.1, &mut rng);
                for (i, &x) in tail.row(0).iter().enumerate() {
                    embedding[[byte, PlantedLayout::RESERVED_AXES + i]] = x;
                }
            }
        }

        let mut layers: Vec<AttentionParams> = (0..dims.n_layers)
            .map(|_| AttentionParams::zeros(&dims))
            .collect();
        {
            let p = &mut layers[planted.layer];
            let col = planted.head * dims.head_dim;
            p.w_q[[PlantedLayout::BIAS_AXIS, col]] = PlantedLayout::ATTN_GAIN;
            p.w_k[[PlantedLayout::MARKER_AXIS, col]] = PlantedLayout::ATTN_GAIN;
            p.w_v[[PlantedLayout::MARKER_AXIS, col]] = PlantedLayout::MARKER_BOOST;
            p.w_o[[col, PlantedLayout::NO_AXIS]] = 1.0;
        }

        let mut unembedding = ndarray::Array2::zeros((dims.hidden, dims.vocab));
        unembedding[[PlantedLayout::BIAS_AXIS, b'Y' as usize]] = PlantedLayout::YES_MARGIN;
        unembedding[[PlantedLayout::NO_AXIS, b'N' as usize]] = 1.0;
        for (from, to) in PlantedLayout::chain() {
            let tag = PlantedLayout::chain_tag(from).expect("chain bytes are tagged");
            unembedding[[tag, to as usize]] = PlantedLayout::CHAIN_GAIN;
        }

        let positional =
            sinusoidal_positional(dims.max_seq, dims.hidden, PlantedLayout::RESERVED_AXES);

        Ok(Microformer::from_parts(
            dims,
            seed,
            ModelVariant::Planted,
            embedding,
            positional,
            layers,
            unembedding,
        ))
    }
}
