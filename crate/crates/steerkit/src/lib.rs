//! Attention-head steering toolkit.
//!
//! The pieces, bottom to top:
//!
//! - [`microformer`]: a desk-scale decoder-only transformer with per-head
//!   activation capture and additive intervention hooks, in random and
//!   planted (analytically wired) variants;
//! - [`steering`]: contrastive steering directions, intervention
//!   configurations and per-token activation-norm profiles;
//! - [`headsearch`]: divide-and-conquer selection of sensitive heads with
//!   per-configuration strength optimization and memoized evaluations;
//! - [`sysgraph`]: system-model ingestion and breadth-first triple
//!   extraction into pipe notation;
//! - [`verdicts`]: prompt construction, verdict parsing, self-consistency
//!   voting, precision/recall scoring and robustness sweeps;
//! - [`cli`]: the `steerkit` binary tying the pipeline together with
//!   reproducible, manifest-tracked run artifacts.

pub mod cli;
pub mod error;
pub mod hashutil;
pub mod headsearch;
pub mod microformer;
pub mod steering;
pub mod sysgraph;
pub mod verdicts;

pub use error::{Error, Result};
pub use microformer::{
    GenerationSettings, HeadActivation, HeadAddress, HookSet, Intervention, Microformer, ModelDims,
    ModelVariant, PlantedLayout,
};
pub use steering::{compute_direction, InterventionConfig, SteeringDirection};
