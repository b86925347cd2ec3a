//! The `steerkit` command line: extract | directions | search | eval |
//! sweep | norms, configured by one TOML/JSON file with flag overrides,
//! writing manifest-tracked artifacts.

mod commands;
mod config;
mod manifest;

pub use commands::{
    cmd_directions, cmd_eval, cmd_extract, cmd_norms, cmd_search, cmd_sweep, parse_heads,
    resolve_out, run_search_pipeline, SearchPipeline,
};
pub use config::{Overrides, RunConfig, DEFAULT_TEMPLATE};
pub use manifest::{ArtifactEntry, RunManifest};
