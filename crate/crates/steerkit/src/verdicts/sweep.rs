//! Alpha/temperature robustness sweeps.

use serde::{Deserialize, Serialize};

use super::evaluate::evaluate_config;
use super::{RequirementCase, SweepGrid, VerdictBackend};
use crate::error::{Error, Result};
use crate::hashutil::derive_seed;
use crate::microformer::GenerationSettings;
use crate::steering::InterventionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha_multiplier: f64,
    pub temperature: f64,
    pub precision_mean: f64,
    pub precision_var: f64,
    pub recall_mean: f64,
    pub recall_var: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Single-repetition sweeps report variance 0 by construction; the flag
    /// keeps that visible in run metadata.
    pub single_repetition: bool,
}

impl SweepTable {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "alpha_multiplier",
            "temperature",
            "precision_mean",
            "precision_var",
            "recall_mean",
            "recall_var",
            "n",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            wtr.write_record([
                r.alpha_multiplier.to_string(),
                r.temperature.to_string(),
                r.precision_mean.to_string(),
                r.precision_var.to_string(),
                r.recall_mean.to_string(),
                r.recall_var.to_string(),
                r.n.to_string(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::BadInput {
        path: "<csv>".into(),
        reason: e.to_string(),
    }
}

/// Evaluates the config over every (alpha multiplier, temperature) cell,
/// `repetitions` times per cell with distinct derived seeds, and reports
/// per-cell mean and population variance of precision and recall.
pub fn sweep<B: VerdictBackend + Sync + ?Sized>(
    backend: &B,
    cases: &[RequirementCase],
    config: &InterventionConfig,
    grid: &SweepGrid,
    k: usize,
    base: &GenerationSettings,
) -> Result<SweepTable> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.alpha_multipliers.len() * grid.temperatures.len());
    for (ai, &multiplier) in grid.alpha_multipliers.iter().enumerate() {
        let scaled = config.scaled(multiplier);
        for (ti, &temperature) in grid.temperatures.iter().enumerate() {
            let mut precisions = Vec::with_capacity(grid.repetitions);
            let mut recalls = Vec::with_capacity(grid.repetitions);
            for rep in 0..grid.repetitions {
                let cell = (ai as u64) << 40 | (ti as u64) << 20 | rep as u64;
                let settings = GenerationSettings {
                    temperature,
                    max_new_tokens: base.max_new_tokens,
                    seed: derive_seed(base.seed, "sweep", cell),
                };
                let outcome = evaluate_config(backend, cases, &scaled, k, &settings)?;
                precisions.push(outcome.precision);
                recalls.push(outcome.recall);
            }
            let (precision_mean, precision_var) = mean_var(&precisions);
            let (recall_mean, recall_var) = mean_var(&recalls);
            rows.push(SweepRow {
                alpha_multiplier: multiplier,
                temperature,
                precision_mean,
                precision_var,
                recall_mean,
                recall_var,
                n: grid.repetitions,
            });
        }
    }
    Ok(SweepTable {
        rows,
        single_repetition: grid.repetitions == 1,
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}
