//! Contrastive steering directions, intervention configurations and
//! per-token activation-norm profiles.
//!
//! Directions are unit-normalized so the per-head strength `alpha` alone
//! carries magnitude; strengths are raw scalars, deliberately not rescaled
//! by activation standard deviations.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashutil::fnv1a64;
use crate::microformer::{HeadActivation, HeadAddress, Intervention, Microformer};

/// Unit steering vector for one head (or the exact zero vector when the
/// contrastive class means coincide).
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringDirection {
    pub address: HeadAddress,
    pub v: Array1<f64>,
}

impl SteeringDirection {
    pub fn is_degenerate(&self) -> bool {
        self.v.iter().all(|&x| x == 0.0)
    }
}

/// Last-token activations grouped by head, split into the two behavior
/// classes the direction contrasts.
#[derive(Debug, Clone, Default)]
pub struct ActivationDataset {
    true_class: BTreeMap<HeadAddress, Vec<Array1<f64>>>,
    false_class: BTreeMap<HeadAddress, Vec<Array1<f64>>>,
}

impl ActivationDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the dataset from per-sample capture runs. Every run must cover
    /// the same address set, so each sample contributes exactly one vector
    /// per head.
    pub fn from_samples(
        true_runs: &[Vec<HeadActivation>],
        false_runs: &[Vec<HeadActivation>],
    ) -> Result<Self> {
        let mut ds = Self::new();
        let reference = address_set(true_runs.first().or_else(|| false_runs.first()));
        for run in true_runs {
            check_run(run, &reference)?;
            for act in run {
                ds.push_true(act.clone());
            }
        }
        for run in false_runs {
            check_run(run, &reference)?;
            for act in run {
                ds.push_false(act.clone());
            }
        }
        Ok(ds)
    }

    pub fn push_true(&mut self, act: HeadActivation) {
        self.true_class.entry(act.address).or_default().push(act.z);
    }

    pub fn push_false(&mut self, act: HeadActivation) {
        self.false_class.entry(act.address).or_default().push(act.z);
    }

    /// Sorted union of addresses seen in either class.
    pub fn addresses(&self) -> Vec<HeadAddress> {
        let mut set: Vec<HeadAddress> = self.true_class.keys().cloned().collect();
        for k in self.false_class.keys() {
            if !set.contains(k) {
                set.push(*k);
            }
        }
        set.sort();
        set
    }

    fn class(&self, truth: bool, address: HeadAddress) -> Option<&Vec<Array1<f64>>> {
        if truth {
            self.true_class.get(&address)
        } else {
            self.false_class.get(&address)
        }
    }
}

fn address_set(run: Option<&Vec<HeadActivation>>) -> Vec<HeadAddress> {
    let mut set: Vec<HeadAddress> = run
        .map(|r| r.iter().map(|a| a.address).collect())
        .unwrap_or_default();
    set.sort();
    set
}

fn check_run(run: &[HeadActivation], reference: &[HeadAddress]) -> Result<()> {
    let mut got: Vec<HeadAddress> = run.iter().map(|a| a.address).collect();
    got.sort();
    if got != reference {
        return Err(Error::LengthMismatch {
            context: "activation run address set".into(),
            left: got.len(),
            right: reference.len(),
        });
    }
    Ok(())
}

/// `v = normalize(mean(D_true) - mean(D_false))` at one head. Returns the
/// exact zero vector when the class means coincide; callers should treat a
/// degenerate direction as "this head carries no signal" rather than fail.
pub fn compute_direction(
    ds: &ActivationDataset,
    address: HeadAddress,
) -> Result<SteeringDirection> {
    let trues = ds
        .class(true, address)
        .filter(|v| !v.is_empty())
        .ok_or(Error::EmptyClass {
            class: "true".into(),
            layer: address.layer,
            head: address.head,
        })?;
    let falses = ds
        .class(false, address)
        .filter(|v| !v.is_empty())
        .ok_or(Error::EmptyClass {
            class: "false".into(),
            layer: address.layer,
            head: address.head,
        })?;

    let dim = trues[0].len();
    for z in trues.iter().chain(falses.iter()) {
        if z.len() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("activation vectors at {address}"),
                expected: dim,
                actual: z.len(),
            });
        }
    }

    let mean = |class: &Vec<Array1<f64>>| -> Array1<f64> {
        let mut sum = Array1::zeros(dim);
        for z in class {
            sum += z;
        }
        sum / class.len() as f64
    };

    let diff = mean(trues) - mean(falses);
    let norm = diff.dot(&diff).sqrt();
    let v = if norm == 0.0 { diff } else { diff / norm };
    Ok(SteeringDirection { address, v })
}

/// Directions for every address present in the dataset. Also reports which
/// heads came out degenerate (zero contrast).
pub fn compute_all_directions(ds: &ActivationDataset) -> Result<(DirectionSet, Vec<HeadAddress>)> {
    let mut out = DirectionSet::new();
    let mut degenerate = Vec::new();
    for address in ds.addresses() {
        let dir = compute_direction(ds, address)?;
        if dir.is_degenerate() {
            degenerate.push(address);
        }
        out.insert(address, dir);
    }
    Ok((out, degenerate))
}

pub type DirectionSet = BTreeMap<HeadAddress, SteeringDirection>;

#[derive(Serialize, Deserialize)]
struct DirectionFileEntry {
    layer: usize,
    head: usize,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DirectionFile {
    version: u32,
    directions: Vec<DirectionFileEntry>,
}

pub fn save_directions(path: impl AsRef<Path>, set: &DirectionSet) -> Result<()> {
    let path = path.as_ref();
    let file = DirectionFile {
        version: CONFIG_VERSION,
        directions: set
            .values()
            .map(|d| DirectionFileEntry {
                layer: d.address.layer,
                head: d.address.head,
                v: d.v.to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_directions(path: impl AsRef<Path>) -> Result<DirectionSet> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: DirectionFile = serde_json::from_str(&text)?;
    if file.version != CONFIG_VERSION {
        return Err(Error::SnapshotVersion {
            found: file.version,
            expected: CONFIG_VERSION,
        });
    }
    Ok(file
        .directions
        .into_iter()
        .map(|e| {
            let address = HeadAddress::new(e.layer, e.head);
            (
                address,
                SteeringDirection {
                    address,
                    v: Array1::from(e.v),
                },
            )
        })
        .collect())
}

const CONFIG_VERSION: u32 = 1;

/// One steered head inside a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigEntry {
    pub address: HeadAddress,
    pub alpha: f64,
    pub direction: Array1<f64>,
}

/// Ordered set of (head, alpha, direction) entries — the unit the search
/// optimizes and the file the CLI persists.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionConfig {
    entries: Vec<ConfigEntry>,
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
struct ConfigEntryFile {
    layer: usize,
    head: usize,
    alpha: f64,
    direction: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    version: u32,
    provenance: String,
    entries: Vec<ConfigEntryFile>,
}

impl InterventionConfig {
    /// The no-op intervention.
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
            provenance: "baseline".into(),
        }
    }

    /// Zips directions and strengths in order. Addresses must be unique and
    /// every alpha finite.
    pub fn build(directions: &[SteeringDirection], alphas: &[f64]) -> Result<Self> {
        if directions.len() != alphas.len() {
            return Err(Error::LengthMismatch {
                context: "directions vs alphas".into(),
                left: directions.len(),
                right: alphas.len(),
            });
        }
        let mut entries = Vec::with_capacity(directions.len());
        for (dir, &alpha) in directions.iter().zip(alphas.iter()) {
            if !alpha.is_finite() {
                return Err(Error::InvalidThresholds(format!(
                    "alpha for {} is not finite",
                    dir.address
                )));
            }
            if entries
                .iter()
                .any(|e: &ConfigEntry| e.address == dir.address)
            {
                return Err(Error::DuplicateAddress {
                    layer: dir.address.layer,
                    head: dir.address.head,
                });
            }
            entries.push(ConfigEntry {
                address: dir.address,
                alpha,
                direction: dir.v.clone(),
            });
        }
        Ok(Self {
            entries,
            provenance: "built".into(),
        })
    }

    pub fn with_provenance(mut self, label: impl Into<String>) -> Self {
        self.provenance = label.into();
        self
    }

    pub fn entries(&self) -> &[ConfigEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.alpha).collect()
    }

    pub fn addresses(&self) -> Vec<HeadAddress> {
        self.entries.iter().map(|e| e.address).collect()
    }

    /// All alphas multiplied by a common factor (used by robustness sweeps).
    pub fn scaled(&self, multiplier: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| ConfigEntry {
                address: e.address,
                alpha: e.alpha * multiplier,
                direction: e.direction.clone(),
            })
            .collect();
        Self {
            entries,
            provenance: format!("{} x{multiplier}", self.provenance),
        }
    }

    pub fn to_interventions(&self) -> Vec<Intervention> {
        self.entries
            .iter()
            .map(|e| Intervention {
                address: e.address,
                alpha: e.alpha,
                direction: e.direction.clone(),
            })
            .collect()
    }

    /// Order-normalized key: equal entry multisets map to equal keys, and
    /// any bit-level change of an alpha or direction changes the key. Used
    /// for memoization and the evaluation ledger.
    pub fn canonical_key(&self) -> String {
        let mut parts: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                let mut bytes = Vec::with_capacity(e.direction.len() * 8);
                for x in e.direction.iter() {
                    bytes.extend_from_slice(&x.to_bits().to_le_bytes());
                }
                format!(
                    "l{}h{}:a{:016x}:d{:016x}",
                    e.address.layer,
                    e.address.head,
                    e.alpha.to_bits(),
                    fnv1a64(&bytes)
                )
            })
            .collect();
        parts.sort();
        if parts.is_empty() {
            "empty".into()
        } else {
            parts.join(";")
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ConfigFile {
            version: CONFIG_VERSION,
            provenance: self.provenance.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| ConfigEntryFile {
                    layer: e.address.layer,
                    head: e.address.head,
                    alpha: e.alpha,
                    direction: e.direction.to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)?;
        if file.version != CONFIG_VERSION {
            return Err(Error::SnapshotVersion {
                found: file.version,
                expected: CONFIG_VERSION,
            });
        }
        let directions: Vec<SteeringDirection> = file
            .entries
            .iter()
            .map(|e| SteeringDirection {
                address: HeadAddress::new(e.layer, e.head),
                v: Array1::from(e.direction.clone()),
            })
            .collect();
        let alphas: Vec<f64> = file.entries.iter().map(|e| e.alpha).collect();
        Ok(Self::build(&directions, &alphas)?.with_provenance(file.provenance))
    }
}

/// Min-max scaled per-token activation-norm scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenNormProfile {
    pub scores: Vec<f64>,
}

impl TokenNormProfile {
    /// CSV rows `(token, score)`; token is the printable byte or `\xNN`.
    pub fn write_csv<W: std::io::Write>(&self, tokens: &[u32], w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["token", "score"])
            .map_err(|e| Error::BadInput {
                path: "<csv>".into(),
                reason: e.to_string(),
            })?;
        for (tok, score) in tokens.iter().zip(self.scores.iter()) {
            let repr = match u8::try_from(*tok) {
                Ok(b) if (b' '..=b'~').contains(&b) => (b as char).to_string(),
                _ => format!("\\x{tok:02X}"),
            };
            wtr.write_record([repr, format!("{score}")])
                .map_err(|e| Error::BadInput {
                    path: "<csv>".into(),
                    reason: e.to_string(),
                })?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Per-token score: sum over the selected heads of `||z_h||_2` at each
/// position, min-max scaled to `[0, 1]`. A single head gives that head's
/// norm; all heads give the summed variant. Degenerate ranges (one token,
/// constant norms) scale to all zeros.
pub fn token_norm_profile(
    model: &Microformer,
    tokens: &[u32],
    heads: &[HeadAddress],
) -> Result<TokenNormProfile> {
    if tokens.is_empty() {
        return Err(Error::EmptyPrompt);
    }
    if heads.is_empty() {
        return Err(Error::EmptyHeadSet);
    }
    let captured = model.capture_all_positions(tokens, heads)?;
    let mut raw = vec![0.0; tokens.len()];
    for (_, z) in &captured {
        for (t, row) in z.rows().into_iter().enumerate() {
            raw[t] += row.dot(&row).sqrt();
        }
    }
    Ok(TokenNormProfile {
        scores: min_max_scale(&raw),
    })
}

fn min_max_scale(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&x| (x - min) / (max - min)).collect()
}
