//! Versioned JSON weight snapshots.
//!
//! Layout: every tensor is stored row-major as `{ shape: [rows, cols],
//! data: [f64] }`; layers are listed in order, each carrying its four
//! projections. The header records dims, seed and variant so a snapshot is
//! self-describing.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::model::Microformer;
use super::{AttentionParams, ModelDims, ModelVariant};
use crate::error::{Error, Result};

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Tensor {
    fn from_array(a: &Array2<f64>) -> Self {
        Self {
            shape: [a.nrows(), a.ncols()],
            data: a.iter().cloned().collect(),
        }
    }

    fn into_array(self, what: &str) -> Result<Array2<f64>> {
        let expected = self.shape[0] * self.shape[1];
        if self.data.len() != expected {
            return Err(Error::DimensionMismatch {
                context: format!("snapshot tensor {what}"),
                expected,
                actual: self.data.len(),
            });
        }
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data).map_err(|_| {
            Error::DimensionMismatch {
                context: format!("snapshot tensor {what}"),
                expected,
                actual: 0,
            }
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerTensors {
    w_q: Tensor,
    w_k: Tensor,
    w_v: Tensor,
    w_o: Tensor,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelSnapshot {
    version: u32,
    dims: ModelDims,
    seed: u64,
    variant: ModelVariant,
    embedding: Tensor,
    positional: Tensor,
    layers: Vec<LayerTensors>,
    unembedding: Tensor,
}

impl ModelSnapshot {
    pub fn of(model: &Microformer) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            dims: *model.dims(),
            seed: model.seed(),
            variant: model.variant(),
            embedding: Tensor::from_array(&model.embedding),
            positional: Tensor::from_array(&model.positional),
            layers: model
                .layers
                .iter()
                .map(|p| LayerTensors {
                    w_q: Tensor::from_array(&p.w_q),
                    w_k: Tensor::from_array(&p.w_k),
                    w_v: Tensor::from_array(&p.w_v),
                    w_o: Tensor::from_array(&p.w_o),
                })
                .collect(),
            unembedding: Tensor::from_array(&model.unembedding),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let snap: ModelSnapshot = serde_json::from_str(&text)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion {
                found: snap.version,
                expected: SNAPSHOT_VERSION,
            });
        }
        Ok(snap)
    }

    pub fn into_model(self) -> Result<Microformer> {
        self.dims.validate()?;
        if self.layers.len() != self.dims.n_layers {
            return Err(Error::DimensionMismatch {
                context: "snapshot layer count".into(),
                expected: self.dims.n_layers,
                actual: self.layers.len(),
            });
        }
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(AttentionParams {
                    w_q: l.w_q.into_array(&format!("layer {i} w_q"))?,
                    w_k: l.w_k.into_array(&format!("layer {i} w_k"))?,
                    w_v: l.w_v.into_array(&format!("layer {i} w_v"))?,
                    w_o: l.w_o.into_array(&format!("layer {i} w_o"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Microformer::from_parts(
            self.dims,
            self.seed,
            self.variant,
            self.embedding.into_array("embedding")?,
            self.positional.into_array("positional")?,
            layers,
            self.unembedding.into_array("unembedding")?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip_is_exact() {
        let model = Microformer::random(ModelDims::default_dims(), 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.json");
        ModelSnapshot::of(&model).save(&path).unwrap();
        let loaded = ModelSnapshot::load(&path).unwrap().into_model().unwrap();
        assert_eq!(loaded.embedding, model.embedding);
        assert_eq!(loaded.unembedding, model.unembedding);
        for l in 0..4 {
            assert_eq!(loaded.params(l), model.params(l));
        }
        // identical generations from the reloaded weights
        let prompt: Vec<u32> = (60..80).collect();
        let settings = super::super::GenerationSettings::greedy(6);
        assert_eq!(
            loaded
                .generate(&prompt, &settings, &super::super::HookSet::empty())
                .unwrap(),
            model
                .generate(&prompt, &settings, &super::super::HookSet::empty())
                .unwrap()
        );
    }

    #[test]
    fn version_mismatch_rejected() {
        let model = Microformer::random(ModelDims::default_dims(), 3).unwrap();
        let mut snap = ModelSnapshot::of(&model);
        snap.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let json = serde_json::to_string(&snap).unwrap();
        std::fs::write(&path, json).unwrap();
        assert!(matches!(
            ModelSnapshot::load(&path),
            Err(Error::SnapshotVersion { found: 99, .. })
        ));
    }
}
