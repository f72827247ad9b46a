use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FateWeights, ModelConfig};
use crate::error::{FateError, Result};
use crate::format::{self, CHECKPOINT_MAGIC};
use crate::tensor::Tensor;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    metadata: BTreeMap<String, serde_json::Value>,
}

/// Model config echo, named weight tensors and free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub weights: FateWeights,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.weights.validate(&ckpt.config)?;
    let named = ckpt.weights.named();
    let header = Header {
        config: ckpt.config.clone(),
        tensors: named
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        metadata: ckpt.metadata.clone(),
    };
    let payload: Vec<f64> = named.iter().flat_map(|(_, t)| t.data().iter().copied()).collect();
    format::write(path, CHECKPOINT_MAGIC, &header, &payload)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (header, payload): (Header, Vec<f64>) = format::read(path, CHECKPOINT_MAGIC)?;
    let bad = |reason: String| FateError::Format {
        path: path.to_path_buf(),
        reason,
    };
    header.config.validate()?;
    let template = FateWeights::init(&header.config, 0)?;
    let names = template.names();
    if names.len() != header.tensors.len() {
        return Err(bad(format!(
            "{} tensors stored, config implies {}",
            header.tensors.len(),
            names.len()
        )));
    }
    let mut offset = 0;
    let mut tensors = Vec::with_capacity(names.len());
    for (want, entry) in names.iter().zip(&header.tensors) {
        if *want != entry.name {
            return Err(bad(format!("expected tensor {want}, found {}", entry.name)));
        }
        let n: usize = entry.shape.iter().product();
        let data = payload
            .get(offset..offset + n)
            .ok_or_else(|| bad(format!("payload too short for {}", entry.name)))?;
        offset += n;
        tensors.push(Tensor::new(&entry.shape, data.to_vec())?);
    }
    if offset != payload.len() {
        return Err(bad("trailing payload".into()));
    }
    let weights = template.with_tensors(tensors)?;
    Ok(Checkpoint {
        config: header.config,
        weights,
        metadata: header.metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig {
            num_heads: 2,
            key_dim: 3,
            dense_units: 4,
            num_layers: 2,
            ..ModelConfig::new(3, 2, 4, 2)
        };
        let mut metadata = BTreeMap::new();
        metadata.insert("seed".into(), serde_json::json!(5));
        let ckpt = Checkpoint {
            weights: FateWeights::init(&cfg, 5).unwrap(),
            config: cfg,
            metadata,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fate");
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(&std::fs::read(&path).unwrap()[..6], b"FATE1\n");
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fate");
        std::fs::write(&path, b"FDAT1\n\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(FateError::Format { .. })));
    }
}
