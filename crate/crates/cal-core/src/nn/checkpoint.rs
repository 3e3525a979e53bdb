//! Checkpoint file format: magic "CALM", version u32, header length u32, a
//! JSON header (configs, text vocabulary, training metadata, tensor
//! directory), then little-endian f32 tensor payloads in directory order.
//! Loading validates every architecture parameter against the config.

use super::model::param_specs;
use super::{ModelConfig, ModelParams};
use crate::features::{EmbeddingTable, FeatureConfig};
use crate::nn::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"CALM";
const VERSION: u32 = 1;
const TEXT_TABLE_TENSOR: &str = "text_table.vectors";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub best_val_f1: f64,
    pub best_fold: usize,
    /// Graph digest -> fold index used during cross-validation.
    pub fold_assignment: BTreeMap<String, usize>,
}

/// Everything needed for standalone inference: model weights, the feature
/// recipe, and the corpus-level text embedding table. Walk embeddings are
/// per-graph and recomputed at prediction time from the stored seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub feature_config: FeatureConfig,
    pub params: ModelParams<f32>,
    pub text_table: EmbeddingTable,
    pub meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    feature_config: FeatureConfig,
    text_tokens: Vec<String>,
    text_dim: usize,
    meta: TrainMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset into the payload, in f32 elements.
    offset: usize,
}

pub fn save_checkpoint<W: Write>(ckpt: &Checkpoint, w: &mut W) -> Result<(), CheckpointError> {
    let mut entries = Vec::new();
    let mut offset = 0usize;
    for (name, t) in &ckpt.params.tensors {
        entries.push(TensorEntry { name: name.clone(), rows: t.rows, cols: t.cols, offset });
        offset += t.data.len();
    }
    entries.push(TensorEntry {
        name: TEXT_TABLE_TENSOR.into(),
        rows: ckpt.text_table.vocab_len(),
        cols: ckpt.text_table.dim,
        offset,
    });

    let header = Header {
        model_config: ckpt.model_config.clone(),
        feature_config: ckpt.feature_config.clone(),
        text_tokens: ckpt.text_table.tokens.clone(),
        text_dim: ckpt.text_table.dim,
        meta: ckpt.meta.clone(),
        tensors: entries,
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::Format(e.to_string()))?;

    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for t in ckpt.params.tensors.values() {
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in &ckpt.text_table.vectors {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let header_len = read_u32(r)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| CheckpointError::Format(e.to_string()))?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 4 != 0 {
        return Err(CheckpointError::Format("payload not a multiple of 4 bytes".into()));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let mut tensors = BTreeMap::new();
    let mut text_vectors = None;
    for e in &header.tensors {
        let end = e.offset + e.rows * e.cols;
        if end > floats.len() {
            return Err(CheckpointError::Format(format!("tensor {} exceeds payload", e.name)));
        }
        let data = floats[e.offset..end].to_vec();
        if e.name == TEXT_TABLE_TENSOR {
            text_vectors = Some(data);
        } else {
            tensors.insert(e.name.clone(), Tensor::from_vec(e.rows, e.cols, data));
        }
    }

    // every architecture parameter must be present with the right shape
    for spec in param_specs(&header.model_config) {
        match tensors.get(&spec.name) {
            None => {
                return Err(CheckpointError::Format(format!("missing parameter {}", spec.name)))
            }
            Some(t) if t.rows != spec.rows || t.cols != spec.cols => {
                return Err(CheckpointError::Format(format!(
                    "parameter {} has shape ({}, {}), expected ({}, {})",
                    spec.name, t.rows, t.cols, spec.rows, spec.cols
                )))
            }
            _ => {}
        }
    }

    let vectors = text_vectors
        .ok_or_else(|| CheckpointError::Format("missing text embedding table".into()))?;
    if vectors.len() != header.text_tokens.len() * header.text_dim {
        return Err(CheckpointError::Format("text table shape mismatch".into()));
    }
    // position 0 is the OOV sentinel and stays out of the lookup map
    let index = header
        .text_tokens
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, t)| (t.clone(), i))
        .collect::<BTreeMap<_, _>>();
    let text_table = EmbeddingTable {
        tokens: header.text_tokens,
        index,
        dim: header.text_dim,
        vectors,
    };

    Ok(Checkpoint {
        params: ModelParams { tensors, config: header.model_config.clone() },
        model_config: header.model_config,
        feature_config: header.feature_config,
        text_table,
        meta: header.meta,
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{train_skipgram, SkipgramConfig};
    use crate::nn::{init_params, LayerKind};

    fn sample_checkpoint() -> Checkpoint {
        let model_config = ModelConfig {
            input_dim: 7,
            gnn_layers: 2,
            hidden_dims: vec![8, 4],
            head_dims: vec![4, 1],
            layer_kind: LayerKind::Gated,
            ..ModelConfig::default()
        };
        let params = init_params::<f32>(&model_config).unwrap();
        let corpus = vec![vec!["alpha".to_string(), "beta".to_string()]];
        let text_table = train_skipgram(&corpus, 4, &SkipgramConfig::default(), 1).unwrap();
        Checkpoint {
            model_config: model_config.clone(),
            feature_config: FeatureConfig { text_dim: 4, ..FeatureConfig::default() },
            params,
            text_table,
            meta: TrainMeta {
                epochs_run: 12,
                best_val_f1: 0.9,
                best_fold: 1,
                fold_assignment: BTreeMap::from([("d0".into(), 0), ("d1".into(), 1)]),
            },
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ckpt = sample_checkpoint();
        let mut bytes = Vec::new();
        save_checkpoint(&ckpt, &mut bytes).unwrap();
        let back = load_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn save_is_deterministic() {
        let ckpt = sample_checkpoint();
        let mut a = Vec::new();
        let mut b = Vec::new();
        save_checkpoint(&ckpt, &mut a).unwrap();
        save_checkpoint(&ckpt, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_parameter_is_rejected() {
        let ckpt = sample_checkpoint();
        let mut bytes = Vec::new();
        save_checkpoint(&ckpt, &mut bytes).unwrap();
        // corrupt the header in place: rename a parameter
        let needle = b"input_proj.w";
        let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        bytes[pos + needle.len() - 1] = b'X';
        let err = load_checkpoint(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("input_proj.w"), "got: {err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let bytes = b"XXXX\x01\x00\x00\x00";
        assert!(matches!(load_checkpoint(&mut bytes.as_slice()), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn gat_and_gated_have_different_parameter_directories() {
        let gated = ModelConfig {
            input_dim: 7,
            gnn_layers: 1,
            hidden_dims: vec![8],
            head_dims: vec![1],
            layer_kind: LayerKind::Gated,
            ..ModelConfig::default()
        };
        let gat = ModelConfig { layer_kind: LayerKind::Gat, attention_heads: 2, ..gated.clone() };
        let names = |c: &ModelConfig| -> Vec<String> {
            param_specs(c).into_iter().map(|s| s.name).collect()
        };
        assert_ne!(names(&gated), names(&gat));
        assert!(names(&gated).iter().any(|n| n.contains(".gru.")));
        assert!(names(&gat).iter().any(|n| n.contains(".att.")));
    }
}
