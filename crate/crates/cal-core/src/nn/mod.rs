//! From-scratch gated-GNN / GAT node classifier: tensors, reverse-mode
//! autodiff, typed-edge message passing, Adam with decoupled weight decay,
//! stratified k-fold training, and binary checkpointing.

mod adam;
mod checkpoint;
mod folds;
mod loss;
mod model;
mod scalar;
mod tape;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, TrainMeta};
pub use folds::stratified_folds;
pub use loss::{weighted_bce_on_tape, weighted_bce_value};
pub use model::{
    gat_layer_forward, gated_layer_forward, graph_tensors, init_params, model_forward,
    param_specs, EdgeIndex, Forward, GatOut, GraphTensors, Mode, ModelParams, ParamSpec,
};
pub use scalar::Scalar;
pub use tape::Tape;
pub use tensor::Tensor;
pub use train::{predict, train, EpochLog, FoldMetrics, LabeledGraph, TrainOutput};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("too few graphs: have {have}, need at least {need}")]
    TooFewGraphs { have: usize, need: usize },
    #[error("feature dimension {actual} does not match model input dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Gated,
    Gat,
}

/// Architecture hyperparameters. Hidden widths start wide and narrow toward
/// the head; skip connections bridge every block with a learned projection
/// where the width changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub gnn_layers: usize,
    pub hidden_dims: Vec<usize>,
    pub head_dims: Vec<usize>,
    pub dropout: f64,
    pub layer_kind: LayerKind,
    pub attention_heads: usize,
    pub use_edge_features: bool,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 0,
            gnn_layers: 4,
            hidden_dims: vec![256, 256, 128, 128],
            head_dims: vec![128, 64, 1],
            dropout: 0.2,
            layer_kind: LayerKind::Gated,
            attention_heads: 4,
            use_edge_features: true,
            threshold: 0.5,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::Config("input_dim must be set".into()));
        }
        if self.hidden_dims.len() != self.gnn_layers {
            return Err(NnError::Config(format!(
                "hidden_dims has {} entries for {} layers",
                self.hidden_dims.len(),
                self.gnn_layers
            )));
        }
        if self.head_dims.last() != Some(&1) {
            return Err(NnError::Config("last head dimension must be 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Config("dropout must be in [0, 1)".into()));
        }
        if self.layer_kind == LayerKind::Gat {
            if self.attention_heads == 0 {
                return Err(NnError::Config("attention_heads must be positive".into()));
            }
            for &h in &self.hidden_dims {
                if h % self.attention_heads != 0 {
                    return Err(NnError::Config(format!(
                        "hidden width {h} not divisible by {} attention heads",
                        self.attention_heads
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Optimization schedule: Adam (decoupled weight decay), reduce-on-plateau on
/// validation F1, early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub folds: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            folds: 5,
            max_epochs: 200,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            scheduler_factor: 0.5,
            scheduler_patience: 5,
            early_stop_patience: 15,
            seed: 42,
        }
    }
}
