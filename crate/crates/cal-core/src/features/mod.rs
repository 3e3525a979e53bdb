//! Node and edge feature construction: syntactic one-hots, random-walk
//! embeddings, textual embeddings, and graph metrics, concatenated per node.

mod container;
mod matrix;
mod metrics;
mod skipgram;
mod text;
mod walks;

pub use container::{read_container, write_feature_matrix, ContainerError};
pub use matrix::Matrix;
pub use metrics::{centralities, centralities_seq, graph_metrics};
pub use skipgram::{train_skipgram, EmbeddingTable, SkipgramConfig, SkipgramError};
pub use text::textual_tokens;
pub use walks::{generate_walks, generate_walks_seq, WalkParams};

use crate::cpg::{Cpg, EdgeKind, NodeKind};
use thiserror::Error;

/// Width of the node-kind one-hot block.
pub const TYPE_BLOCK_WIDTH: usize = NodeKind::ALL.len();
/// Width of the graph-metric block: degree, closeness, betweenness.
pub const METRIC_BLOCK_WIDTH: usize = 3;
/// Width of the edge-kind one-hot block.
pub const EDGE_BLOCK_WIDTH: usize = EdgeKind::ALL.len();

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error(transparent)]
    Skipgram(#[from] SkipgramError),
}

/// Which feature blocks to compute and with what hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureConfig {
    pub enable_type: bool,
    pub enable_walk: bool,
    pub enable_text: bool,
    pub enable_metrics: bool,
    pub enable_edge_features: bool,
    pub walk: WalkParams,
    pub walk_dim: usize,
    pub text_dim: usize,
    pub skipgram: SkipgramConfig,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            enable_type: true,
            enable_walk: true,
            enable_text: true,
            enable_metrics: true,
            enable_edge_features: true,
            walk: WalkParams::default(),
            walk_dim: 64,
            text_dim: 32,
            skipgram: SkipgramConfig::default(),
            seed: 42,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.enable_type || self.enable_walk || self.enable_text || self.enable_metrics) {
            return Err(FeatureError::Config(
                "at least one node-feature block must be enabled".into(),
            ));
        }
        if self.enable_walk && self.walk_dim == 0 {
            return Err(FeatureError::Config("walk_dim must be positive".into()));
        }
        if self.enable_text && self.text_dim == 0 {
            return Err(FeatureError::Config("text_dim must be positive".into()));
        }
        self.walk.validate().map_err(FeatureError::Config)
    }

    /// Total concatenated width; disabled blocks contribute zero.
    pub fn node_dim(&self) -> usize {
        let mut d = 0;
        if self.enable_type {
            d += TYPE_BLOCK_WIDTH;
        }
        if self.enable_walk {
            d += self.walk_dim;
        }
        if self.enable_text {
            d += self.text_dim;
        }
        if self.enable_metrics {
            d += METRIC_BLOCK_WIDTH;
        }
        d
    }

    pub fn edge_dim(&self) -> usize {
        if self.enable_edge_features {
            EDGE_BLOCK_WIDTH
        } else {
            1
        }
    }
}

/// Concatenated per-node feature blocks plus edge-kind features. Rows are
/// indexed by node position in `cpg.nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureMatrix {
    pub x_type: Option<Matrix>,
    pub x_walk: Option<Matrix>,
    pub x_text: Option<Matrix>,
    pub x_metric: Option<Matrix>,
    /// Concatenation of the enabled blocks in [type | walk | text | metric] order.
    pub x: Matrix,
    /// One-hot edge kinds when enabled, otherwise a single constant-1 column.
    pub edge_features: Matrix,
}

/// One-hot encoding of node kinds over the fixed enumeration.
pub fn node_type_onehot(cpg: &Cpg) -> Matrix {
    let mut m = Matrix::zeros(cpg.nodes.len(), TYPE_BLOCK_WIDTH);
    for (i, n) in cpg.nodes.iter().enumerate() {
        m.set(i, n.kind.index(), 1.0);
    }
    m
}

/// Mean of each node's token vectors; an empty token list yields a zero row.
pub fn embed_nodes(tokens_per_node: &[Vec<String>], table: &EmbeddingTable) -> Matrix {
    let mut m = Matrix::zeros(tokens_per_node.len(), table.dim);
    for (i, tokens) in tokens_per_node.iter().enumerate() {
        if tokens.is_empty() {
            continue;
        }
        let row = m.row_mut(i);
        for t in tokens {
            let v = table.vector(t);
            for (r, x) in row.iter_mut().zip(v) {
                *r += x;
            }
        }
        let inv = 1.0 / tokens.len() as f32;
        for r in row.iter_mut() {
            *r *= inv;
        }
    }
    m
}

/// Compute and concatenate the enabled feature blocks for one graph.
///
/// The walk embedding table is trained per graph from a seed mixed with the
/// graph's canonical hash, so identical graphs get identical features no
/// matter where they appear. The textual table is corpus-level state: pass
/// the trained table, or `None` to train a throwaway table on this graph's
/// own tokens (standalone use).
pub fn assemble(
    cpg: &Cpg,
    config: &FeatureConfig,
    text_table: Option<&EmbeddingTable>,
) -> Result<NodeFeatureMatrix, FeatureError> {
    config.validate()?;
    let n = cpg.nodes.len();

    let x_type = config.enable_type.then(|| node_type_onehot(cpg));

    let x_walk = if config.enable_walk {
        let table = train_walk_table(cpg, config)?;
        let tokens: Vec<Vec<String>> = (0..n).map(|i| vec![walk_token(i)]).collect();
        Some(embed_nodes(&tokens, &table))
    } else {
        None
    };

    let x_text = if config.enable_text {
        let tokens: Vec<Vec<String>> = cpg.nodes.iter().map(textual_tokens).collect();
        let local;
        let table = match text_table {
            Some(t) => t,
            None => {
                local = train_skipgram(
                    &tokens,
                    config.text_dim,
                    &config.skipgram,
                    mix_seed(config.seed, 0x7e57),
                )?;
                &local
            }
        };
        Some(embed_nodes(&tokens, table))
    } else {
        None
    };

    let x_metric = config.enable_metrics.then(|| graph_metrics(cpg));

    let d = config.node_dim();
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        let row = x.row_mut(i);
        let mut off = 0;
        for block in [&x_type, &x_walk, &x_text, &x_metric].into_iter().flatten() {
            row[off..off + block.cols].copy_from_slice(block.row(i));
            off += block.cols;
        }
    }

    let e = cpg.edges.len();
    let edge_features = if config.enable_edge_features {
        let mut m = Matrix::zeros(e, EDGE_BLOCK_WIDTH);
        for (i, edge) in cpg.edges.iter().enumerate() {
            m.set(i, edge.kind.index(), 1.0);
        }
        m
    } else {
        let mut m = Matrix::zeros(e, 1);
        m.data.fill(1.0);
        m
    };

    Ok(NodeFeatureMatrix { x_type, x_walk, x_text, x_metric, x, edge_features })
}

/// Train the per-graph walk embedding table (node ids as tokens).
pub fn train_walk_table(cpg: &Cpg, config: &FeatureConfig) -> Result<EmbeddingTable, FeatureError> {
    let walk_seed = walk_seed_for(cpg, config.seed);
    let walks = generate_walks(cpg, &config.walk, walk_seed);
    let corpus: Vec<Vec<String>> = walks
        .into_iter()
        .map(|w| w.into_iter().map(|v| walk_token(v as usize)).collect())
        .collect();
    Ok(train_skipgram(&corpus, config.walk_dim, &config.skipgram, walk_seed)?)
}

/// Walk seed = feature seed mixed with the canonical hash, so the table is
/// reproducible for the same graph content at inference time.
pub fn walk_seed_for(cpg: &Cpg, seed: u64) -> u64 {
    let digest = crate::cpg::canonical_hash(cpg);
    let mut h: u64 = 0;
    for b in digest.as_bytes().iter().take(16) {
        h = h.wrapping_mul(31).wrapping_add(*b as u64);
    }
    mix_seed(seed, h)
}

fn walk_token(pos: usize) -> String {
    format!("n{pos}")
}

/// splitmix64-style combiner for deriving stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Undirected simple projection: position-indexed sorted neighbor lists,
/// parallel edges merged, self-loops dropped.
pub(crate) fn undirected_adjacency(cpg: &Cpg) -> Vec<Vec<u32>> {
    let index = cpg.id_index();
    let n = cpg.nodes.len();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for e in &cpg.edges {
        let (Some(&s), Some(&d)) = (index.get(&e.src), index.get(&e.dst)) else { continue };
        if s == d {
            continue;
        }
        adj[s].push(d as u32);
        adj[d].push(s as u32);
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}
