//! Model assembly: input projection, gated-GRU or GATv2-style attention
//! blocks with ReLU + batch norm + dropout and additive skip connections,
//! then an affine head ending in a sigmoid.

use super::scalar::Scalar;
use super::tape::Tape;
use super::tensor::Tensor;
use super::{LayerKind, ModelConfig, NnError};
use crate::cpg::{Cpg, EdgeKind};
use crate::features::{Matrix, NodeFeatureMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

pub const EDGE_KIND_NAMES: [&str; 5] = ["ast", "cfg", "ddg", "cdg", "call"];
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const LEAKY_SLOPE: f64 = 0.2;

/// Shape and initialization of one named parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Xavier,
    Zeros,
    Ones,
}

/// Running statistics are buffers: saved in checkpoints, never optimized.
pub fn is_buffer(name: &str) -> bool {
    name.contains(".running_")
}

/// The full parameter directory for a config, in declaration order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut push = |name: String, rows: usize, cols: usize, init: Init| {
        specs.push(ParamSpec { name, rows, cols, init });
    };
    let h0 = config.hidden_dims[0];
    push("input_proj.w".into(), config.input_dim, h0, Init::Xavier);
    push("input_proj.b".into(), 1, h0, Init::Zeros);

    let edge_dim = if config.use_edge_features { EDGE_KIND_NAMES.len() } else { 1 };
    let mut prev = h0;
    for (i, &w) in config.hidden_dims.iter().enumerate() {
        let p = format!("gnn.{i}");
        if prev != w {
            push(format!("{p}.proj_in.w"), prev, w, Init::Xavier);
            push(format!("{p}.skip.w"), prev, w, Init::Xavier);
        }
        match config.layer_kind {
            LayerKind::Gated => {
                let kinds: Vec<&str> =
                    if config.use_edge_features { EDGE_KIND_NAMES.to_vec() } else { vec!["all"] };
                for k in kinds {
                    push(format!("{p}.msg.{k}.w"), w, w, Init::Xavier);
                    push(format!("{p}.msg.{k}.b"), 1, w, Init::Zeros);
                }
                for gate in ["z", "r", "h"] {
                    push(format!("{p}.gru.w{gate}"), w, w, Init::Xavier);
                    push(format!("{p}.gru.u{gate}"), w, w, Init::Xavier);
                    push(format!("{p}.gru.b{gate}"), 1, w, Init::Zeros);
                }
            }
            LayerKind::Gat => {
                let d_head = w / config.attention_heads;
                for k in 0..config.attention_heads {
                    push(format!("{p}.att.{k}.w"), 2 * w + edge_dim, d_head, Init::Xavier);
                    push(format!("{p}.att.{k}.a"), d_head, 1, Init::Xavier);
                    push(format!("{p}.att.{k}.v"), w, d_head, Init::Xavier);
                }
                push(format!("{p}.att.out.w"), w, w, Init::Xavier);
                push(format!("{p}.att.out.b"), 1, w, Init::Zeros);
            }
        }
        push(format!("{p}.bn.gamma"), 1, w, Init::Ones);
        push(format!("{p}.bn.beta"), 1, w, Init::Zeros);
        push(format!("{p}.bn.running_mean"), 1, w, Init::Zeros);
        push(format!("{p}.bn.running_var"), 1, w, Init::Ones);
        prev = w;
    }

    let mut d_in = prev;
    for (j, &d_out) in config.head_dims.iter().enumerate() {
        push(format!("head.{j}.w"), d_in, d_out, Init::Xavier);
        push(format!("head.{j}.b"), 1, d_out, Init::Zeros);
        d_in = d_out;
    }
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
    pub config: ModelConfig,
}

impl<T: Scalar> ModelParams<T> {
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let tensors = self
            .tensors
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    Tensor::from_vec(
                        v.rows,
                        v.cols,
                        v.data.iter().map(|x| U::from_f64(x.to_f64())).collect(),
                    ),
                )
            })
            .collect();
        ModelParams { tensors, config: self.config.clone() }
    }
}

/// Seeded Xavier-uniform initialization. Parameters are drawn in directory
/// order, so the same config and seed always produce identical weights.
pub fn init_params<T: Scalar>(config: &ModelConfig) -> Result<ModelParams<T>, NnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tensors = BTreeMap::new();
    for spec in param_specs(config) {
        let n = spec.rows * spec.cols;
        let data: Vec<T> = match spec.init {
            Init::Zeros => vec![T::ZERO; n],
            Init::Ones => vec![T::ONE; n],
            Init::Xavier => {
                let limit = (6.0 / (spec.rows + spec.cols) as f64).sqrt();
                (0..n).map(|_| T::from_f64(rng.gen_range(-limit..limit))).collect()
            }
        };
        tensors.insert(spec.name, Tensor::from_vec(spec.rows, spec.cols, data));
    }
    Ok(ModelParams { tensors, config: config.clone() })
}

/// One graph prepared for the network: features, position-indexed edges with
/// kinds, edge features, optional node labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTensors {
    pub n: usize,
    pub x: Matrix,
    pub edges: Vec<(u32, u32, u8)>,
    pub edge_feat: Matrix,
    pub labels: Option<Vec<f32>>,
}

/// Prepare a graph: node ids are mapped to positions in `cpg.nodes`;
/// `sensitive` (node ids) becomes the 0/1 label vector.
pub fn graph_tensors(
    cpg: &Cpg,
    feats: &NodeFeatureMatrix,
    sensitive: Option<&BTreeSet<usize>>,
) -> GraphTensors {
    let index = cpg.id_index();
    let edges: Vec<(u32, u32, u8)> = cpg
        .edges
        .iter()
        .map(|e| (index[&e.src] as u32, index[&e.dst] as u32, e.kind.index() as u8))
        .collect();
    let labels = sensitive.map(|s| {
        cpg.nodes.iter().map(|n| if s.contains(&n.id) { 1.0 } else { 0.0 }).collect()
    });
    GraphTensors {
        n: cpg.nodes.len(),
        x: feats.x.clone(),
        edges,
        edge_feat: feats.edge_features.clone(),
        labels,
    }
}

/// Per-graph edge structure shared by the layers.
pub struct EdgeIndex {
    /// (src, dst) position lists per edge kind, in edge order.
    pub by_kind: Vec<(Rc<Vec<u32>>, Rc<Vec<u32>>)>,
    pub all_src: Rc<Vec<u32>>,
    pub all_dst: Rc<Vec<u32>>,
    /// Edge lists for attention: original edges plus a self-loop for every
    /// node with no incoming edge (keeps each softmax group nonempty).
    pub gat_src: Rc<Vec<u32>>,
    pub gat_dst: Rc<Vec<u32>>,
    /// Edge features aligned with the gat lists; self-loop rows are zero.
    pub gat_edge_feat: Matrix,
}

impl EdgeIndex {
    pub fn build(graph: &GraphTensors) -> EdgeIndex {
        let kinds = EdgeKind::ALL.len();
        let mut by_kind: Vec<(Vec<u32>, Vec<u32>)> = vec![(Vec::new(), Vec::new()); kinds];
        let mut all_src = Vec::with_capacity(graph.edges.len());
        let mut all_dst = Vec::with_capacity(graph.edges.len());
        let mut has_incoming = vec![false; graph.n];
        for &(s, d, k) in &graph.edges {
            by_kind[k as usize].0.push(s);
            by_kind[k as usize].1.push(d);
            all_src.push(s);
            all_dst.push(d);
            has_incoming[d as usize] = true;
        }
        let e_dim = graph.edge_feat.cols.max(1);
        let mut gat_src = all_src.clone();
        let mut gat_dst = all_dst.clone();
        let mut gat_edge_feat = graph.edge_feat.clone();
        if gat_edge_feat.cols == 0 {
            gat_edge_feat = Matrix::zeros(0, e_dim);
        }
        for (v, has) in has_incoming.iter().enumerate() {
            if !has {
                gat_src.push(v as u32);
                gat_dst.push(v as u32);
                gat_edge_feat.data.extend(std::iter::repeat(0.0).take(e_dim));
                gat_edge_feat.rows += 1;
            }
        }
        EdgeIndex {
            by_kind: by_kind.into_iter().map(|(s, d)| (Rc::new(s), Rc::new(d))).collect(),
            all_src: Rc::new(all_src),
            all_dst: Rc::new(all_dst),
            gat_src: Rc::new(gat_src),
            gat_dst: Rc::new(gat_dst),
            gat_edge_feat,
        }
    }
}

/// Forward execution mode. Finite-difference checks run `Train` with a fixed
/// dropout seed and `update_running: false` so repeated evaluations are
/// consistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64, update_running: bool },
    Eval,
}

/// A finished forward pass: the tape (for backward), the probability output
/// id, and the leaf id of every trainable parameter.
pub struct Forward<T> {
    pub tape: Tape<T>,
    pub probs: usize,
    pub leaves: BTreeMap<String, usize>,
}

/// Message passing with per-edge-kind weights followed by a GRU-style update:
/// m_v = sum over incoming edges of W_kind h_u + b_kind, then
/// h' = (1-z) * h + z * tanh(W_h m + U_h (r*h) + b_h).
pub fn gated_layer_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: usize,
    leaves: &BTreeMap<String, usize>,
    prefix: &str,
    edges: &EdgeIndex,
    n: usize,
    use_edge_features: bool,
) -> usize {
    let width = tape.value(h).cols;
    let mut msg = tape.leaf(Tensor::zeros(n, width), false);
    let groups: Vec<(String, Rc<Vec<u32>>, Rc<Vec<u32>>)> = if use_edge_features {
        EDGE_KIND_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| {
                (name.to_string(), edges.by_kind[k].0.clone(), edges.by_kind[k].1.clone())
            })
            .collect()
    } else {
        vec![("all".to_string(), edges.all_src.clone(), edges.all_dst.clone())]
    };
    for (kind, src, dst) in groups {
        if src.is_empty() {
            continue;
        }
        let gathered = tape.gather(h, src);
        let transformed = tape.matmul(gathered, leaves[&format!("{prefix}.msg.{kind}.w")]);
        let biased = tape.add_row(transformed, leaves[&format!("{prefix}.msg.{kind}.b")]);
        let pooled = tape.scatter_add(biased, dst, n);
        msg = tape.add(msg, pooled);
    }

    let gate = |tape: &mut Tape<T>, w: &str, u: &str, b: &str, state: usize| {
        let a = tape.matmul(msg, leaves[w]);
        let c = tape.matmul(state, leaves[u]);
        let s = tape.add(a, c);
        tape.add_row(s, leaves[b])
    };
    let zp = gate(tape, &format!("{prefix}.gru.wz"), &format!("{prefix}.gru.uz"), &format!("{prefix}.gru.bz"), h);
    let z = tape.sigmoid(zp);
    let rp = gate(tape, &format!("{prefix}.gru.wr"), &format!("{prefix}.gru.ur"), &format!("{prefix}.gru.br"), h);
    let r = tape.sigmoid(rp);
    let rh = tape.mul(r, h);
    let cp = gate(tape, &format!("{prefix}.gru.wh"), &format!("{prefix}.gru.uh"), &format!("{prefix}.gru.bh"), rh);
    let cand = tape.tanh(cp);
    let keep_gate = tape.affine(z, -1.0, 1.0);
    let keep = tape.mul(keep_gate, h);
    let update = tape.mul(z, cand);
    tape.add(keep, update)
}

pub struct GatOut {
    pub out: usize,
    /// Per-head attention weights over the gat edge list, for inspection.
    pub attention: Vec<usize>,
}

/// GATv2-style multi-head attention: score(u->v) = a^T LeakyReLU(W [h_u ||
/// h_v || e_uv]), softmax over each destination's incoming edges, head-wise
/// weighted value sums concatenated and projected back to the layer width.
pub fn gat_layer_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: usize,
    leaves: &BTreeMap<String, usize>,
    prefix: &str,
    edges: &EdgeIndex,
    n: usize,
    heads: usize,
) -> GatOut {
    let src_f = tape.gather(h, edges.gat_src.clone());
    let dst_f = tape.gather(h, edges.gat_dst.clone());
    let ef = tape.leaf(Tensor::from_matrix(&edges.gat_edge_feat), false);
    let cat = tape.concat_cols(&[src_f, dst_f, ef]);
    let mut pooled = Vec::with_capacity(heads);
    let mut attention = Vec::with_capacity(heads);
    for k in 0..heads {
        let w = leaves[&format!("{prefix}.att.{k}.w")];
        let a = leaves[&format!("{prefix}.att.{k}.a")];
        let v = leaves[&format!("{prefix}.att.{k}.v")];
        let hidden = tape.matmul(cat, w);
        let act = tape.leaky_relu(hidden, LEAKY_SLOPE);
        let score = tape.matmul(act, a);
        let alpha = tape.segment_softmax(score, edges.gat_dst.clone(), n);
        let vals = tape.matmul(src_f, v);
        let weighted = tape.mul_col(vals, alpha);
        pooled.push(tape.scatter_add(weighted, edges.gat_dst.clone(), n));
        attention.push(alpha);
    }
    let cat_heads = tape.concat_cols(&pooled);
    let projected = tape.matmul(cat_heads, leaves[&format!("{prefix}.att.out.w")]);
    let out = tape.add_row(projected, leaves[&format!("{prefix}.att.out.b")]);
    GatOut { out, attention }
}

/// Full forward pass. Training mode uses batch statistics and dropout;
/// inference uses running statistics with dropout off.
pub fn model_forward<T: Scalar>(
    params: &mut ModelParams<T>,
    graph: &GraphTensors,
    mode: Mode,
) -> Result<Forward<T>, NnError> {
    let config = params.config.clone();
    config.validate()?;
    if graph.x.cols != config.input_dim {
        return Err(NnError::DimensionMismatch { expected: config.input_dim, actual: graph.x.cols });
    }
    let expected_e = if config.use_edge_features { EDGE_KIND_NAMES.len() } else { 1 };
    if !graph.edges.is_empty() && graph.edge_feat.cols != expected_e {
        return Err(NnError::Shape(format!(
            "edge features have width {}, model expects {}",
            graph.edge_feat.cols, expected_e
        )));
    }

    let mut tape = Tape::new();
    let mut leaves = BTreeMap::new();
    for (name, t) in &params.tensors {
        if !is_buffer(name) {
            leaves.insert(name.clone(), tape.leaf(t.clone(), true));
        }
    }
    let edges = EdgeIndex::build(graph);

    let x = tape.leaf(Tensor::from_matrix(&graph.x), false);
    let xw = tape.matmul(x, leaves["input_proj.w"]);
    let mut h = tape.add_row(xw, leaves["input_proj.b"]);

    let mut prev = config.hidden_dims[0];
    for (i, &width) in config.hidden_dims.iter().enumerate() {
        let prefix = format!("gnn.{i}");
        let h_in = h;
        let mut cur = h;
        if prev != width {
            cur = tape.matmul(cur, leaves[&format!("{prefix}.proj_in.w")]);
        }
        cur = match config.layer_kind {
            LayerKind::Gated => gated_layer_forward(
                &mut tape,
                cur,
                &leaves,
                &prefix,
                &edges,
                graph.n,
                config.use_edge_features,
            ),
            LayerKind::Gat => {
                gat_layer_forward(&mut tape, cur, &leaves, &prefix, &edges, graph.n, config.attention_heads)
                    .out
            }
        };
        cur = tape.relu(cur);
        cur = batch_norm_block(&mut tape, params, &leaves, &prefix, cur, mode)?;
        if let Mode::Train { dropout_seed, .. } = mode {
            if config.dropout > 0.0 && graph.n > 0 {
                let mask = dropout_mask::<T>(
                    graph.n,
                    width,
                    config.dropout,
                    crate::features::mix_seed(dropout_seed, i as u64),
                );
                let mask = tape.leaf(mask, false);
                cur = tape.mul(cur, mask);
            }
        }
        let skip = if prev != width {
            tape.matmul(h_in, leaves[&format!("{prefix}.skip.w")])
        } else {
            h_in
        };
        h = tape.add(cur, skip);
        prev = width;
    }

    let mut cur = h;
    for j in 0..config.head_dims.len() {
        let m = tape.matmul(cur, leaves[&format!("head.{j}.w")]);
        cur = tape.add_row(m, leaves[&format!("head.{j}.b")]);
        if j + 1 < config.head_dims.len() {
            cur = tape.relu(cur);
        }
    }
    let probs = tape.sigmoid(cur);
    if !tape.value(probs).all_finite() {
        return Err(NnError::Numerical("non-finite probabilities".into()));
    }
    Ok(Forward { tape, probs, leaves })
}

fn batch_norm_block<T: Scalar>(
    tape: &mut Tape<T>,
    params: &mut ModelParams<T>,
    leaves: &BTreeMap<String, usize>,
    prefix: &str,
    h: usize,
    mode: Mode,
) -> Result<usize, NnError> {
    let gamma = leaves[&format!("{prefix}.bn.gamma")];
    let beta = leaves[&format!("{prefix}.bn.beta")];
    match mode {
        Mode::Train { update_running, .. } => {
            let (out, mean, var) = tape.batch_norm(h, gamma, beta, BN_EPS);
            if update_running {
                let mom = T::from_f64(BN_MOMENTUM);
                let keep = T::from_f64(1.0 - BN_MOMENTUM);
                let rm = params.tensors.get_mut(&format!("{prefix}.bn.running_mean")).unwrap();
                for (r, &m) in rm.data.iter_mut().zip(&mean) {
                    *r = keep * *r + mom * m;
                }
                let rv = params.tensors.get_mut(&format!("{prefix}.bn.running_var")).unwrap();
                for (r, &v) in rv.data.iter_mut().zip(&var) {
                    *r = keep * *r + mom * v;
                }
            }
            Ok(out)
        }
        Mode::Eval => {
            // pure affine map from running statistics
            let gamma_t = &params.tensors[&format!("{prefix}.bn.gamma")];
            let beta_t = &params.tensors[&format!("{prefix}.bn.beta")];
            let rm = &params.tensors[&format!("{prefix}.bn.running_mean")];
            let rv = &params.tensors[&format!("{prefix}.bn.running_var")];
            let eps = T::from_f64(BN_EPS);
            let d = gamma_t.cols;
            let mut scale = Tensor::zeros(1, d);
            let mut shift = Tensor::zeros(1, d);
            for c in 0..d {
                let s = gamma_t.data[c] / (rv.data[c] + eps).sqrt();
                scale.data[c] = s;
                shift.data[c] = beta_t.data[c] - rm.data[c] * s;
            }
            let scale = tape.leaf(scale, false);
            let shift = tape.leaf(shift, false);
            let scaled = tape.mul_row(h, scale);
            Ok(tape.add_row(scaled, shift))
        }
    }
}

/// Inverted dropout mask: entries are 0 with probability p, else 1/(1-p).
fn dropout_mask<T: Scalar>(n: usize, d: usize, p: f64, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::from_f64(1.0 / (1.0 - p));
    let data = (0..n * d)
        .map(|_| if rng.gen::<f64>() < p { T::ZERO } else { keep })
        .collect();
    Tensor::from_vec(n, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::EDGE_BLOCK_WIDTH;

    fn small_config(kind: LayerKind) -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            gnn_layers: 2,
            hidden_dims: vec![8, 4],
            head_dims: vec![4, 1],
            dropout: 0.0,
            layer_kind: kind,
            attention_heads: 2,
            use_edge_features: true,
            threshold: 0.5,
            seed: 11,
        }
    }

    fn toy_graph(seed: u64, n: usize, extra_edges: &[(u32, u32, u8)]) -> GraphTensors {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<(u32, u32, u8)> = Vec::new();
        for v in 1..n as u32 {
            edges.push((v - 1, v, (v % 5) as u8));
        }
        edges.extend_from_slice(extra_edges);
        let x = Matrix {
            rows: n,
            cols: 6,
            data: (0..n * 6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let mut edge_feat = Matrix::zeros(edges.len(), EDGE_BLOCK_WIDTH);
        for (i, e) in edges.iter().enumerate() {
            edge_feat.set(i, e.2 as usize, 1.0);
        }
        GraphTensors { n, x, edges, edge_feat, labels: None }
    }

    #[test]
    fn zero_parameters_give_half_probabilities() {
        let config = small_config(LayerKind::Gated);
        let mut params: ModelParams<f64> = init_params(&config).unwrap();
        for (name, t) in params.tensors.iter_mut() {
            if !name.contains("running_var") {
                t.data.fill(0.0);
            }
        }
        let graph = toy_graph(3, 5, &[]);
        let fwd = model_forward(&mut params, &graph, Mode::Eval).unwrap();
        for &p in &fwd.tape.value(fwd.probs).data {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gated_layer_zero_params_halve_state() {
        let n = 3;
        let mut tape: Tape<f64> = Tape::new();
        let h = tape.leaf(
            Tensor::from_vec(n, 2, vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25]),
            false,
        );
        let mut leaves = BTreeMap::new();
        for kind in EDGE_KIND_NAMES {
            leaves.insert(format!("g.msg.{kind}.w"), tape.leaf(Tensor::zeros(2, 2), true));
            leaves.insert(format!("g.msg.{kind}.b"), tape.leaf(Tensor::zeros(1, 2), true));
        }
        for gate in ["z", "r", "h"] {
            leaves.insert(format!("g.gru.w{gate}"), tape.leaf(Tensor::zeros(2, 2), true));
            leaves.insert(format!("g.gru.u{gate}"), tape.leaf(Tensor::zeros(2, 2), true));
            leaves.insert(format!("g.gru.b{gate}"), tape.leaf(Tensor::zeros(1, 2), true));
        }
        let graph = GraphTensors {
            n,
            x: Matrix::zeros(n, 2),
            edges: vec![(0, 1, 0), (1, 2, 1)],
            edge_feat: Matrix::zeros(2, 5),
            labels: None,
        };
        let edges = EdgeIndex::build(&graph);
        let out = gated_layer_forward(&mut tape, h, &leaves, "g", &edges, n, true);
        let hv = tape.value(h).clone();
        for (o, i) in tape.value(out).data.iter().zip(&hv.data) {
            assert!((o - 0.5 * i).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_forced_closed_preserves_state() {
        // large negative bias on z -> z ~ 0 -> h' ~ h
        let n = 2;
        let mut tape: Tape<f64> = Tape::new();
        let h = tape.leaf(Tensor::from_vec(n, 2, vec![0.3, -0.7, 1.1, 0.9]), false);
        let mut leaves = BTreeMap::new();
        for kind in EDGE_KIND_NAMES {
            leaves.insert(format!("g.msg.{kind}.w"), tape.leaf(Tensor::zeros(2, 2), true));
            leaves.insert(format!("g.msg.{kind}.b"), tape.leaf(Tensor::zeros(1, 2), true));
        }
        for gate in ["z", "r", "h"] {
            leaves.insert(format!("g.gru.w{gate}"), tape.leaf(Tensor::zeros(2, 2), true));
            leaves.insert(format!("g.gru.u{gate}"), tape.leaf(Tensor::zeros(2, 2), true));
            let bias = if gate == "z" { -40.0 } else { 0.0 };
            leaves.insert(
                format!("g.gru.b{gate}"),
                tape.leaf(Tensor::from_vec(1, 2, vec![bias, bias]), true),
            );
        }
        let graph = GraphTensors {
            n,
            x: Matrix::zeros(n, 2),
            edges: vec![(0, 1, 0)],
            edge_feat: Matrix::zeros(1, 5),
            labels: None,
        };
        let edges = EdgeIndex::build(&graph);
        let out = gated_layer_forward(&mut tape, h, &leaves, "g", &edges, n, true);
        let hv = tape.value(h).clone();
        for (o, i) in tape.value(out).data.iter().zip(&hv.data) {
            assert!((o - i).abs() < 1e-9);
        }
    }

    /// Independent dense recomputation of the gated layer on a 3-node graph.
    #[test]
    fn gated_layer_matches_dense_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 3;
        let w = 2;
        let rand_t = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        let h_t = rand_t(&mut rng, n, w);
        let mut tensors: BTreeMap<String, Tensor<f64>> = BTreeMap::new();
        for kind in EDGE_KIND_NAMES {
            tensors.insert(format!("g.msg.{kind}.w"), rand_t(&mut rng, w, w));
            tensors.insert(format!("g.msg.{kind}.b"), rand_t(&mut rng, 1, w));
        }
        for gate in ["z", "r", "h"] {
            tensors.insert(format!("g.gru.w{gate}"), rand_t(&mut rng, w, w));
            tensors.insert(format!("g.gru.u{gate}"), rand_t(&mut rng, w, w));
            tensors.insert(format!("g.gru.b{gate}"), rand_t(&mut rng, 1, w));
        }
        let edge_list: Vec<(u32, u32, u8)> = vec![(0, 1, 0), (2, 1, 2), (1, 2, 1)];

        let mut tape = Tape::new();
        let h = tape.leaf(h_t.clone(), false);
        let mut leaves = BTreeMap::new();
        for (name, t) in &tensors {
            leaves.insert(name.clone(), tape.leaf(t.clone(), true));
        }
        let graph = GraphTensors {
            n,
            x: Matrix::zeros(n, 2),
            edges: edge_list.clone(),
            edge_feat: Matrix::zeros(3, 5),
            labels: None,
        };
        let edges = EdgeIndex::build(&graph);
        let out = gated_layer_forward(&mut tape, h, &leaves, "g", &edges, n, true);
        let got = tape.value(out).clone();

        // straight-line reference
        let kind_name = |k: u8| EDGE_KIND_NAMES[k as usize];
        let mut msg = vec![vec![0.0f64; w]; n];
        for &(s, d, k) in &edge_list {
            let wm = &tensors[&format!("g.msg.{}.w", kind_name(k))];
            let bm = &tensors[&format!("g.msg.{}.b", kind_name(k))];
            for j in 0..w {
                let mut acc = bm.data[j];
                for i in 0..w {
                    acc += h_t.data[s as usize * w + i] * wm.data[i * w + j];
                }
                msg[d as usize][j] += acc;
            }
        }
        let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
        for v in 0..n {
            for j in 0..w {
                let lin = |wn: &str, un: &str, bn: &str, state: &dyn Fn(usize) -> f64| {
                    let wt = &tensors[wn];
                    let ut = &tensors[un];
                    let bt = &tensors[bn];
                    let mut acc = bt.data[j];
                    for i in 0..w {
                        acc += msg[v][i] * wt.data[i * w + j];
                        acc += state(i) * ut.data[i * w + j];
                    }
                    acc
                };
                let hv = |i: usize| h_t.data[v * w + i];
                let z = sigma(lin("g.gru.wz", "g.gru.uz", "g.gru.bz", &hv));
                let r_gate = |i: usize| {
                    let mut acc = tensors["g.gru.br"].data[i];
                    for ii in 0..w {
                        acc += msg[v][ii] * tensors["g.gru.wr"].data[ii * w + i];
                        acc += hv(ii) * tensors["g.gru.ur"].data[ii * w + i];
                    }
                    sigma(acc) * hv(i)
                };
                let cand = lin("g.gru.wh", "g.gru.uh", "g.gru.bh", &r_gate).tanh();
                let expect = (1.0 - z) * hv(j) + z * cand;
                let actual = got.data[v * w + j];
                assert!((expect - actual).abs() < 1e-10, "node {v} dim {j}: {expect} vs {actual}");
            }
        }
    }

    #[test]
    fn gat_self_loop_only_gets_full_attention() {
        let config = small_config(LayerKind::Gat);
        let params: ModelParams<f64> = init_params(&config).unwrap();
        // isolated third node: only a synthesized self-loop points at it
        let graph = toy_graph(5, 3, &[]);
        let mut graph = graph;
        graph.edges.retain(|&(_, d, _)| d != 2);
        graph.edge_feat = Matrix::zeros(graph.edges.len(), EDGE_BLOCK_WIDTH);
        for (i, e) in graph.edges.clone().iter().enumerate() {
            graph.edge_feat.set(i, e.2 as usize, 1.0);
        }
        let edges = EdgeIndex::build(&graph);
        let mut tape = Tape::new();
        let mut leaves = BTreeMap::new();
        for (name, t) in &params.tensors {
            if !is_buffer(name) {
                leaves.insert(name.clone(), tape.leaf(t.clone(), true));
            }
        }
        let x = tape.leaf(Tensor::from_matrix(&graph.x), false);
        let xw = tape.matmul(x, leaves["input_proj.w"]);
        let h = tape.add_row(xw, leaves["input_proj.b"]);
        let out = gat_layer_forward(&mut tape, h, &leaves, "gnn.0", &edges, graph.n, 2);
        // find the self-loop row for node 2
        let row = edges.gat_dst.iter().position(|&d| d == 2).unwrap();
        for att in &out.attention {
            assert!((tape.value(*att).data[row] - 1.0).abs() < 1e-12);
        }
        let _ = params.tensors.len();
    }

    #[test]
    fn gat_identical_neighbors_split_attention_evenly() {
        let config = small_config(LayerKind::Gat);
        let params: ModelParams<f64> = init_params(&config).unwrap();
        // nodes 0 and 1 identical, both pointing at node 2
        let x = Matrix {
            rows: 3,
            cols: 6,
            data: [[0.3; 6], [0.3; 6], [0.9; 6]].concat().to_vec(),
        };
        let edges_list = vec![(0u32, 2u32, 1u8), (1, 2, 1)];
        let mut edge_feat = Matrix::zeros(2, EDGE_BLOCK_WIDTH);
        edge_feat.set(0, 1, 1.0);
        edge_feat.set(1, 1, 1.0);
        let graph = GraphTensors { n: 3, x, edges: edges_list, edge_feat, labels: None };
        let edges = EdgeIndex::build(&graph);
        let mut tape = Tape::new();
        let mut leaves = BTreeMap::new();
        for (name, t) in &params.tensors {
            if !is_buffer(name) {
                leaves.insert(name.clone(), tape.leaf(t.clone(), true));
            }
        }
        let x = tape.leaf(Tensor::from_matrix(&graph.x), false);
        let xw = tape.matmul(x, leaves["input_proj.w"]);
        let h = tape.add_row(xw, leaves["input_proj.b"]);
        let out = gat_layer_forward(&mut tape, h, &leaves, "gnn.0", &edges, graph.n, 2);
        let rows: Vec<usize> =
            edges.gat_dst.iter().enumerate().filter(|(_, &d)| d == 2).map(|(i, _)| i).collect();
        assert_eq!(rows.len(), 2);
        for att in &out.attention {
            let a = tape.value(*att);
            assert!((a.data[rows[0]] - 0.5).abs() < 1e-9);
            assert!((a.data[rows[1]] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn gat_attention_sums_to_one_per_destination() {
        let config = small_config(LayerKind::Gat);
        let mut params: ModelParams<f64> = init_params(&config).unwrap();
        let graph = toy_graph(9, 8, &[(0, 4, 3), (2, 4, 2), (7, 4, 4)]);
        let fwd = model_forward(&mut params, &graph, Mode::Eval).unwrap();
        assert!(fwd.tape.value(fwd.probs).all_finite());
        // direct layer check
        let edges = EdgeIndex::build(&graph);
        let mut tape: Tape<f64> = Tape::new();
        let mut leaves = BTreeMap::new();
        for (name, t) in &params.tensors {
            if !is_buffer(name) {
                leaves.insert(name.clone(), tape.leaf(t.clone(), true));
            }
        }
        let x = tape.leaf(Tensor::from_matrix(&graph.x), false);
        let xw = tape.matmul(x, leaves["input_proj.w"]);
        let h = tape.add_row(xw, leaves["input_proj.b"]);
        let out = gat_layer_forward(&mut tape, h, &leaves, "gnn.0", &edges, graph.n, 2);
        for att in &out.attention {
            let a = tape.value(*att);
            let mut sums = vec![0.0; graph.n];
            for (i, &d) in edges.gat_dst.iter().enumerate() {
                sums[d as usize] += a.data[i];
            }
            for (v, s) in sums.iter().enumerate() {
                if edges.gat_dst.contains(&(v as u32)) {
                    assert!((s - 1.0).abs() < 1e-6, "node {v} attention sums to {s}");
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_probabilities_in_range() {
        for kind in [LayerKind::Gated, LayerKind::Gat] {
            let config = small_config(kind);
            let mut params: ModelParams<f64> = init_params(&config).unwrap();
            let graph = toy_graph(13, 7, &[(6, 0, 4)]);
            let a = model_forward(&mut params, &graph, Mode::Eval).unwrap();
            let b = model_forward(&mut params, &graph, Mode::Eval).unwrap();
            let pa = a.tape.value(a.probs);
            let pb = b.tape.value(b.probs);
            assert_eq!(pa.data, pb.data);
            assert_eq!(pa.rows, graph.n);
            assert!(pa.data.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn permutation_equivariance() {
        let config = small_config(LayerKind::Gated);
        let mut params: ModelParams<f64> = init_params(&config).unwrap();
        let graph = toy_graph(21, 6, &[(5, 0, 3), (2, 5, 2)]);
        let base = model_forward(&mut params, &graph, Mode::Eval).unwrap();
        let base_probs = base.tape.value(base.probs).clone();

        // relabel nodes with a fixed permutation
        let perm: Vec<u32> = vec![3, 0, 5, 1, 4, 2]; // old -> new
        let mut x = Matrix::zeros(6, 6);
        for old in 0..6 {
            let new = perm[old] as usize;
            x.row_mut(new).copy_from_slice(graph.x.row(old));
        }
        let edges: Vec<(u32, u32, u8)> =
            graph.edges.iter().map(|&(s, d, k)| (perm[s as usize], perm[d as usize], k)).collect();
        let permuted =
            GraphTensors { n: 6, x, edges, edge_feat: graph.edge_feat.clone(), labels: None };
        let out = model_forward(&mut params, &permuted, Mode::Eval).unwrap();
        let out_probs = out.tape.value(out.probs);
        for old in 0..6 {
            let new = perm[old] as usize;
            assert!((base_probs.data[old] - out_probs.data[new]).abs() < 1e-6);
        }
    }

    #[test]
    fn edge_kind_collapse_is_invisible_without_edge_features() {
        let mut config = small_config(LayerKind::Gated);
        config.use_edge_features = false;
        let mut params: ModelParams<f64> = init_params(&config).unwrap();
        let graph = toy_graph(31, 6, &[(5, 1, 4)]);
        let mut collapsed = graph.clone();
        for e in &mut collapsed.edges {
            e.2 = 0;
        }
        // constant-1 edge feature column in both
        let ones = Matrix { rows: graph.edges.len(), cols: 1, data: vec![1.0; graph.edges.len()] };
        let mut graph = graph;
        graph.edge_feat = ones.clone();
        collapsed.edge_feat = ones;
        let a = model_forward(&mut params, &graph, Mode::Eval).unwrap();
        let b = model_forward(&mut params, &collapsed, Mode::Eval).unwrap();
        assert_eq!(a.tape.value(a.probs).data, b.tape.value(b.probs).data);
    }

    #[test]
    fn batch_norm_inference_is_a_fixed_affine_map() {
        let config = small_config(LayerKind::Gated);
        let mut params: ModelParams<f64> = init_params(&config).unwrap();
        let graph = toy_graph(41, 5, &[]);
        let a = model_forward(&mut params, &graph, Mode::Eval).unwrap();
        let b = model_forward(&mut params, &graph, Mode::Eval).unwrap();
        assert_eq!(a.tape.value(a.probs).data, b.tape.value(b.probs).data);
    }

    /// Full-model gradients against central finite differences, both layer
    /// kinds, reduced widths, f64.
    #[test]
    fn full_model_gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        for kind in [LayerKind::Gated, LayerKind::Gat] {
            let config = ModelConfig {
                input_dim: 5,
                gnn_layers: 2,
                hidden_dims: vec![6, 4],
                head_dims: vec![3, 1],
                dropout: 0.2,
                layer_kind: kind,
                attention_heads: 2,
                use_edge_features: true,
                threshold: 0.5,
                seed: 5,
            };
            let params: ModelParams<f64> = init_params(&config).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let n = 6;
            let edges: Vec<(u32, u32, u8)> =
                vec![(0, 1, 0), (1, 2, 1), (2, 3, 2), (3, 4, 3), (4, 5, 4), (5, 0, 0), (2, 5, 1)];
            let mut edge_feat = Matrix::zeros(edges.len(), 5);
            for (i, e) in edges.iter().enumerate() {
                edge_feat.set(i, e.2 as usize, 1.0);
            }
            let x = Matrix {
                rows: n,
                cols: 5,
                data: (0..n * 5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            let graph = GraphTensors { n, x, edges, edge_feat, labels: None };
            let mode = Mode::Train { dropout_seed: 99, update_running: false };

            let loss_of = |params: &ModelParams<f64>| -> f64 {
                let mut p = params.clone();
                let mut fwd = model_forward(&mut p, &graph, mode).unwrap();
                let loss =
                    crate::nn::weighted_bce_on_tape(&mut fwd.tape, fwd.probs, &labels, 2.0)
                        .unwrap();
                fwd.tape.value(loss).item()
            };

            let mut p = params.clone();
            let mut fwd = model_forward(&mut p, &graph, mode).unwrap();
            let loss =
                crate::nn::weighted_bce_on_tape(&mut fwd.tape, fwd.probs, &labels, 2.0).unwrap();
            let grads = fwd.tape.backward(loss).unwrap();

            let eps = 1e-4;
            let mut checked = 0;
            for (name, &leaf) in &fwd.leaves {
                let Some(g) = grads[leaf].as_ref() else { continue };
                let len = g.data.len();
                for k in [0, len / 2, len - 1] {
                    let mut plus = params.clone();
                    plus.tensors.get_mut(name).unwrap().data[k] += eps;
                    let mut minus = params.clone();
                    minus.tensors.get_mut(name).unwrap().data[k] -= eps;
                    let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                    let an = g.data[k];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        ((an - fd) / denom).abs() < 1e-4,
                        "{kind:?} {name}[{k}]: analytic {an} vs fd {fd}"
                    );
                    checked += 1;
                }
            }
            assert!(checked >= 50, "only {checked} parameters checked");
        }
    }
}
