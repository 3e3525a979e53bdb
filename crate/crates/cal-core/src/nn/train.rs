//! K-fold training with class-weighted BCE, reduce-on-plateau scheduling and
//! early stopping, all driven by validation F1. Deterministic end to end
//! under a fixed seed.

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::{Checkpoint, TrainMeta};
use super::loss::weighted_bce_on_tape;
use super::model::{graph_tensors, init_params, model_forward, GraphTensors, Mode, ModelParams};
use super::{stratified_folds, ModelConfig, NnError, TrainConfig};
use crate::cpg::Cpg;
use crate::features::{assemble, mix_seed, textual_tokens, train_skipgram, EmbeddingTable, FeatureConfig};
use crate::par;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// One training example: a graph, its canonical digest, and the ids of its
/// security-sensitive nodes.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub cpg: Cpg,
    pub digest: String,
    pub sensitive_nodes: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub val_accuracy: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub epochs: Vec<EpochLog>,
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub folds: Vec<FoldMetrics>,
    pub best_fold: usize,
    /// Validation probabilities of the winning fold at its best epoch,
    /// keyed by graph digest.
    pub best_val_probs: BTreeMap<String, Vec<f32>>,
}

/// Train over the train/validation pool (the hold-out split stays outside).
/// Returns the checkpoint with the best validation F1 across folds.
pub fn train(
    trainval: &[LabeledGraph],
    feature_config: &FeatureConfig,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutput, NnError> {
    if trainval.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    feature_config.validate()?;

    // corpus-level text embedding table (one token sequence per node)
    let text_table = train_text_table(trainval.iter().map(|g| &g.cpg), feature_config)?;

    // per-graph features; parallel, order-preserving
    let prepared: Vec<Result<GraphTensors, NnError>> = par::map_ref_ordered(trainval, |g| {
        let feats = assemble(&g.cpg, feature_config, Some(&text_table))?;
        Ok(graph_tensors(&g.cpg, &feats, Some(&g.sensitive_nodes)))
    });
    let graphs: Vec<GraphTensors> = prepared.into_iter().collect::<Result<_, _>>()?;

    let mut model_config = model_config.clone();
    if model_config.input_dim == 0 {
        model_config.input_dim = feature_config.node_dim();
    }
    if model_config.input_dim != feature_config.node_dim() {
        return Err(NnError::DimensionMismatch {
            expected: model_config.input_dim,
            actual: feature_config.node_dim(),
        });
    }
    model_config.validate()?;

    let ratios: Vec<(f64, String)> = trainval
        .iter()
        .zip(&graphs)
        .map(|(g, t)| {
            let labels = t.labels.as_ref().unwrap();
            let pos = labels.iter().filter(|&&y| y > 0.5).count();
            (pos as f64 / labels.len().max(1) as f64, g.digest.clone())
        })
        .collect();
    let fold_of = stratified_folds(&ratios, train_config.folds)?;

    // folds are independent single-threaded trainings; run them in parallel
    // and pick the winner in fold order, so results never depend on timing
    let fold_ids: Vec<usize> = (0..train_config.folds).collect();
    let fold_runs: Vec<Result<(FoldMetrics, ModelParams<f32>, Vec<Vec<f32>>), NnError>> =
        par::map_ordered(fold_ids, |fold| {
            let train_idx: Vec<usize> =
                (0..graphs.len()).filter(|&i| fold_of[i] != fold).collect();
            let val_idx: Vec<usize> =
                (0..graphs.len()).filter(|&i| fold_of[i] == fold).collect();
            train_one_fold(fold, &graphs, &train_idx, &val_idx, &model_config, train_config)
        });

    let mut fold_metrics = Vec::new();
    let mut best: Option<(usize, f64, ModelParams<f32>, usize, BTreeMap<String, Vec<f32>>)> = None;
    for (fold, run) in fold_runs.into_iter().enumerate() {
        let (metrics, params, val_probs) = run?;
        let is_better = match &best {
            None => true,
            Some((_, f1, ..)) => metrics.best_val_f1 > *f1,
        };
        if is_better {
            let val_idx: Vec<usize> = (0..graphs.len()).filter(|&i| fold_of[i] == fold).collect();
            let probs_by_digest: BTreeMap<String, Vec<f32>> = val_idx
                .iter()
                .zip(&val_probs)
                .map(|(&i, p)| (trainval[i].digest.clone(), p.clone()))
                .collect();
            best = Some((fold, metrics.best_val_f1, params, metrics.best_epoch, probs_by_digest));
        }
        fold_metrics.push(metrics);
    }
    let (best_fold, best_f1, best_params, best_epoch, best_val_probs) = best.unwrap();

    let checkpoint = Checkpoint {
        model_config: model_config.clone(),
        feature_config: feature_config.clone(),
        params: best_params,
        text_table,
        meta: TrainMeta {
            epochs_run: best_epoch + 1,
            best_val_f1: best_f1,
            best_fold,
            fold_assignment: trainval
                .iter()
                .enumerate()
                .map(|(i, g)| (g.digest.clone(), fold_of[i]))
                .collect(),
        },
    };
    Ok(TrainOutput { checkpoint, folds: fold_metrics, best_fold, best_val_probs })
}

/// Corpus-level text table: one token sequence per node, graphs in order.
pub fn train_text_table<'a>(
    cpgs: impl Iterator<Item = &'a Cpg>,
    feature_config: &FeatureConfig,
) -> Result<EmbeddingTable, NnError> {
    let mut corpus: Vec<Vec<String>> = Vec::new();
    for cpg in cpgs {
        corpus.extend(cpg.nodes.iter().map(textual_tokens));
    }
    Ok(train_skipgram(
        &corpus,
        feature_config.text_dim,
        &feature_config.skipgram,
        mix_seed(feature_config.seed, 0x7e57),
    )
    .map_err(crate::features::FeatureError::from)?)
}

fn train_one_fold(
    fold: usize,
    graphs: &[GraphTensors],
    train_idx: &[usize],
    val_idx: &[usize],
    model_config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(FoldMetrics, ModelParams<f32>, Vec<Vec<f32>>), NnError> {
    let (pos, neg) = train_idx
        .iter()
        .flat_map(|&i| graphs[i].labels.as_ref().unwrap())
        .fold((0u64, 0u64), |(p, n), &y| if y > 0.5 { (p + 1, n) } else { (p, n + 1) });
    let pos_weight = if pos == 0 { 1.0 } else { neg as f64 / pos as f64 };

    let init_config = ModelConfig { seed: mix_seed(model_config.seed, fold as u64), ..model_config.clone() };
    let mut params: ModelParams<f32> = init_params(&init_config)?;
    params.config = model_config.clone();
    let mut adam = AdamState::new();
    let adam_cfg = AdamConfig::default();
    let mut lr = cfg.learning_rate;

    let mut epochs = Vec::new();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_state: Option<(ModelParams<f32>, usize, Vec<Vec<f32>>, [f64; 4])> = None;
    let mut since_improve = 0usize;
    let mut since_sched = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut order = train_idx.to_vec();
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, (fold as u64) << 32 | epoch as u64));
        order.shuffle(&mut rng);

        let mut total_loss = 0.0f64;
        for &gi in &order {
            let graph = &graphs[gi];
            let labels: Vec<f32> = graph.labels.clone().unwrap();
            let mode = Mode::Train {
                dropout_seed: mix_seed(cfg.seed, ((fold * 1000 + epoch) as u64) << 20 | gi as u64),
                update_running: true,
            };
            let mut fwd = model_forward(&mut params, graph, mode)?;
            let loss = weighted_bce_on_tape(&mut fwd.tape, fwd.probs, &labels, pos_weight)?;
            total_loss += fwd.tape.value(loss).item() as f64;
            let grads = fwd.tape.backward(loss)?;
            let grads_by_name: BTreeMap<String, super::Tensor<f32>> = fwd
                .leaves
                .iter()
                .filter_map(|(name, &leaf)| grads[leaf].clone().map(|g| (name.clone(), g)))
                .collect();
            adam_step(&mut params, &grads_by_name, &mut adam, lr, cfg.weight_decay, &adam_cfg);
        }
        let train_loss = total_loss / train_idx.len().max(1) as f64;

        let (val_probs, cm) = evaluate(&mut params, graphs, val_idx, model_config.threshold)?;
        let (acc, prec, rec, f1) = prf(cm);
        epochs.push(EpochLog { epoch, train_loss, val_f1: f1, learning_rate: lr });

        // noise-level F1 wiggles must not reset the patience counters
        const MIN_DELTA: f64 = 1e-4;
        if f1 > best_f1 + MIN_DELTA {
            best_f1 = f1;
            best_state = Some((params.clone(), epoch, val_probs, [acc, prec, rec, f1]));
            since_improve = 0;
            since_sched = 0;
        } else {
            since_improve += 1;
            since_sched += 1;
            if since_sched >= cfg.scheduler_patience {
                lr *= cfg.scheduler_factor;
                since_sched = 0;
            }
            if since_improve >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let (best_params, best_epoch, val_probs, [acc, prec, rec, f1]) = best_state.unwrap();
    Ok((
        FoldMetrics {
            fold,
            best_epoch,
            best_val_f1: f1,
            val_accuracy: acc,
            val_precision: prec,
            val_recall: rec,
            epochs,
        },
        best_params,
        val_probs,
    ))
}

/// Inference over a set of graphs; pooled confusion counts at `threshold`.
fn evaluate(
    params: &mut ModelParams<f32>,
    graphs: &[GraphTensors],
    idx: &[usize],
    threshold: f64,
) -> Result<(Vec<Vec<f32>>, [u64; 4]), NnError> {
    let mut probs_out = Vec::with_capacity(idx.len());
    let mut cm = [0u64; 4]; // tp, tn, fp, fn
    for &i in idx {
        let graph = &graphs[i];
        let fwd = model_forward(params, graph, Mode::Eval)?;
        let probs = fwd.tape.value(fwd.probs).to_f32_vec();
        if let Some(labels) = &graph.labels {
            for (&p, &y) in probs.iter().zip(labels) {
                let flag = p as f64 >= threshold;
                let truth = y > 0.5;
                match (flag, truth) {
                    (true, true) => cm[0] += 1,
                    (false, false) => cm[1] += 1,
                    (true, false) => cm[2] += 1,
                    (false, true) => cm[3] += 1,
                }
            }
        }
        probs_out.push(probs);
    }
    Ok((probs_out, cm))
}

fn prf(cm: [u64; 4]) -> (f64, f64, f64, f64) {
    let [tp, tn, fp, fnn] = cm.map(|v| v as f64);
    let total = tp + tn + fp + fnn;
    let acc = if total > 0.0 { (tp + tn) / total } else { 0.0 };
    let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let rec = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
    let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
    (acc, prec, rec, f1)
}

/// Recompute features with the stored config (walk table per graph from the
/// stored seed, text table from the checkpoint) and run inference.
pub fn predict(cpg: &Cpg, checkpoint: &Checkpoint) -> Result<Vec<f32>, NnError> {
    let feats = assemble(cpg, &checkpoint.feature_config, Some(&checkpoint.text_table))?;
    if feats.x.cols != checkpoint.model_config.input_dim {
        return Err(NnError::DimensionMismatch {
            expected: checkpoint.model_config.input_dim,
            actual: feats.x.cols,
        });
    }
    let graph = graph_tensors(cpg, &feats, None);
    let mut params = checkpoint.params.clone();
    let fwd = model_forward(&mut params, &graph, Mode::Eval)?;
    Ok(fwd.tape.value(fwd.probs).to_f32_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::{build_cpg, canonical_hash};
    use crate::frontend::{parse, tokenize};
    use crate::nn::LayerKind;

    /// Tiny corpus: "sensitive" graphs call enc_update, benign ones call
    /// fmt_print; labels mark all nodes of functions calling enc_update.
    fn tiny_corpus(n: usize) -> Vec<LabeledGraph> {
        let mut out = Vec::new();
        for i in 0..n {
            let sensitive = i % 2 == 0;
            let callee = if sensitive { "enc_update" } else { "fmt_print" };
            let src = format!(
                "void work{i}(int a{i}, int b{i}) {{\n  int t{i} = a{i} + {i};\n  {callee}(t{i}, b{i});\n}}\n"
            );
            let cpg = build_cpg(&parse(tokenize(&src).unwrap()).unwrap(), &format!("g{i}.c"));
            let digest = canonical_hash(&cpg);
            let labels: BTreeSet<usize> = if sensitive {
                cpg.nodes.iter().map(|n| n.id).collect()
            } else {
                BTreeSet::new()
            };
            out.push(LabeledGraph { cpg, digest, sensitive_nodes: labels });
        }
        out
    }

    fn small_setup() -> (FeatureConfig, ModelConfig, TrainConfig) {
        let fc = FeatureConfig {
            walk_dim: 8,
            text_dim: 8,
            walk: crate::features::WalkParams {
                walk_length: 8,
                walks_per_node: 2,
                ..Default::default()
            },
            skipgram: crate::features::SkipgramConfig { epochs: 2, ..Default::default() },
            ..FeatureConfig::default()
        };
        let mc = ModelConfig {
            input_dim: 0,
            gnn_layers: 2,
            hidden_dims: vec![16, 8],
            head_dims: vec![8, 1],
            dropout: 0.1,
            layer_kind: LayerKind::Gated,
            attention_heads: 2,
            use_edge_features: true,
            threshold: 0.5,
            seed: 3,
        };
        let tc = TrainConfig { folds: 2, max_epochs: 8, early_stop_patience: 8, ..Default::default() };
        (fc, mc, tc)
    }

    #[test]
    fn loss_decreases_and_training_is_deterministic() {
        let corpus = tiny_corpus(8);
        let (fc, mc, tc) = small_setup();
        let out1 = train(&corpus, &fc, &mc, &tc).unwrap();
        for fm in &out1.folds {
            let first = fm.epochs.first().unwrap().train_loss;
            let later = fm.epochs.iter().take(5).map(|e| e.train_loss).fold(f64::MAX, f64::min);
            assert!(later < first, "fold {} loss never improved: {first} -> {later}", fm.fold);
        }
        let out2 = train(&corpus, &fc, &mc, &tc).unwrap();
        assert_eq!(out1.checkpoint.params.tensors, out2.checkpoint.params.tensors);
        assert_eq!(out1.folds, out2.folds);
        // serialized checkpoints bit-identical
        let mut a = Vec::new();
        let mut b = Vec::new();
        crate::nn::save_checkpoint(&out1.checkpoint, &mut a).unwrap();
        crate::nn::save_checkpoint(&out2.checkpoint, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_reproduces_validation_probabilities() {
        let corpus = tiny_corpus(8);
        let (fc, mc, tc) = small_setup();
        let out = train(&corpus, &fc, &mc, &tc).unwrap();
        for g in &corpus {
            if let Some(logged) = out.best_val_probs.get(&g.digest) {
                let fresh = predict(&g.cpg, &out.checkpoint).unwrap();
                assert_eq!(fresh.len(), g.cpg.nodes.len());
                for (a, b) in fresh.iter().zip(logged) {
                    assert!((a - b).abs() < 1e-6, "predict drifted: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn prediction_outputs_are_probabilities() {
        let corpus = tiny_corpus(6);
        let (fc, mc, tc) = small_setup();
        let out = train(&corpus, &fc, &mc, &tc).unwrap();
        let probs = predict(&corpus[0].cpg, &out.checkpoint).unwrap();
        assert_eq!(probs.len(), corpus[0].cpg.nodes.len());
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let corpus = tiny_corpus(6);
        let (fc, mc, tc) = small_setup();
        let out = train(&corpus, &fc, &mc, &tc).unwrap();
        let mut ckpt = out.checkpoint;
        ckpt.feature_config.enable_metrics = false; // narrower features than the model expects
        let err = predict(&corpus[0].cpg, &ckpt).unwrap_err();
        assert!(matches!(err, NnError::DimensionMismatch { .. }));
    }
}
