//! End-to-end pipeline checks over the synthetic corpus: frontend totality
//! and span fidelity, graph/file round trips, and a miniature train ->
//! predict -> annotate pass.

use cal_core::annotate::{assign_line_numbers, build_report, render_report, ReportFormat};
use cal_core::cpg::{build_cpg, canonical_hash, export_cpg, import_external_cpg};
use cal_core::features::{FeatureConfig, SkipgramConfig, WalkParams};
use cal_core::frontend::{parse, tokenize, AstKind};
use cal_core::labeling::{synth_corpus, SynthConfig};
use cal_core::nn::{predict, train, LabeledGraph, LayerKind, ModelConfig, TrainConfig};
use std::collections::BTreeSet;

fn small_corpus(programs: usize, seed: u64) -> Vec<(String, cal_core::labeling::LabelSet)> {
    synth_corpus(&SynthConfig { programs, seed, ..SynthConfig::default() }).unwrap()
}

#[test]
fn generated_programs_parse_with_faithful_spans() {
    for (i, (source, _)) in small_corpus(30, 77).iter().enumerate() {
        let tokens = tokenize(source).expect("lexes");
        let ast = parse(tokens).expect("parses");
        // every token covered by a node lies within that node's line span
        for node in &ast.nodes {
            let (lo, hi) = node.token_range;
            for t in &ast.tokens[lo as usize..hi as usize] {
                assert!(
                    node.span.0 <= t.line && t.line <= node.span.1,
                    "program {i}: token at line {} outside span {:?} of {:?}",
                    t.line,
                    node.span,
                    node.kind
                );
            }
        }
        // identical source gives identical ids and shape
        let again = parse(tokenize(source).unwrap()).unwrap();
        assert_eq!(ast, again);
        assert!(ast.nodes.iter().any(|n| n.kind == AstKind::FunctionDef));
    }
}

#[test]
fn cpg_files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    for (i, (source, _)) in small_corpus(5, 3).iter().enumerate() {
        let cpg = build_cpg(&parse(tokenize(source).unwrap()).unwrap(), &format!("s{i}.c"));
        let path = dir.path().join(format!("s{i}.cpg.json"));
        std::fs::write(&path, export_cpg(&cpg)).unwrap();
        let back = import_external_cpg(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, cpg);
        assert_eq!(canonical_hash(&back), canonical_hash(&cpg));
    }
}

#[test]
fn mini_train_predict_annotate() {
    let corpus = small_corpus(10, 5);
    let graphs: Vec<LabeledGraph> = corpus
        .iter()
        .enumerate()
        .map(|(i, (source, labels))| {
            let cpg =
                build_cpg(&parse(tokenize(source).unwrap()).unwrap(), &format!("synth_{i:04}.c"));
            let digest = canonical_hash(&cpg);
            let sensitive_nodes: BTreeSet<usize> = labels.nodes_for(&cpg);
            LabeledGraph { cpg, digest, sensitive_nodes }
        })
        .collect();

    let feature_config = FeatureConfig {
        walk_dim: 8,
        text_dim: 8,
        walk: WalkParams { walk_length: 10, walks_per_node: 2, ..WalkParams::default() },
        skipgram: SkipgramConfig { epochs: 2, ..SkipgramConfig::default() },
        ..FeatureConfig::default()
    };
    let model_config = ModelConfig {
        input_dim: 0,
        gnn_layers: 2,
        hidden_dims: vec![16, 8],
        head_dims: vec![8, 1],
        layer_kind: LayerKind::Gated,
        seed: 7,
        ..ModelConfig::default()
    };
    let train_config =
        TrainConfig { folds: 2, max_epochs: 6, early_stop_patience: 6, ..TrainConfig::default() };

    let out = train(&graphs, &feature_config, &model_config, &train_config).unwrap();
    assert_eq!(out.folds.len(), 2);

    // annotate the first file with the trained checkpoint
    let (source, _) = &corpus[0];
    let probs = predict(&graphs[0].cpg, &out.checkpoint).unwrap();
    assert_eq!(probs.len(), graphs[0].cpg.nodes.len());
    let completed = assign_line_numbers(&graphs[0].cpg).unwrap();
    assert!(completed.nodes.iter().all(|n| n.line.is_some()));
    let report = build_report("synth_0000.c", source, &completed, &probs, 0.5).unwrap();
    let text = render_report(&report, ReportFormat::Text);
    let json = render_report(&report, ReportFormat::Json);
    assert!(text.contains("functions:"));
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed["source"], "synth_0000.c");
    // reported lines exist in the source file
    let n_lines = source.lines().count() as u64;
    for l in parsed["lines"].as_array().unwrap() {
        assert!(l["line"].as_u64().unwrap() <= n_lines);
    }
}

#[test]
fn labels_survive_the_json_round_trip_against_reparsed_graphs() {
    for (i, (source, labels)) in small_corpus(6, 11).iter().enumerate() {
        let cpg = build_cpg(&parse(tokenize(source).unwrap()).unwrap(), &format!("synth_{i:04}.c"));
        let json = labels.to_json();
        let back = cal_core::labeling::LabelSet::from_json(&json).unwrap();
        assert_eq!(back.nodes_for(&cpg), labels.sensitive_nodes);
    }
}
