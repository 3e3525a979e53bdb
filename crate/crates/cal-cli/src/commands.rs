//! The eight pipeline commands. Each returns structured results so tests can
//! drive them directly; printing happens on top in `main`.

use crate::config::CliConfig;
use crate::manifest::{assign_split, Manifest, ManifestEntry, Split};
use crate::CliError;
use cal_core::annotate::{
    aggregate, assign_line_numbers, build_report, confusion, identification_rate, metrics,
    render_report, ConfusionMatrix, EvalReport, Granularity, ReportFormat,
};
use cal_core::cpg::{build_cpg, canonical_hash, export_cpg, import_external_cpg, Cpg};
use cal_core::frontend::{parse, tokenize};
use cal_core::labeling::{synth_corpus, LabelSet};
use cal_core::nn::{
    load_checkpoint, predict, save_checkpoint, train, Checkpoint, LabeledGraph, LayerKind,
    TrainOutput,
};
use serde::Serialize;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::internal(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

fn parse_source(path_label: &str, source: &str) -> Result<Cpg, CliError> {
    let tokens = tokenize(source)
        .map_err(|e| CliError::user(format!("{path_label}: {e}")))?;
    let ast =
        parse(tokens).map_err(|e| CliError::user(format!("{path_label}: {e}")))?;
    Ok(build_cpg(&ast, path_label))
}

/// Recursive, sorted `.c` discovery: files stay files, directories walk.
fn discover_c_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        let mut children: Vec<PathBuf> =
            fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        children.sort();
        for child in children {
            if child.is_dir() {
                walk(&child, out)?;
            } else if child.extension().map_or(false, |e| e == "c") {
                out.push(child);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            walk(input, &mut files)
                .map_err(|e| CliError::user(format!("cannot read {}: {e}", input.display())))?;
        } else if input.exists() {
            files.push(input.clone());
        } else {
            return Err(CliError::user(format!("no such file: {}", input.display())));
        }
    }
    Ok(files)
}

// ---- parse ---------------------------------------------------------------

pub struct ParseOutcome {
    pub written: Vec<(PathBuf, PathBuf, String)>,
    pub failures: Vec<(PathBuf, String)>,
}

/// Parse `.c` inputs into CPG JSON files plus a digest index.
pub fn cmd_parse(inputs: &[PathBuf], out_dir: &Path) -> Result<ParseOutcome, CliError> {
    let files = discover_c_files(inputs)?;
    if files.is_empty() {
        return Err(CliError::user("no .c files found"));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut outcome = ParseOutcome { written: Vec::new(), failures: Vec::new() };
    for file in files {
        let result = (|| -> Result<(PathBuf, String), CliError> {
            let source = read_file(&file)?;
            let cpg = parse_source(&file.to_string_lossy(), &source)?;
            let digest = canonical_hash(&cpg);
            let stem = file.file_stem().unwrap_or_default().to_string_lossy().to_string();
            let out_path = out_dir.join(format!("{stem}.cpg.json"));
            write_file(&out_path, &export_cpg(&cpg))?;
            Ok((out_path, digest))
        })();
        match result {
            Ok((out_path, digest)) => outcome.written.push((file, out_path, digest)),
            Err(e) => outcome.failures.push((file, e.to_string())),
        }
    }
    let index: Vec<serde_json::Value> = outcome
        .written
        .iter()
        .map(|(src, cpg, digest)| {
            serde_json::json!({
                "source": src.to_string_lossy(),
                "cpg": cpg.file_name().unwrap().to_string_lossy(),
                "digest": digest,
            })
        })
        .collect();
    write_file(
        &out_dir.join("index.json"),
        &format!("{}\n", serde_json::to_string_pretty(&index).unwrap()),
    )?;
    Ok(outcome)
}

// ---- synth ---------------------------------------------------------------

pub struct SynthOutcome {
    pub manifest_path: PathBuf,
    pub kept: usize,
    pub removed: usize,
    pub holdout_empty: bool,
}

/// Generate the labeled corpus: sources, CPGs, labels, dedup, 80/20 split,
/// manifest. Byte-identical across reruns with the same seed.
pub fn cmd_synth(cfg: &CliConfig, out_dir: &Path) -> Result<SynthOutcome, CliError> {
    let corpus = synth_corpus(&cfg.synth).map_err(|e| CliError::user(e.to_string()))?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", out_dir.display())))?;

    // build all graphs, dedup by digest, keep first occurrence
    let mut kept: Vec<(String, String, LabelSet, Cpg, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut removed = 0usize;
    for (i, (source, labels)) in corpus.into_iter().enumerate() {
        let name = format!("synth_{i:04}.c");
        let cpg = parse_source(&name, &source)?;
        let digest = canonical_hash(&cpg);
        if seen.insert(digest.clone()) {
            kept.push((name, source, labels, cpg, digest));
        } else {
            removed += 1;
        }
    }

    let splits = assign_split(kept.len(), cfg.seed);
    let mut entries = Vec::with_capacity(kept.len());
    for ((name, source, labels, cpg, digest), split) in kept.iter().zip(&splits) {
        let stem = name.trim_end_matches(".c");
        write_file(&out_dir.join(name), source)?;
        write_file(&out_dir.join(format!("{stem}.cpg.json")), &export_cpg(cpg))?;
        write_file(&out_dir.join(format!("{stem}.labels.json")), &labels.to_json())?;
        entries.push(ManifestEntry {
            source: name.clone(),
            cpg: format!("{stem}.cpg.json"),
            labels: format!("{stem}.labels.json"),
            digest: digest.clone(),
            split: *split,
        });
    }
    let manifest = Manifest { version: 1, seed: cfg.seed, entries };
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    let holdout_empty = manifest.split_entries(Split::Holdout).is_empty();
    Ok(SynthOutcome { manifest_path, kept: kept.len(), removed, holdout_empty })
}

// ---- shared loading and evaluation ----------------------------------------

fn load_labeled_graphs(
    dir: &Path,
    entries: &[&ManifestEntry],
) -> Result<Vec<(LabeledGraph, LabelSet)>, CliError> {
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let cpg = import_external_cpg(&read_file(&dir.join(&e.cpg))?)
            .map_err(|err| CliError::user(format!("{}: {err}", e.cpg)))?;
        let labels = LabelSet::from_json(&read_file(&dir.join(&e.labels))?)
            .map_err(|err| CliError::user(format!("{}: {err}", e.labels)))?;
        let sensitive_nodes = labels.nodes_for(&cpg);
        out.push((
            LabeledGraph { cpg, digest: e.digest.clone(), sensitive_nodes },
            labels,
        ));
    }
    Ok(out)
}

/// Pooled node/line/function evaluation of a checkpoint over labeled graphs.
pub struct SplitEval {
    pub node: EvalReport,
    pub line: EvalReport,
    pub function: EvalReport,
}

impl SplitEval {
    pub fn reports(&self) -> [&EvalReport; 3] {
        [&self.node, &self.line, &self.function]
    }
}

pub fn evaluate_split(
    graphs: &[(LabeledGraph, LabelSet)],
    ckpt: &Checkpoint,
) -> Result<SplitEval, CliError> {
    let threshold = ckpt.model_config.threshold;
    let mut node_cm = ConfusionMatrix::default();
    let mut line_cm = ConfusionMatrix::default();
    let mut func_cm = ConfusionMatrix::default();
    for (g, labels) in graphs {
        let probs = predict(&g.cpg, ckpt)?;
        // node level
        let predicted: BTreeSet<usize> = g
            .cpg
            .nodes
            .iter()
            .enumerate()
            .filter(|(pos, _)| probs[*pos] as f64 >= threshold)
            .map(|(_, n)| n.id)
            .collect();
        let population: BTreeSet<usize> = g.cpg.nodes.iter().map(|n| n.id).collect();
        node_cm.add(&confusion(&predicted, &g.sensitive_nodes, &population));

        // line level over the line-complete graph
        let completed = assign_line_numbers(&g.cpg)?;
        let (lines, functions) = aggregate(&probs, &completed, threshold)?;
        let line_population: BTreeSet<u32> = lines.iter().map(|l| l.line).collect();
        let flagged_lines: BTreeSet<u32> =
            lines.iter().filter(|l| l.flagged).map(|l| l.line).collect();
        let truth_lines: BTreeSet<u32> =
            labels.sensitive_lines.values().flatten().copied().collect();
        let truth_lines: BTreeSet<u32> =
            truth_lines.intersection(&line_population).copied().collect();
        line_cm.add(&confusion(&flagged_lines, &truth_lines, &line_population));

        // function level
        let func_population: BTreeSet<String> = g.cpg.methods.keys().cloned().collect();
        let flagged_funcs: BTreeSet<String> =
            functions.iter().filter(|f| f.flagged).map(|f| f.name.clone()).collect();
        func_cm.add(&confusion(&flagged_funcs, &labels.sensitive_functions, &func_population));
    }
    let report = |granularity, cm: ConfusionMatrix| -> Result<EvalReport, CliError> {
        let m = metrics(&cm).map_err(|e| CliError::internal(e.to_string()))?;
        let total = cm.tp + cm.fn_;
        let rate = if total == 0 { 0.0 } else { identification_rate(cm.tp, total)? };
        Ok(EvalReport {
            granularity,
            confusion: cm,
            metrics: m,
            identification_rate: rate,
            total_sensitive: total,
            identified_sensitive: cm.tp,
            missed_sensitive: cm.fn_,
        })
    };
    Ok(SplitEval {
        node: report(Granularity::Node, node_cm)?,
        line: report(Granularity::Line, line_cm)?,
        function: report(Granularity::Function, func_cm)?,
    })
}

pub fn eval_reports_json(eval: &SplitEval) -> String {
    let row = |r: &EvalReport| {
        serde_json::json!({
            "granularity": r.granularity.as_str(),
            "accuracy": r.metrics.accuracy,
            "precision": r.metrics.precision,
            "recall": r.metrics.recall,
            "f1": r.metrics.f1,
            "identification_rate": r.identification_rate,
            "total_sensitive": r.total_sensitive,
            "identified_sensitive": r.identified_sensitive,
            "missed_sensitive": r.missed_sensitive,
            "tp": r.confusion.tp, "tn": r.confusion.tn,
            "fp": r.confusion.fp, "fn": r.confusion.fn_,
        })
    };
    let doc = serde_json::json!({
        "reports": eval.reports().iter().map(|r| row(r)).collect::<Vec<_>>(),
    });
    format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())
}

pub fn format_eval_table(eval: &SplitEval) -> String {
    let mut out = String::new();
    out.push_str("level     accuracy  precision  recall    f1        ident-rate\n");
    for r in eval.reports() {
        out.push_str(&format!(
            "{:<9} {:<9.4} {:<10.4} {:<9.4} {:<9.4} {:.4} ({}/{} identified, {} missed)\n",
            r.granularity.as_str(),
            r.metrics.accuracy,
            r.metrics.precision,
            r.metrics.recall,
            r.metrics.f1,
            r.identification_rate,
            r.identified_sensitive,
            r.total_sensitive,
            r.missed_sensitive,
        ));
    }
    out
}

// ---- train -----------------------------------------------------------------

pub struct TrainSummary {
    pub output: TrainOutput,
    pub holdout: Option<SplitEval>,
    pub model_path: PathBuf,
}

/// Train on the manifest's trainval split and report hold-out metrics.
pub fn cmd_train(
    manifest_path: &Path,
    cfg: &CliConfig,
    model_out: &Path,
) -> Result<TrainSummary, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let trainval = load_labeled_graphs(&dir, &manifest.split_entries(Split::Trainval))?;
    if trainval.is_empty() {
        return Err(CliError::user("manifest has no trainval entries"));
    }
    let graphs: Vec<LabeledGraph> = trainval.iter().map(|(g, _)| g.clone()).collect();
    let output = train(&graphs, &cfg.feature, &cfg.model, &cfg.train)?;

    let mut bytes = Vec::new();
    save_checkpoint(&output.checkpoint, &mut bytes)
        .map_err(|e| CliError::internal(e.to_string()))?;
    if let Some(parent) = model_out.parent() {
        fs::create_dir_all(parent).ok();
    }
    fs::write(model_out, &bytes)
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", model_out.display())))?;

    let holdout_entries = manifest.split_entries(Split::Holdout);
    let holdout = if holdout_entries.is_empty() {
        None
    } else {
        let graphs = load_labeled_graphs(&dir, &holdout_entries)?;
        Some(evaluate_split(&graphs, &output.checkpoint)?)
    };
    Ok(TrainSummary { output, holdout, model_path: model_out.to_path_buf() })
}

// ---- annotate ----------------------------------------------------------------

/// Parse, featurize, predict, complete lines, aggregate, render.
pub fn cmd_annotate(
    source_path: &Path,
    model_path: &Path,
    format: ReportFormat,
) -> Result<String, CliError> {
    let ckpt = load_model(model_path)?;
    let source = read_file(source_path)?;
    let cpg = parse_source(&source_path.to_string_lossy(), &source)?;
    let probs = predict(&cpg, &ckpt)?;
    let completed = assign_line_numbers(&cpg)?;
    let report = build_report(
        &source_path.to_string_lossy(),
        &source,
        &completed,
        &probs,
        ckpt.model_config.threshold,
    )?;
    Ok(render_report(&report, format))
}

pub fn load_model(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::user(format!("cannot read model {}: {e}", path.display())))?;
    load_checkpoint(&mut bytes.as_slice())
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

// ---- eval ----------------------------------------------------------------------

pub fn cmd_eval(
    manifest_path: &Path,
    model_path: &Path,
    split: Split,
) -> Result<SplitEval, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let entries = manifest.split_entries(split);
    if entries.is_empty() {
        return Err(CliError::user("selected split is empty"));
    }
    let ckpt = load_model(model_path)?;
    let graphs = load_labeled_graphs(&dir, &entries)?;
    evaluate_split(&graphs, &ckpt)
}

// ---- ablate ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub seed: u64,
    pub input_dim: usize,
    pub edge_dim: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Train once per feature toggle set with the same seed and splits, then
/// report hold-out node-level metrics per configuration.
pub fn cmd_ablate(manifest_path: &Path, cfg: &CliConfig) -> Result<Vec<AblationRow>, CliError> {
    let variants: Vec<(&str, Box<dyn Fn(&mut CliConfig)>)> = vec![
        ("all", Box::new(|_| {})),
        ("-walk", Box::new(|c| c.feature.enable_walk = false)),
        ("-text", Box::new(|c| c.feature.enable_text = false)),
        ("-metrics", Box::new(|c| c.feature.enable_metrics = false)),
        (
            "-edge",
            Box::new(|c| {
                c.feature.enable_edge_features = false;
                c.model.use_edge_features = false;
            }),
        ),
        ("gat", Box::new(|c| c.model.layer_kind = LayerKind::Gat)),
    ];
    let manifest = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let trainval = load_labeled_graphs(&dir, &manifest.split_entries(Split::Trainval))?;
    let holdout = load_labeled_graphs(&dir, &manifest.split_entries(Split::Holdout))?;
    if trainval.is_empty() || holdout.is_empty() {
        return Err(CliError::user("ablation needs both trainval and holdout entries"));
    }
    let graphs: Vec<LabeledGraph> = trainval.iter().map(|(g, _)| g.clone()).collect();

    let mut rows = Vec::new();
    for (name, tweak) in variants {
        let mut variant = cfg.clone();
        variant.model.input_dim = 0;
        tweak(&mut variant);
        let output = train(&graphs, &variant.feature, &variant.model, &variant.train)?;
        let eval = evaluate_split(&holdout, &output.checkpoint)?;
        rows.push(AblationRow {
            name: name.to_string(),
            seed: variant.seed,
            input_dim: output.checkpoint.model_config.input_dim,
            edge_dim: variant.feature.edge_dim(),
            accuracy: eval.node.metrics.accuracy,
            precision: eval.node.metrics.precision,
            recall: eval.node.metrics.recall,
            f1: eval.node.metrics.f1,
        });
    }
    Ok(rows)
}

pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str("config     D    edge  accuracy  precision  recall    f1        seed\n");
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<4} {:<5} {:<9.4} {:<10.4} {:<9.4} {:<9.4} {}\n",
            r.name, r.input_dim, r.edge_dim, r.accuracy, r.precision, r.recall, r.f1, r.seed
        ));
    }
    out
}

// ---- dedup ------------------------------------------------------------------------

pub struct DedupOutcome {
    pub kept: Vec<PathBuf>,
    pub removed: usize,
}

/// Deduplicate CPG JSON files by canonical digest, keeping the first of each
/// class in sorted path order.
pub fn cmd_dedup(inputs: &[PathBuf], out_index: Option<&Path>) -> Result<DedupOutcome, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut children: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::user(format!("cannot read {}: {e}", input.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(".cpg.json"))
                .collect();
            children.sort();
            files.extend(children);
        } else if input.exists() {
            files.push(input.clone());
        } else {
            return Err(CliError::user(format!("no such file: {}", input.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::user("no .cpg.json files found"));
    }
    let mut kept = Vec::new();
    let mut seen = BTreeSet::new();
    let mut removed = 0usize;
    for file in files {
        let cpg = import_external_cpg(&read_file(&file)?)
            .map_err(|e| CliError::user(format!("{}: {e}", file.display())))?;
        let digest = canonical_hash(&cpg);
        if seen.insert(digest) {
            kept.push(file);
        } else {
            removed += 1;
        }
    }
    if let Some(out) = out_index {
        let doc = serde_json::json!({
            "kept": kept.iter().map(|p| p.to_string_lossy()).collect::<Vec<_>>(),
            "removed": removed,
        });
        write_file(out, &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))?;
    }
    Ok(DedupOutcome { kept, removed })
}

// ---- import-cpg ----------------------------------------------------------------------

/// Validate an external CPG export and write the canonical form.
pub fn cmd_import_cpg(input: &Path, out_dir: &Path) -> Result<(PathBuf, String), CliError> {
    let cpg = import_external_cpg(&read_file(input)?)
        .map_err(|e| CliError::user(format!("{}: {e}", input.display())))?;
    let digest = canonical_hash(&cpg);
    let stem = input
        .file_name()
        .unwrap_or_default()
        .to_string_lossy()
        .trim_end_matches(".json")
        .trim_end_matches(".cpg")
        .to_string();
    let out_path = out_dir.join(format!("{stem}.cpg.json"));
    write_file(&out_path, &export_cpg(&cpg))?;
    Ok((out_path, digest))
}

