use cal_cli::commands::{
    self, cmd_ablate, cmd_annotate, cmd_dedup, cmd_eval, cmd_import_cpg, cmd_parse, cmd_synth,
    cmd_train,
};
use cal_cli::config::CliConfig;
use cal_cli::manifest::Split;
use cal_cli::CliError;
use cal_core::annotate::ReportFormat;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cal", version, about = "Flag security-sensitive C code for TEE partitioning")]
struct Cli {
    /// Flat key=value config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (default: config file, then $CAL_SEED, then 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for corpus-level parallelism; never changes output bytes.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse .c files (or directories) into CPG JSON plus a digest index.
    Parse {
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "cpg-out")]
        out: PathBuf,
    },
    /// Generate the labeled synthetic corpus with an 80/20 split manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of programs (overrides config).
        #[arg(long)]
        programs: Option<usize>,
    },
    /// Train the classifier on the manifest's trainval split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "model.calm")]
        out: PathBuf,
        /// gated | gat
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Annotate one source file with line/function sensitivity.
    Annotate {
        source: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// text | json
        #[arg(long, default_value = "text")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against a manifest split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// holdout | trainval
        #[arg(long, default_value = "holdout")]
        split: String,
        /// Also write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every feature-toggle variant with the same seed and compare.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drop duplicate graphs by canonical digest.
    Dedup {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an external CPG export and re-emit the canonical form.
    ImportCpg {
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // worker count only affects wall time; all reductions are ordered
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let layer_flag = match &cli.command {
        Command::Train { layer, .. } => layer.clone(),
        _ => None,
    };
    let folds_flag = match &cli.command {
        Command::Train { folds, .. } | Command::Ablate { folds, .. } => *folds,
        _ => None,
    };
    let mut cfg =
        CliConfig::resolve(cli.config.as_ref(), cli.seed, layer_flag.as_deref(), folds_flag)?;

    match cli.command {
        Command::Parse { inputs, out } => {
            let outcome = cmd_parse(&inputs, &out)?;
            for (src, cpg, digest) in &outcome.written {
                println!("{}: {} ({})", src.display(), cpg.display(), &digest[..12]);
            }
            for (src, err) in &outcome.failures {
                eprintln!("failed: {}: {err}", src.display());
            }
            if !outcome.failures.is_empty() {
                return Err(CliError::user(format!(
                    "{} of {} files failed to parse",
                    outcome.failures.len(),
                    outcome.failures.len() + outcome.written.len()
                )));
            }
            Ok(())
        }
        Command::Synth { out, programs } => {
            if let Some(n) = programs {
                cfg.synth.programs = n;
            }
            let outcome = cmd_synth(&cfg, &out)?;
            println!(
                "wrote {} graphs ({} duplicates removed) -> {}",
                outcome.kept,
                outcome.removed,
                outcome.manifest_path.display()
            );
            if outcome.holdout_empty {
                eprintln!("warning: hold-out split is empty (corpus too small)");
            }
            Ok(())
        }
        Command::Train { manifest, out, .. } => {
            let summary = cmd_train(&manifest, &cfg, &out)?;
            println!("fold  best_epoch  val_acc  val_prec  val_rec  val_f1");
            for fm in &summary.output.folds {
                println!(
                    "{:<5} {:<11} {:<8.4} {:<9.4} {:<8.4} {:.4}",
                    fm.fold,
                    fm.best_epoch,
                    fm.val_accuracy,
                    fm.val_precision,
                    fm.val_recall,
                    fm.best_val_f1
                );
            }
            println!("best fold: {}", summary.output.best_fold);
            println!("checkpoint: {}", summary.model_path.display());
            if let Some(holdout) = &summary.holdout {
                println!("\nhold-out metrics:");
                print!("{}", commands::format_eval_table(holdout));
            }
            Ok(())
        }
        Command::Annotate { source, model, format, out } => {
            let format = ReportFormat::parse(&format)
                .ok_or_else(|| CliError::user(format!("unknown format {format:?}")))?;
            let rendered = cmd_annotate(&source, &model, format)?;
            match out {
                Some(path) => std::fs::write(&path, rendered)
                    .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?,
                None => print!("{rendered}"),
            }
            Ok(())
        }
        Command::Eval { manifest, model, split, out } => {
            let split = match split.as_str() {
                "holdout" => Split::Holdout,
                "trainval" => Split::Trainval,
                other => return Err(CliError::user(format!("unknown split {other:?}"))),
            };
            let eval = cmd_eval(&manifest, &model, split)?;
            print!("{}", commands::format_eval_table(&eval));
            if let Some(path) = out {
                std::fs::write(&path, commands::eval_reports_json(&eval))
                    .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Ablate { manifest, out, .. } => {
            let rows = cmd_ablate(&manifest, &cfg)?;
            print!("{}", commands::format_ablation_table(&rows));
            if let Some(path) = out {
                let mut text = serde_json::to_string_pretty(&rows)
                    .map_err(|e| CliError::internal(e.to_string()))?;
                text.push('\n');
                std::fs::write(&path, text)
                    .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Dedup { inputs, out } => {
            let outcome = cmd_dedup(&inputs, out.as_deref())?;
            println!("kept {} graphs, removed {}", outcome.kept.len(), outcome.removed);
            Ok(())
        }
        Command::ImportCpg { input, out } => {
            let (path, digest) = cmd_import_cpg(&input, &out)?;
            println!("{} ({})", path.display(), &digest[..12]);
            Ok(())
        }
    }
}
