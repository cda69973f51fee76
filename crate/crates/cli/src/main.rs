use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use iris_core::bundle::{kpca_to_bundle, mlp_to_bundle};
use iris_core::config::PipelineConfig;
use iris_core::dataset::ingest;
use iris_core::error::ErrorKind;
use iris_core::imaging::{load_image, save_pgm};
use iris_core::normalization::rubber_sheet;
use iris_core::pipeline::{self, FeatureTable, ReducedTable};
use iris_core::preprocess::preprocess;
use iris_core::segmentation::segment_traced;
use iris_core::synth::generate_synthetic;
use iris_core::Error;

#[derive(Parser)]
#[command(name = "iris", version, about = "Iris recognition pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat JSON config with dotted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write intermediate images (PGM) under <out>/debug.
    #[arg(long, global = true)]
    debug_images: bool,
    /// Extra override, e.g. `--set segment.lambda=0.02` (value parsed as JSON, else string).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic eye suite with ground truth.
    Synth,
    /// List a `<root>/<subject>/<images>` dataset.
    Ingest { root: PathBuf },
    /// Locate pupil, iris and eyelid in one image.
    Segment { image: PathBuf },
    /// Segment and unwrap one image into the normalized rectangle.
    Normalize { image: PathBuf },
    /// Feature CSV for a whole dataset.
    Extract { root: PathBuf },
    /// Split and fit kernel PCA on the training rows.
    Reduce {
        #[arg(long, default_value = "out/features.csv")]
        features: PathBuf,
    },
    /// Train the classifier on reduced features.
    Train {
        #[arg(long, default_value = "out/reduced.csv")]
        reduced: PathBuf,
    },
    /// Score a trained classifier on the test split.
    Eval {
        #[arg(long, default_value = "out/reduced.csv")]
        reduced: PathBuf,
        #[arg(long, default_value = "out/mlp.bundle")]
        model: PathBuf,
    },
    /// Correlation and AUC diagnostics of a feature CSV.
    Analyze {
        #[arg(long, default_value = "out/features.csv")]
        features: PathBuf,
    },
    /// Everything: synthesize (unless a dataset is given), extract, reduce, train, evaluate, analyze.
    Run {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn parse_override(s: &str) -> anyhow::Result<(String, Value)> {
    let Some((k, v)) = s.split_once('=') else {
        return Err(Error::Config(format!("override {s:?} is not KEY=VALUE")).into());
    };
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn load_config(c: &Common) -> anyhow::Result<PipelineConfig> {
    let base = match &c.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    let mut cli: BTreeMap<String, Value> = BTreeMap::new();
    for s in &c.overrides {
        let (k, v) = parse_override(s)?;
        cli.insert(k, v);
    }
    if let Some(seed) = c.seed {
        cli.insert("seed".into(), json!(seed));
    }
    if let Some(t) = c.threads {
        cli.insert("threads".into(), json!(t));
    }
    if c.debug_images {
        cli.insert("debug_images".into(), json!(true));
    }
    Ok(base.apply(&cli)?)
}

fn write_json(path: &Path, v: &Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let pool = pipeline::thread_pool(cfg.threads)?;
    pool.install(|| match cli.command {
        Command::Synth => {
            let (manifest, truth) = generate_synthetic(&cfg.synth, out)?;
            println!("{} images of {} subjects in {}", manifest.entries.len(), manifest.class_count, out.display());
            info!("{} ground-truth records", truth.len());
            Ok(())
        }
        Command::Ingest { root } => {
            let m = ingest(&root)?;
            let v = json!({
                "root": root,
                "class_count": m.class_count,
                "entries": m.entries.iter().map(|e| json!({"subject_id": e.subject_id, "image_path": e.image_path})).collect::<Vec<_>>(),
                "notes": m.notes,
            });
            write_json(&out.join("manifest.json"), &v)?;
            println!("{} images, {} subjects, {} skipped", m.entries.len(), m.class_count, m.notes.len());
            Ok(())
        }
        Command::Segment { image } => {
            let img = load_image(&image)?;
            let pre = preprocess(&img, &cfg.preprocess)?;
            let trace = segment_traced(&pre, &cfg.segment, &cfg.edges)?;
            if cfg.debug_images {
                let dir = out.join("debug");
                fs::create_dir_all(&dir)?;
                let s = stem(&image);
                save_pgm(&pre, &dir.join(format!("{s}_preprocessed.pgm")))?;
                save_pgm(&trace.structure.to_gray(), &dir.join(format!("{s}_structure.pgm")))?;
                save_pgm(&trace.edges.binary_image(), &dir.join(format!("{s}_edges.pgm")))?;
            }
            save_pgm(&trace.geometry.mask_image(), &out.join(format!("{}_eyelid_mask.pgm", stem(&image))))?;
            let v = serde_json::to_value(&trace.geometry)?;
            write_json(&out.join(format!("{}_geometry.json", stem(&image))), &v)?;
            println!("{}", serde_json::to_string(&v)?);
            Ok(())
        }
        Command::Normalize { image } => {
            let img = load_image(&image)?;
            let pre = preprocess(&img, &cfg.preprocess)?;
            let trace = segment_traced(&pre, &cfg.segment, &cfg.edges)?;
            let rect = rubber_sheet(&pre, &trace.geometry, cfg.normalize.height, cfg.normalize.width)?;
            let s = stem(&image);
            save_pgm(&rect.to_image(), &out.join(format!("{s}_normalized.pgm")))?;
            save_pgm(&rect.validity_image(), &out.join(format!("{s}_normalized_valid.pgm")))?;
            println!("coverage {:.4}", rect.coverage());
            Ok(())
        }
        Command::Extract { root } => {
            let m = ingest(&root)?;
            let debug = cfg.debug_images.then(|| out.join("debug"));
            let (table, failures) = pipeline::extract_dataset(&m, &cfg, debug.as_deref())?;
            table.write_csv(&out.join(pipeline::FEATURES_CSV))?;
            write_json(&out.join("extract_failures.json"), &serde_json::to_value(&failures)?)?;
            println!("{} rows, {} failures", table.matrix.rows, failures.len());
            Ok(())
        }
        Command::Reduce { features } => {
            let table = FeatureTable::read_csv(&features)?;
            let (model, reduced) = pipeline::reduce_stage(&table, &cfg)?;
            kpca_to_bundle(&model, json!({"seed": cfg.seed})).save(&out.join(pipeline::KPCA_BUNDLE))?;
            reduced.write_csv(&out.join(pipeline::REDUCED_CSV))?;
            println!("{} components from {} training rows", model.k, model.train.rows);
            Ok(())
        }
        Command::Train { reduced } => {
            let reduced = ReducedTable::read_csv(&reduced)?;
            let (classes, outcome) = pipeline::train_stage(&reduced, &cfg)?;
            mlp_to_bundle(&outcome.model, json!({"seed": cfg.seed, "classes": classes, "train": cfg.train}))
                .save(&out.join(pipeline::MLP_BUNDLE))?;
            pipeline::write_history_csv(&outcome, &out.join(pipeline::HISTORY_CSV))?;
            println!("best epoch {} of {}", outcome.best_epoch, outcome.history.len());
            Ok(())
        }
        Command::Eval { reduced, model } => {
            let reduced = ReducedTable::read_csv(&reduced)?;
            let (mlp, classes) = pipeline::load_classifier(&model)?;
            if mlp.input_dim() != reduced.matrix.cols {
                return Err(Error::DimensionMismatch {
                    expected: mlp.input_dim(),
                    actual: reduced.matrix.cols,
                }
                .into());
            }
            let metrics = pipeline::eval_stage(&mlp, &classes, &reduced)?;
            write_json(
                &out.join(pipeline::METRICS_JSON),
                &pipeline::metrics_json(&metrics, &classes, None, &reduced),
            )?;
            println!("accuracy {:.4} on {} test samples", metrics.accuracy, metrics.support);
            Ok(())
        }
        Command::Analyze { features } => {
            let table = FeatureTable::read_csv(&features)?;
            let summary = pipeline::analyze_stage(&table, out)?;
            println!(
                "fraction |r| < 0.5: {:.4}; features with AUC > 0.6: {}",
                summary["fraction_below_half"].as_f64().unwrap_or(f64::NAN),
                summary["features_auc_above_0_6"]
            );
            Ok(())
        }
        Command::Run { dataset } => {
            let mut cfg = cfg.clone();
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            let run = pipeline::run_pipeline(&cfg, out)?;
            println!(
                "{} images, {} classes, {} failures, test accuracy {:.4}",
                run.images,
                run.classes,
                run.failures.len(),
                run.test_accuracy
            );
            Ok(())
        }
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) => match err.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        },
        None if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
