//! Stage orchestration and artifact I/O.
//!
//! Per-image work (preprocess → segment → rubber sheet → features) runs in a
//! worker pool; failures are recorded per image and never abort the run.
//! Kernel PCA is fitted on the training split only, then the classifier is
//! trained, evaluated on the test split, and the feature-pool diagnostics are
//! written alongside.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{auc_report, pearson_matrix, rank_features, HISTOGRAM_BINS, HISTOGRAM_BIN_WIDTH};
use crate::bundle::{kpca_to_bundle, mlp_from_bundle, mlp_to_bundle, Bundle};
use crate::classify::{evaluate, train, Metrics, MlpModel, TrainOutcome};
use crate::config::PipelineConfig;
use crate::dataset::{ingest, stratified_split, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::features::{extract_features, feature_layout, feature_names, FeatureVector};
use crate::imaging::{load_image, save_pgm, GrayImage};
use crate::normalization::{rubber_sheet, NormalizedIris};
use crate::preprocess::preprocess;
use crate::reduce::{kpca_fit, KpcaModel, Matrix};
use crate::segmentation::{segment_traced, SegmentationTrace};
use crate::synth::generate_synthetic;

pub const STAGE_VERSIONS: [(&str, u32); 8] = [
    ("preprocess", 1),
    ("segment", 1),
    ("normalize", 1),
    ("features", 1),
    ("reduce", 1),
    ("classify", 1),
    ("analysis", 1),
    ("bundle", crate::bundle::FORMAT_VERSION),
];

pub const FEATURES_CSV: &str = "features.csv";
pub const REDUCED_CSV: &str = "reduced.csv";
pub const KPCA_BUNDLE: &str = "kpca.bundle";
pub const MLP_BUNDLE: &str = "mlp.bundle";
pub const METRICS_JSON: &str = "metrics.json";
pub const HISTORY_CSV: &str = "history.csv";
pub const CORRELATION_CSV: &str = "correlation_matrix.csv";
pub const CORRELATION_HISTOGRAM_CSV: &str = "correlation_histogram.csv";
pub const AUC_RANKING_CSV: &str = "auc_ranking.csv";
pub const ANALYSIS_JSON: &str = "analysis_summary.json";
pub const RUN_MANIFEST_JSON: &str = "run_manifest.json";

/// Independent sub-seeds derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub split: u64,
    pub init: u64,
    pub train: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        let mix = |k: u64| {
            let mut z = master ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        Self {
            master,
            split: mix(1),
            init: mix(2),
            train: mix(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub subject_id: String,
    pub image_id: String,
    pub stage: String,
    pub error: String,
}

/// Everything computed for one eye image.
#[derive(Debug, Clone)]
pub struct ProcessedImage {
    pub preprocessed: GrayImage,
    pub trace: SegmentationTrace,
    pub rect: NormalizedIris,
    pub features: FeatureVector,
}

/// Runs the per-image stages; on failure returns the stage name and error.
pub fn process_image(img: &GrayImage, cfg: &PipelineConfig) -> std::result::Result<ProcessedImage, (&'static str, Error)> {
    let pre = preprocess(img, &cfg.preprocess).map_err(|e| ("preprocess", e))?;
    let trace = segment_traced(&pre, &cfg.segment, &cfg.edges).map_err(|e| ("segment", e))?;
    let rect = rubber_sheet(&pre, &trace.geometry, cfg.normalize.height, cfg.normalize.width)
        .map_err(|e| ("normalize", e))?;
    let features = extract_features(&rect, &cfg.features).map_err(|e| ("features", e))?;
    Ok(ProcessedImage {
        preprocessed: pre,
        trace,
        rect,
        features,
    })
}

/// Writes the intermediate images of one processed eye as PGM files.
pub fn write_debug_images(p: &ProcessedImage, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let out = |suffix: &str| dir.join(format!("{stem}_{suffix}.pgm"));
    save_pgm(&p.preprocessed, &out("preprocessed"))?;
    save_pgm(&p.trace.structure.to_gray(), &out("structure"))?;
    save_pgm(&p.trace.edges.binary_image(), &out("edges"))?;
    save_pgm(&p.trace.geometry.mask_image(), &out("eyelid_mask"))?;
    save_pgm(&p.rect.to_image(), &out("normalized"))?;
    save_pgm(&p.rect.validity_image(), &out("normalized_valid"))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::CorruptData(format!("CSV: {other:?}")),
    }
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::CorruptData(format!("{}: bad number {s:?}", path.display())))
}

/// One feature row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub subject_ids: Vec<String>,
    pub image_ids: Vec<String>,
    pub columns: Vec<String>,
    pub matrix: Matrix,
}

impl FeatureTable {
    /// Sorted distinct subjects and each row's index into them.
    pub fn labels(&self) -> (Vec<String>, Vec<usize>) {
        class_labels(&self.subject_ids)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["subject_id".to_string(), "image_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.matrix.rows {
            let mut rec = vec![self.subject_ids[i].clone(), self.image_ids[i].clone()];
            rec.extend(self.matrix.row(i).iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.len() < 3 || header[0] != "subject_id" || header[1] != "image_id" {
            return Err(Error::CorruptData(format!("{}: unexpected header", path.display())));
        }
        let columns = header[2..].to_vec();
        let (mut subjects, mut images, mut data) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            subjects.push(rec[0].to_string());
            images.push(rec[1].to_string());
            for s in rec.iter().skip(2) {
                data.push(parse_f64(s, path)?);
            }
        }
        let rows = subjects.len();
        Ok(Self {
            subject_ids: subjects,
            image_ids: images,
            matrix: Matrix::new(rows, columns.len(), data)?,
            columns,
        })
    }
}

fn class_labels(subjects: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut classes: Vec<String> = subjects.to_vec();
    classes.sort();
    classes.dedup();
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels = subjects.iter().map(|s| index[s.as_str()]).collect();
    (classes, labels)
}

/// Extracts features for every dataset entry, in manifest order.
pub fn extract_dataset(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
    debug_dir: Option<&Path>,
) -> Result<(FeatureTable, Vec<ImageFailure>)> {
    let results: Vec<std::result::Result<Vec<f64>, ImageFailure>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let fail = |stage: &str, e: Error| ImageFailure {
                subject_id: entry.subject_id.clone(),
                image_id: entry.image_id(),
                stage: stage.to_string(),
                error: e.to_string(),
            };
            let img = load_image(&entry.image_path).map_err(|e| fail("load", e))?;
            let processed = process_image(&img, cfg).map_err(|(stage, e)| fail(stage, e))?;
            if let Some(dir) = debug_dir {
                let stem = format!("{}_{}", entry.subject_id, entry.image_id());
                write_debug_images(&processed, dir, &stem).map_err(|e| fail("debug_images", e))?;
            }
            Ok(processed.features.values)
        })
        .collect();

    let (mut subjects, mut images, mut data, mut failures) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (entry, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(v) => {
                subjects.push(entry.subject_id.clone());
                images.push(entry.image_id());
                data.extend(v);
            }
            Err(f) => {
                warn!("{}/{}: {} failed: {}", f.subject_id, f.image_id, f.stage, f.error);
                failures.push(f);
            }
        }
    }
    let rows = subjects.len();
    let columns = feature_names();
    Ok((
        FeatureTable {
            subject_ids: subjects,
            image_ids: images,
            matrix: Matrix::new(rows, columns.len(), data)?,
            columns,
        },
        failures,
    ))
}

/// Reduced features with their split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTable {
    pub subject_ids: Vec<String>,
    pub image_ids: Vec<String>,
    pub splits: Vec<Split>,
    pub matrix: Matrix,
}

impl ReducedTable {
    pub fn labels(&self) -> (Vec<String>, Vec<usize>) {
        class_labels(&self.subject_ids)
    }

    /// Rows of one split with labels indexed against `classes`.
    pub fn select(&self, split: Split, classes: &[String]) -> Result<(Matrix, Vec<usize>)> {
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let (mut data, mut y) = (Vec::new(), Vec::new());
        for i in (0..self.matrix.rows).filter(|&i| self.splits[i] == split) {
            let label = index
                .get(self.subject_ids[i].as_str())
                .ok_or_else(|| Error::CorruptData(format!("subject {} unknown to the model", self.subject_ids[i])))?;
            data.extend_from_slice(self.matrix.row(i));
            y.push(*label);
        }
        Ok((Matrix::new(y.len(), self.matrix.cols, data)?, y))
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["subject_id".to_string(), "image_id".to_string(), "split".to_string()];
        header.extend((1..=self.matrix.cols).map(|k| format!("kpc{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.matrix.rows {
            let mut rec = vec![
                self.subject_ids[i].clone(),
                self.image_ids[i].clone(),
                self.splits[i].as_str().to_string(),
            ];
            rec.extend(self.matrix.row(i).iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[0] != "subject_id" || &header[1] != "image_id" || &header[2] != "split" {
            return Err(Error::CorruptData(format!("{}: unexpected header", path.display())));
        }
        let cols = header.len() - 3;
        let (mut subjects, mut images, mut splits, mut data) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            subjects.push(rec[0].to_string());
            images.push(rec[1].to_string());
            splits.push(rec[2].parse::<Split>()?);
            for s in rec.iter().skip(3) {
                data.push(parse_f64(s, path)?);
            }
        }
        let rows = subjects.len();
        Ok(Self {
            subject_ids: subjects,
            image_ids: images,
            splits,
            matrix: Matrix::new(rows, cols, data)?,
        })
    }
}

/// Splits the table, fits kernel PCA on the training rows and projects every row.
pub fn reduce_stage(table: &FeatureTable, cfg: &PipelineConfig) -> Result<(KpcaModel, ReducedTable)> {
    let (classes, labels) = table.labels();
    if classes.len() < 2 {
        return Err(Error::TooFewSamples {
            got: classes.len(),
            need: 2,
        });
    }
    let seeds = Seeds::from_master(cfg.seed);
    let splits = stratified_split(&labels, cfg.split, seeds.split)?;
    let train_rows: Vec<Vec<f64>> = (0..table.matrix.rows)
        .filter(|&i| splits[i] == Split::Train)
        .map(|i| table.matrix.row(i).to_vec())
        .collect();
    let x_train = Matrix::from_rows(&train_rows)?;
    let model = kpca_fit(&x_train, cfg.reduce.components, cfg.reduce.kernel_for(table.matrix.cols))?;
    let matrix = model.transform_matrix(&table.matrix)?;
    Ok((
        model,
        ReducedTable {
            subject_ids: table.subject_ids.clone(),
            image_ids: table.image_ids.clone(),
            splits,
            matrix,
        },
    ))
}

/// Trains the classifier on the training rows, monitoring the validation rows.
pub fn train_stage(reduced: &ReducedTable, cfg: &PipelineConfig) -> Result<(Vec<String>, TrainOutcome)> {
    let (classes, _) = reduced.labels();
    let seeds = Seeds::from_master(cfg.seed);
    let (x, y) = reduced.select(Split::Train, &classes)?;
    let (vx, vy) = reduced.select(Split::Val, &classes)?;
    let mut tcfg = cfg.train.clone();
    tcfg.seed = seeds.train;
    let mut model = MlpModel::new(&tcfg.layer_sizes(reduced.matrix.cols, classes.len()), tcfg.dropout, seeds.init)?;
    if tcfg.zero_output_layer {
        model.zero_output_layer();
    }
    let outcome = train(model, &x, &y, Some((&vx, &vy)), &tcfg)?;
    Ok((classes, outcome))
}

pub fn eval_stage(model: &MlpModel, classes: &[String], reduced: &ReducedTable) -> Result<Metrics> {
    let (x, y) = reduced.select(Split::Test, classes)?;
    evaluate(model, &x, &y)
}

pub fn write_history_csv(outcome: &TrainOutcome, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &outcome.history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            opt(r.val_loss),
            r.train_acc.to_string(),
            opt(r.val_acc),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Metrics JSON with subject names; deliberately free of timings so reruns compare byte-for-byte.
pub fn metrics_json(metrics: &Metrics, classes: &[String], outcome: Option<&TrainOutcome>, reduced: &ReducedTable) -> Value {
    let per_class: Vec<Value> = metrics
        .per_class
        .iter()
        .map(|c| {
            json!({
                "subject_id": classes[c.class],
                "precision": c.precision,
                "sensitivity": c.sensitivity,
                "f_score": c.f_score,
                "support": c.support,
            })
        })
        .collect();
    let mut v = json!({
        "accuracy": metrics.accuracy,
        "macro_precision": metrics.macro_precision,
        "macro_sensitivity": metrics.macro_sensitivity,
        "macro_f_score": metrics.macro_f_score,
        "support": metrics.support,
        "classes": classes.len(),
        "train_size": reduced.count(Split::Train),
        "val_size": reduced.count(Split::Val),
        "test_size": reduced.count(Split::Test),
        "components": reduced.matrix.cols,
        "per_class": per_class,
    });
    if let Some(o) = outcome {
        v["best_epoch"] = json!(o.best_epoch);
        v["epochs_run"] = json!(o.history.len());
        v["stopped_early"] = json!(o.stopped_early);
    }
    v
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Correlation and AUC diagnostics of the feature pool; returns the JSON summary.
pub fn analyze_stage(table: &FeatureTable, out: &Path) -> Result<Value> {
    fs::create_dir_all(out)?;
    let corr = pearson_matrix(&table.matrix)?;
    let names = &table.columns;

    let mut w = csv::Writer::from_path(out.join(CORRELATION_CSV)).map_err(csv_err)?;
    let mut header = vec!["feature".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..corr.dim {
        let mut rec = vec![names[i].clone()];
        rec.extend((0..corr.dim).map(|j| corr.get(i, j).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join(CORRELATION_HISTOGRAM_CSV)).map_err(csv_err)?;
    w.write_record(["abs_r_low", "abs_r_high", "count"]).map_err(csv_err)?;
    for (k, c) in corr.histogram.iter().enumerate() {
        let lo = k as f64 * HISTOGRAM_BIN_WIDTH;
        let hi = if k + 1 == HISTOGRAM_BINS { 1.0 } else { (k + 1) as f64 * HISTOGRAM_BIN_WIDTH };
        w.write_record([format!("{lo:.2}"), format!("{hi:.2}"), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;

    let (classes, labels) = table.labels();
    let report = auc_report(&table.matrix, &labels, classes.len())?;
    let layout = feature_layout();
    let groups: Vec<_> = if layout.len() == table.matrix.cols {
        layout.iter().map(|d| d.group).collect()
    } else {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            actual: table.matrix.cols,
        });
    };
    let ranking = rank_features(&report, &groups)?;
    let mut w = csv::Writer::from_path(out.join(AUC_RANKING_CSV)).map_err(csv_err)?;
    w.write_record(["rank", "feature_index", "feature", "group", "mean_auc", "std_auc"])
        .map_err(csv_err)?;
    for (rank, &j) in ranking.order.iter().enumerate() {
        let fa = &report.features[j];
        w.write_record([
            (rank + 1).to_string(),
            j.to_string(),
            names[j].clone(),
            groups[j].to_string(),
            fa.mean.to_string(),
            fa.std.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let top: Vec<Value> = ranking
        .order
        .iter()
        .take(10)
        .map(|&j| json!({"feature": names[j], "mean_auc": report.features[j].mean, "std_auc": report.features[j].std}))
        .collect();
    let summary = json!({
        "samples": table.matrix.rows,
        "features": table.matrix.cols,
        "classes": classes.len(),
        "fraction_below_half": corr.fraction_below_half,
        "zero_variance_features": corr.zero_variance.iter().map(|&j| names[j].clone()).collect::<Vec<_>>(),
        "features_auc_above_0_6": report.features.iter().filter(|f| f.mean > 0.6).count(),
        "top10": top,
        "group_mean_auc": ranking
            .group_means
            .iter()
            .map(|(g, m)| (g.to_string(), json!(m)))
            .collect::<serde_json::Map<_, _>>(),
    });
    write_json(&out.join(ANALYSIS_JSON), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, Value>,
    pub seeds: Seeds,
    pub stage_versions: BTreeMap<String, u32>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub threads: usize,
    pub dataset_root: PathBuf,
    pub images: usize,
    pub classes: usize,
    pub dataset_notes: Vec<String>,
    pub failures: Vec<ImageFailure>,
    pub kpca_components: usize,
    pub kpca_rank_deficient: bool,
    pub test_accuracy: f64,
    pub outputs: Vec<String>,
}

/// Builds the worker pool the config asks for (0 = all cores).
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

/// Full pipeline into `out`. Without `cfg.dataset`, the synthetic suite is
/// generated under `out/synthetic` first.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let pool = thread_pool(cfg.threads)?;
    pool.install(|| run_in_pool(cfg, out, pool.current_num_threads()))
}

fn run_in_pool(cfg: &PipelineConfig, out: &Path, threads: usize) -> Result<RunManifest> {
    fs::create_dir_all(out)?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let root = match &cfg.dataset {
        Some(root) => root.clone(),
        None => {
            let root = out.join("synthetic");
            generate_synthetic(&cfg.synth, &root)?;
            lap("synthesize", &mut timings);
            root
        }
    };
    let manifest = ingest(&root)?;
    info!("{} images of {} subjects under {}", manifest.entries.len(), manifest.class_count, root.display());
    lap("ingest", &mut timings);

    let debug_dir = cfg.debug_images.then(|| out.join("debug"));
    let (table, failures) = extract_dataset(&manifest, cfg, debug_dir.as_deref())?;
    table.write_csv(&out.join(FEATURES_CSV))?;
    lap("images", &mut timings);
    let (classes, _) = table.labels();
    if classes.len() < 2 {
        return Err(Error::TooFewSamples {
            got: classes.len(),
            need: 2,
        });
    }
    info!("features for {} images ({} failed)", table.matrix.rows, failures.len());

    let (kpca, reduced) = reduce_stage(&table, cfg)?;
    kpca_to_bundle(&kpca, json!({"seed": cfg.seed})).save(&out.join(KPCA_BUNDLE))?;
    reduced.write_csv(&out.join(REDUCED_CSV))?;
    lap("reduce", &mut timings);

    let (classes, outcome) = train_stage(&reduced, cfg)?;
    mlp_to_bundle(&outcome.model, json!({"seed": cfg.seed, "classes": classes, "train": cfg.train}))
        .save(&out.join(MLP_BUNDLE))?;
    write_history_csv(&outcome, &out.join(HISTORY_CSV))?;
    lap("train", &mut timings);

    let metrics = eval_stage(&outcome.model, &classes, &reduced)?;
    write_json(&out.join(METRICS_JSON), &metrics_json(&metrics, &classes, Some(&outcome), &reduced))?;
    info!("test accuracy {:.4} on {} samples", metrics.accuracy, metrics.support);
    lap("evaluate", &mut timings);

    analyze_stage(&table, out)?;
    lap("analysis", &mut timings);

    let outputs = [
        FEATURES_CSV,
        REDUCED_CSV,
        KPCA_BUNDLE,
        MLP_BUNDLE,
        HISTORY_CSV,
        METRICS_JSON,
        CORRELATION_CSV,
        CORRELATION_HISTOGRAM_CSV,
        AUC_RANKING_CSV,
        ANALYSIS_JSON,
        RUN_MANIFEST_JSON,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let run = RunManifest {
        config: cfg.to_flat(),
        seeds: Seeds::from_master(cfg.seed),
        stage_versions: STAGE_VERSIONS.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        timings,
        threads,
        dataset_root: root,
        images: manifest.entries.len(),
        classes: classes.len(),
        dataset_notes: manifest.notes.clone(),
        failures,
        kpca_components: kpca.k,
        kpca_rank_deficient: kpca.rank_deficient,
        test_accuracy: metrics.accuracy,
        outputs,
    };
    write_json(&out.join(RUN_MANIFEST_JSON), &serde_json::to_value(&run)?)?;
    Ok(run)
}

/// Loads an MLP bundle and the class names stored with it.
pub fn load_classifier(path: &Path) -> Result<(MlpModel, Vec<String>)> {
    let b = Bundle::load(path)?;
    let model = mlp_from_bundle(&b)?;
    let classes: Vec<String> = serde_json::from_value(b.manifest.get("classes").cloned().unwrap_or(Value::Null))
        .map_err(|_| Error::CorruptBundle("class names missing".into()))?;
    if classes.len() != model.num_classes() {
        return Err(Error::CorruptBundle("class count disagrees with output layer".into()));
    }
    Ok((model, classes))
}
