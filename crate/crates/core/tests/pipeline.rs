use std::fs;

use iris_core::bundle::Bundle;
use iris_core::config::PipelineConfig;
use iris_core::dataset::{ingest, Split};
use iris_core::imaging::{save_pgm, GrayImage};
use iris_core::pipeline::{
    extract_dataset, reduce_stage, run_pipeline, FeatureTable, ReducedTable, RunManifest, AUC_RANKING_CSV, FEATURES_CSV,
    KPCA_BUNDLE, METRICS_JSON, MLP_BUNDLE, REDUCED_CSV, RUN_MANIFEST_JSON,
};
use iris_core::synth::{generate_synthetic, subject_name};

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.synth.classes = 3;
    cfg.synth.images_per_class = 10;
    cfg.train.hidden = vec![64, 32];
    cfg.train.max_epochs = 15;
    cfg
}

#[test]
fn bad_images_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let mut spec = cfg.synth.clone();
    spec.images_per_class = 3;
    generate_synthetic(&spec, dir.path()).unwrap();
    // a featureless frame cannot be segmented; a corrupt file cannot be decoded
    let blank = GrayImage::new(128, 128, vec![0u8; 128 * 128]).unwrap();
    save_pgm(&blank, &dir.path().join(subject_name(0)).join("blank.pgm")).unwrap();
    fs::write(dir.path().join(subject_name(1)).join("broken.pgm"), b"P5\n12 12\n255\n").unwrap();

    let manifest = ingest(dir.path()).unwrap();
    assert_eq!(manifest.entries.len(), 10);
    assert_eq!(manifest.notes.len(), 1);
    let (table, failures) = extract_dataset(&manifest, &cfg, None).unwrap();
    assert!(failures.iter().any(|f| f.image_id.contains("blank")), "{failures:?}");
    assert_eq!(table.matrix.rows + failures.len(), 10);
    assert!(table.matrix.rows >= 8);
    assert!(table.matrix.data.iter().all(|v| v.is_finite()));
}

#[test]
fn kpca_ignores_non_training_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    generate_synthetic(&cfg.synth, dir.path()).unwrap();
    let (table, _) = extract_dataset(&ingest(dir.path()).unwrap(), &cfg, None).unwrap();
    let (model, reduced) = reduce_stage(&table, &cfg).unwrap();

    let mut perturbed = table.clone();
    for (i, split) in reduced.splits.iter().enumerate() {
        if *split != Split::Train {
            for v in &mut perturbed.matrix.data[i * table.matrix.cols..(i + 1) * table.matrix.cols] {
                *v = *v * 3.0 + 17.0;
            }
        }
    }
    let (model2, reduced2) = reduce_stage(&perturbed, &cfg).unwrap();
    assert_eq!(reduced.splits, reduced2.splits);
    assert_eq!(model.k, model2.k);
    assert!(model.k < reduced.count(Split::Train));
    for (i, split) in reduced.splits.iter().enumerate() {
        if *split == Split::Train {
            assert_eq!(reduced.matrix.row(i), reduced2.matrix.row(i));
        }
    }
}

#[test]
fn small_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let run = run_pipeline(&cfg, dir.path()).unwrap();
    assert_eq!(run.classes, 3);
    assert_eq!(run.images, 30);
    for name in &run.outputs {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(RUN_MANIFEST_JSON)).unwrap()).unwrap();
    assert_eq!(manifest.seeds.master, cfg.seed);
    assert_eq!(PipelineConfig::default().apply(&manifest.config).unwrap(), cfg);

    let features = FeatureTable::read_csv(&dir.path().join(FEATURES_CSV)).unwrap();
    assert_eq!(features.columns.len(), 252);
    let reduced = ReducedTable::read_csv(&dir.path().join(REDUCED_CSV)).unwrap();
    assert_eq!(reduced.matrix.cols, run.kpca_components);
    assert_eq!(reduced.count(Split::Test), 6);

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(METRICS_JSON)).unwrap()).unwrap();
    assert_eq!(metrics["accuracy"].as_f64().unwrap(), run.test_accuracy);
    let ranking = fs::read_to_string(dir.path().join(AUC_RANKING_CSV)).unwrap();
    assert_eq!(ranking.lines().count(), 253);

    for bundle in [KPCA_BUNDLE, MLP_BUNDLE] {
        Bundle::load(&dir.path().join(bundle)).unwrap();
    }
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.dataset = Some(dir.path().join("nowhere"));
    let err = run_pipeline(&cfg, dir.path()).unwrap_err();
    assert_eq!(err.kind(), iris_core::error::ErrorKind::Data);
}
