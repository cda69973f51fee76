//! Dataset discovery (`<root>/<subject_id>/<image files>`) and stratified splits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imaging::load_image;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub subject_id: String,
    pub image_path: PathBuf,
}

impl DatasetEntry {
    /// File stem of the image, used as the image id.
    pub fn image_id(&self) -> String {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<DatasetEntry>,
    pub class_count: usize,
    /// Files that were skipped, with the reason.
    pub notes: Vec<String>,
}

impl DatasetManifest {
    pub fn from_entries(mut entries: Vec<DatasetEntry>, notes: Vec<String>) -> Self {
        entries.sort_by(|a, b| {
            (a.subject_id.as_str(), a.image_path.file_name())
                .cmp(&(b.subject_id.as_str(), b.image_path.file_name()))
        });
        let class_count = entries
            .iter()
            .map(|e| e.subject_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        Self {
            entries,
            class_count,
            notes,
        }
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.entries.iter().map(|e| e.subject_id.clone()).collect();
        s.dedup();
        s
    }
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("pgm") | Some("png")
    )
}

/// Scans `<root>/<subject>/*.{pgm,png}`. Unreadable images are skipped and
/// listed in the manifest notes.
pub fn ingest(root: &Path) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let mut entries = Vec::new();
    let mut notes = Vec::new();
    let mut subjects: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subjects.sort();
    for dir in subjects {
        let subject_id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        files.sort();
        for f in files {
            match load_image(&f) {
                Ok(_) => entries.push(DatasetEntry {
                    subject_id: subject_id.clone(),
                    image_path: f,
                }),
                Err(e) => {
                    log::warn!("skipping {}: {e}", f.display());
                    notes.push(format!("unreadable: {} ({e})", f.display()));
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(root.display().to_string()));
    }
    Ok(DatasetManifest::from_entries(entries, notes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(invalid(format!("unknown split '{other}'"))),
        }
    }
}

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f >= 0.0)) || self.train <= 0.0 {
            return Err(invalid("split fractions must be non-negative with train > 0"));
        }
        if ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(invalid("split fractions must sum to 1"));
        }
        Ok(())
    }
}

/// Assigns each sample to a split, stratified by label: every class's samples
/// are shuffled (seeded) and divided by the fractions, with at least one
/// training sample per class.
pub fn stratified_split(labels: &[usize], fractions: SplitFractions, seed: u64) -> Result<Vec<Split>> {
    fractions.validate()?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Split::Train; labels.len()];
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_val = ((fractions.val * n as f64).round() as usize).min(n.saturating_sub(1));
        let n_test = ((fractions.test * n as f64).round() as usize).min(n - 1 - n_val);
        let n_train = n - n_val - n_test;
        for (k, &i) in idx.iter().enumerate() {
            out[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}
