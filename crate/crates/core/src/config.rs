//! Run configuration: a flat JSON object with dotted keys
//! (`"segment.lambda": 0.02`, `"edges.method": "canny"`, …) layered over
//! defaults. Later layers override earlier ones (defaults < file < CLI).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::classify::TrainConfig;
use crate::dataset::SplitFractions;
use crate::edges::EdgeConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::normalization::NormalizeConfig;
use crate::preprocess::PreprocessConfig;
use crate::reduce::{Kernel, KernelKind, DEFAULT_COMPONENTS};
use crate::segmentation::SegmentConfig;
use crate::synth::SyntheticEyeSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub components: usize,
    pub kernel: KernelKind,
    /// RBF width; `None` means `1/dims`.
    pub gamma: Option<f64>,
    pub degree: u32,
    pub coef0: f64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self {
            components: DEFAULT_COMPONENTS,
            kernel: KernelKind::Rbf,
            gamma: None,
            degree: 3,
            coef0: 1.0,
        }
    }
}

impl ReduceConfig {
    pub fn kernel_for(&self, dims: usize) -> Kernel {
        match self.kernel {
            KernelKind::Rbf => self.gamma.map_or_else(|| Kernel::default_rbf(dims), |gamma| Kernel::Rbf { gamma }),
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Polynomial => Kernel::Polynomial {
                degree: self.degree,
                coef0: self.coef0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Master seed for splitting, initialization and training.
    pub seed: u64,
    /// Worker threads for per-image stages; 0 uses all cores.
    pub threads: usize,
    /// Dataset root (`<root>/<subject>/<images>`); when absent, `run`
    /// generates the synthetic suite under the output directory.
    pub dataset: Option<PathBuf>,
    pub debug_images: bool,
    pub preprocess: PreprocessConfig,
    pub edges: EdgeConfig,
    pub segment: SegmentConfig,
    pub normalize: NormalizeConfig,
    pub features: FeatureConfig,
    pub reduce: ReduceConfig,
    pub split: SplitFractions,
    pub train: TrainConfig,
    pub synth: SyntheticEyeSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            threads: 0,
            dataset: None,
            debug_images: false,
            preprocess: PreprocessConfig::default(),
            edges: EdgeConfig::default(),
            segment: SegmentConfig::default(),
            normalize: NormalizeConfig::default(),
            features: FeatureConfig::default(),
            reduce: ReduceConfig::default(),
            split: SplitFractions::default(),
            train: TrainConfig::default(),
            synth: SyntheticEyeSpec::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn flatten_into(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, child, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

impl PipelineConfig {
    /// Every setting as a dotted key.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten_into("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    /// Applies dotted-key overrides. Unknown keys and ill-typed values are errors.
    pub fn apply(&self, overrides: &BTreeMap<String, Value>) -> Result<Self> {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        let known = self.to_flat();
        for (key, value) in overrides {
            // a key is settable if it is a leaf or the root of an optional/tuple value
            if !known.contains_key(key) {
                return Err(config_err(format!("unknown configuration key {key:?}")));
            }
            let mut node = &mut tree;
            let parts: Vec<&str> = key.split('.').collect();
            for part in &parts[..parts.len() - 1] {
                node = node
                    .get_mut(*part)
                    .ok_or_else(|| config_err(format!("unknown configuration key {key:?}")))?;
            }
            let last = parts[parts.len() - 1];
            node.as_object_mut()
                .ok_or_else(|| config_err(format!("unknown configuration key {key:?}")))?
                .insert(last.to_string(), value.clone());
        }
        let cfg: PipelineConfig =
            serde_json::from_value(tree).map_err(|e| config_err(format!("invalid configuration value: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| config_err(format!("config is not JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(config_err("config must be a JSON object of dotted keys"));
        };
        Self::default().apply(&map.into_iter().collect())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(config_err(format!("config file {} not found", path.display())));
        }
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.to_flat().into_iter().collect::<Map<_, _>>())
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess
            .validate()
            .map_err(|e| config_err(format!("preprocess: {e}")))?;
        let seg = &self.segment;
        if !(seg.lambda > 0.0) || !(seg.rtv_sigma > 0.0) || seg.rtv_iters == 0 {
            return Err(config_err("segment.lambda, segment.rtv_sigma and segment.rtv_iters must be positive"));
        }
        for (name, range) in [("segment.pupil_r", seg.pupil_r), ("segment.iris_r", seg.iris_r)] {
            if let Some((lo, hi)) = range {
                if !(lo > 0.0 && lo <= hi) {
                    return Err(config_err(format!("{name} must satisfy 0 < min ≤ max")));
                }
            }
        }
        let e = &self.edges;
        if e.scales == 0 || e.directions < 4 || !(e.threshold > 0.0 && e.threshold < 1.0) {
            return Err(config_err("edges.scales ≥ 1, edges.directions ≥ 4, edges.threshold in (0,1)"));
        }
        if self.normalize.height < 2 || self.normalize.width < 2 {
            return Err(config_err("normalize.height and normalize.width must be ≥ 2"));
        }
        self.features.validate()?;
        if self.reduce.components == 0 {
            return Err(config_err("reduce.components must be ≥ 1"));
        }
        self.reduce.kernel_for(1).validate()?;
        self.split.validate().map_err(|e| config_err(format!("split: {e}")))?;
        self.train.validate()?;
        self.synth.validate().map_err(|e| config_err(format!("synth: {e}")))?;
        Ok(())
    }
}
