//! The 252-value feature pool: fourteen statistics over eighteen subsections
//! of a normalized iris rectangle (raw region, FFT spectrum, four GLCMs, four
//! GLDM histograms, eight Haar sub-bands).

mod stats;
mod texture;
mod transforms;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normalization::NormalizedIris;

pub use stats::{compute_stats14, compute_stats14_masked, histogram_bin, StatVector14, STAT_NAMES};
pub use texture::{glcm, gldm, quantize, Direction, GlcmMatrix, GldmHistogram, QuantizedPlane};
pub use transforms::{
    dwt2_haar, fft_magnitude, haar_analysis, haar_synthesis, padded_plane, subband_validity, FftMode, HaarLevel,
    SUBBAND_NAMES,
};

pub const FEATURE_COUNT: usize = 252;
pub const SUBSECTION_COUNT: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    ShapeDensity,
    #[serde(rename = "FFT")]
    Fft,
    #[serde(rename = "GLCM")]
    Glcm,
    #[serde(rename = "GLDM")]
    Gldm,
    Wavelet,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::ShapeDensity,
        FeatureGroup::Fft,
        FeatureGroup::Glcm,
        FeatureGroup::Gldm,
        FeatureGroup::Wavelet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::ShapeDensity => "ShapeDensity",
            FeatureGroup::Fft => "FFT",
            FeatureGroup::Glcm => "GLCM",
            FeatureGroup::Gldm => "GLDM",
            FeatureGroup::Wavelet => "Wavelet",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub group: FeatureGroup,
    /// Index of the subsection within its group.
    pub subsection: usize,
    pub subsection_name: String,
    pub stat: &'static str,
}

impl FeatureDescriptor {
    /// Column name `<group>_<subsection>_<stat>`.
    pub fn name(&self) -> String {
        format!("{}_{}_{}", self.group, self.subsection_name, self.stat)
    }
}

fn subsections() -> Vec<(FeatureGroup, usize, String)> {
    let mut out = vec![
        (FeatureGroup::ShapeDensity, 0, "region".to_string()),
        (FeatureGroup::Fft, 0, "spectrum".to_string()),
    ];
    for (k, d) in Direction::ALL.iter().enumerate() {
        out.push((FeatureGroup::Glcm, k, d.to_string()));
    }
    for (k, d) in Direction::ALL.iter().enumerate() {
        out.push((FeatureGroup::Gldm, k, d.to_string()));
    }
    for (k, b) in SUBBAND_NAMES.iter().enumerate() {
        out.push((FeatureGroup::Wavelet, k, b.to_string()));
    }
    out
}

/// Descriptors of all 252 features in output order.
pub fn feature_layout() -> Vec<FeatureDescriptor> {
    subsections()
        .into_iter()
        .flat_map(|(group, subsection, name)| {
            STAT_NAMES.iter().map(move |&stat| FeatureDescriptor {
                group,
                subsection,
                subsection_name: name.clone(),
                stat,
            })
        })
        .collect()
}

pub fn feature_names() -> Vec<String> {
    feature_layout().iter().map(FeatureDescriptor::name).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Quantization levels for GLCM/GLDM.
    pub levels: usize,
    /// Pixel displacement for GLCM/GLDM.
    pub distance: usize,
    pub fft_mode: FftMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            levels: 32,
            distance: 1,
            fft_mode: FftMode::Magnitude,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=256).contains(&self.levels) {
            return Err(Error::Config(format!("features.levels must be in 2..=256, got {}", self.levels)));
        }
        if self.distance == 0 {
            return Err(Error::Config("features.distance must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Values of one subsection (14 statistics), by subsection position 0..18.
    pub fn subsection(&self, k: usize) -> &[f64] {
        &self.values[14 * k..14 * (k + 1)]
    }
}

pub fn extract_features(rect: &NormalizedIris, cfg: &FeatureConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    if rect.height < 2 || rect.width < 2 {
        return Err(invalid(format!("rectangle {}×{} too small", rect.height, rect.width)));
    }
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    let mut push = |s: StatVector14| values.extend_from_slice(&s.to_array());

    push(compute_stats14_masked(&rect.data, &rect.valid)?);
    push(compute_stats14(fft_magnitude(rect, cfg.fft_mode)?.data())?);

    let plane = QuantizedPlane::from_rect(rect, cfg.levels)?;
    for dir in Direction::ALL {
        push(compute_stats14(&glcm(&plane, dir, cfg.distance)?.probs)?);
    }
    for dir in Direction::ALL {
        push(compute_stats14(&gldm(&plane, dir, cfg.distance)?.probs)?);
    }
    for (band, valid) in dwt2_haar(rect)?.iter().zip(subband_validity(rect)) {
        if valid.iter().any(|&v| v) {
            push(compute_stats14_masked(band.data(), &valid)?);
        } else {
            push(compute_stats14(band.data())?);
        }
    }

    debug_assert_eq!(values.len(), FEATURE_COUNT);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite feature value"));
    }
    Ok(FeatureVector { values })
}
