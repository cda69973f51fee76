//! Rubber-sheet mapping of the iris annulus onto a fixed polar rectangle.
//!
//! Row `i` samples the normalized radius `r = i/(height−1)`, column `j` the
//! angle `θ = 2π·j/width`. Each sample interpolates linearly between the pupil
//! boundary point and the iris boundary point at that angle, so non-concentric
//! circles are handled.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imaging::{bilinear, GrayImage};
use crate::segmentation::IrisGeometry;

/// Normalization fails below this fraction of valid samples.
pub const MIN_COVERAGE: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeConfig {
    pub height: usize,
    pub width: usize,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 360,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIris {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// `false` where the sample fell on the eyelid mask or outside the image.
    pub valid: Vec<bool>,
}

impl NormalizedIris {
    pub fn new(height: usize, width: usize, data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if data.len() != height * width || valid.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: data.len().min(valid.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("normalized iris contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            data,
            valid,
        })
    }

    /// A fully valid rectangle built from a function of (row, column).
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
            valid: vec![true; height * width],
        }
    }

    pub fn coverage(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Valid values in row-major order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.data
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(&d, _)| d)
            .collect()
    }

    /// Data with invalid samples replaced by the mean of the valid ones.
    pub fn mean_filled(&self) -> Vec<f64> {
        let vals = self.valid_values();
        let mean = if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        self.data
            .iter()
            .zip(&self.valid)
            .map(|(&d, &v)| if v { d } else { mean })
            .collect()
    }

    /// Columns rotated so that output column `j` holds input column `j − shift`.
    pub fn shifted_columns(&self, shift: usize) -> NormalizedIris {
        let w = self.width;
        let mut data = vec![0.0; self.data.len()];
        let mut valid = vec![false; self.valid.len()];
        for i in 0..self.height {
            for j in 0..w {
                let src = i * w + j;
                let dst = i * w + (j + shift) % w;
                data[dst] = self.data[src];
                valid[dst] = self.valid[src];
            }
        }
        NormalizedIris {
            height: self.height,
            width: w,
            data,
            valid,
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            self.get(y, x).round().clamp(0.0, 255.0) as u8
        })
    }

    pub fn validity_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.valid[y * self.width + x] {
                255
            } else {
                0
            }
        })
    }
}

pub fn rubber_sheet(
    img: &GrayImage,
    geo: &IrisGeometry,
    height: usize,
    width: usize,
) -> Result<NormalizedIris> {
    if height < 2 || width < 4 {
        return Err(invalid("normalized size must be at least 2x4"));
    }
    geo.validate()?;
    if geo.width != img.width() || geo.height != img.height() {
        return Err(invalid("geometry and image dimensions differ"));
    }
    let (p, q) = (&geo.pupil, &geo.iris);
    let mut data = Vec::with_capacity(height * width);
    let mut valid = Vec::with_capacity(height * width);
    let angles: Vec<(f64, f64)> = (0..width)
        .map(|j| (2.0 * std::f64::consts::PI * j as f64 / width as f64).sin_cos())
        .collect();
    for i in 0..height {
        let r = i as f64 / (height - 1) as f64;
        for &(s, c) in &angles {
            let (px, py) = (p.cx + p.r * c, p.cy + p.r * s);
            let (qx, qy) = (q.cx + q.r * c, q.cy + q.r * s);
            let x = (1.0 - r) * px + r * qx;
            let y = (1.0 - r) * py + r * qy;
            match bilinear(img, x, y) {
                Some(v) => {
                    let (nx, ny) = (x.round() as usize, y.round() as usize);
                    data.push(v);
                    valid.push(!geo.is_occluded(nx, ny));
                }
                None => {
                    data.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    let rect = NormalizedIris::new(height, width, data, valid)?;
    let coverage = rect.coverage();
    if coverage < MIN_COVERAGE {
        return Err(Error::InsufficientCoverage { coverage });
    }
    Ok(rect)
}
