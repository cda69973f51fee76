//! Pupil/iris boundary localization and eyelid masking.
//!
//! `segment` runs structure extraction (RTV), edge detection, a two-stage
//! constrained circular Hough search and a parabolic eyelid fit.

mod eyelid;
mod hough;
pub mod rtv;

use serde::{Deserialize, Serialize};

pub use eyelid::{fit_eyelids, Parabola, MIN_BAND_POINTS};
pub use hough::{localize_circles, pupil_seed};
pub use rtv::{rtv_energy, smooth_rtv, RtvResult};

use crate::edges::{EdgeConfig, EdgeMap};
use crate::error::{invalid, Result};
use crate::imaging::{FloatImage, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    #[inline]
    pub fn center_distance(&self, other: &Circle) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).hypot(y - self.cy) <= self.r
    }
}

/// Segmentation result for one eye image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrisGeometry {
    pub pupil: Circle,
    pub iris: Circle,
    pub width: usize,
    pub height: usize,
    /// Row-major; `true` marks eyelid-occluded pixels. Always inside the iris disk.
    #[serde(skip)]
    pub eyelid_mask: Vec<bool>,
}

impl IrisGeometry {
    pub fn new(pupil: Circle, iris: Circle, width: usize, height: usize) -> Result<Self> {
        let g = Self {
            pupil,
            iris,
            width,
            height,
            eyelid_mask: vec![false; width * height],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let in_bounds = |c: &Circle| {
            c.cx >= 0.0 && c.cy >= 0.0 && c.cx <= self.width as f64 && c.cy <= self.height as f64
        };
        if !(self.pupil.r > 0.0 && self.iris.r > 0.0) {
            return Err(invalid("circle radii must be positive"));
        }
        if !in_bounds(&self.pupil) || !in_bounds(&self.iris) {
            return Err(invalid("circle center outside image"));
        }
        if self.pupil.r >= self.iris.r {
            return Err(invalid("pupil radius must be smaller than iris radius"));
        }
        if self.pupil.center_distance(&self.iris) >= self.iris.r - self.pupil.r {
            return Err(invalid("pupil circle must lie strictly inside the iris circle"));
        }
        if self.eyelid_mask.len() != self.width * self.height {
            return Err(invalid("eyelid mask dimensions differ from source image"));
        }
        Ok(())
    }

    #[inline]
    pub fn is_occluded(&self, x: usize, y: usize) -> bool {
        self.eyelid_mask[y * self.width + x]
    }

    pub fn mask_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.is_occluded(x, y) {
                255
            } else {
                0
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub lambda: f64,
    /// Gaussian window scale of the RTV variation measures.
    pub rtv_sigma: f64,
    pub rtv_iters: usize,
    /// Pupil radius search range; defaults to `[10, 0.15·min(w,h)]`.
    pub pupil_r: Option<(f64, f64)>,
    /// Iris radius search range; defaults to `[0.2·min(w,h), 0.45·min(w,h)]`.
    pub iris_r: Option<(f64, f64)>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            lambda: 0.015,
            rtv_sigma: 3.0,
            rtv_iters: 4,
            pupil_r: None,
            iris_r: None,
        }
    }
}

impl SegmentConfig {
    pub fn radius_ranges(&self, width: usize, height: usize) -> ((f64, f64), (f64, f64)) {
        let m = width.min(height) as f64;
        (
            self.pupil_r.unwrap_or((10.0, 0.15 * m)),
            self.iris_r.unwrap_or((0.2 * m, 0.45 * m)),
        )
    }
}

/// Intermediate products of [`segment_traced`], for debugging and figures.
#[derive(Debug, Clone)]
pub struct SegmentationTrace {
    pub structure: FloatImage,
    pub edges: EdgeMap,
    pub geometry: IrisGeometry,
}

pub fn segment(img: &GrayImage, cfg: &SegmentConfig, edge_cfg: &EdgeConfig) -> Result<IrisGeometry> {
    Ok(segment_traced(img, cfg, edge_cfg)?.geometry)
}

pub fn segment_traced(
    img: &GrayImage,
    cfg: &SegmentConfig,
    edge_cfg: &EdgeConfig,
) -> Result<SegmentationTrace> {
    let rtv = smooth_rtv(&img.to_float(), cfg.lambda, cfg.rtv_sigma, cfg.rtv_iters)?;
    let edges = edge_cfg.detect(&rtv.structure)?;
    let (pupil_r, iris_r) = cfg.radius_ranges(img.width(), img.height());
    let (pupil, iris) = localize_circles(&edges, img, pupil_r, iris_r)?;
    let mut geometry = IrisGeometry::new(pupil, iris, img.width(), img.height())?;
    geometry.eyelid_mask = fit_eyelids(&edges, &pupil, &iris).mask;
    geometry.validate()?;
    Ok(SegmentationTrace {
        structure: rtv.structure,
        edges,
        geometry,
    })
}
