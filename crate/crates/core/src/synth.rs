//! Synthetic near-infrared eye images with known geometry.
//!
//! Each class owns a fixed iris texture (a seeded mix of radial/angular
//! sinusoids in normalized polar coordinates) and a base iris intensity.
//! Images of the same class differ by eye position, pupil dilation, rotation,
//! illumination gradient, sensor noise, and optional specular highlight and
//! upper-eyelid occlusion.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetEntry, DatasetManifest};
use crate::error::{invalid, Result};
use crate::imaging::{save_pgm, GrayImage};
use crate::segmentation::Circle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEyeSpec {
    pub classes: usize,
    pub images_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub pupil_r: (f64, f64),
    pub iris_r: (f64, f64),
    /// Maximum displacement of the eye center from the image center.
    pub center_jitter: f64,
    /// Maximum pupil-center offset from the iris center.
    pub pupil_offset: f64,
    pub occlusion_probability: f64,
    pub specular_probability: f64,
    pub rotation_jitter_deg: f64,
    pub noise_sigma: f64,
    /// Range of per-class texture contrast (gray levels).
    pub texture_strength: (f64, f64),
}

impl Default for SyntheticEyeSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            images_per_class: 10,
            width: 128,
            height: 128,
            seed: 2021,
            pupil_r: (12.0, 17.0),
            iris_r: (40.0, 50.0),
            center_jitter: 5.0,
            pupil_offset: 1.5,
            occlusion_probability: 0.3,
            specular_probability: 1.0,
            rotation_jitter_deg: 15.0,
            noise_sigma: 2.0,
            texture_strength: (6.0, 16.0),
        }
    }
}

impl SyntheticEyeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.images_per_class == 0 {
            return Err(invalid("synthetic spec needs at least one class and one image"));
        }
        if self.width < 32 || self.height < 32 {
            return Err(invalid("synthetic images must be at least 32x32"));
        }
        let ok_range = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1;
        if !ok_range(self.pupil_r) || !ok_range(self.iris_r) || !ok_range(self.texture_strength) {
            return Err(invalid("radius ranges must be positive and ordered"));
        }
        if self.pupil_r.1 + self.pupil_offset >= self.iris_r.0 {
            return Err(invalid("pupil must fit strictly inside the iris"));
        }
        let margin = self.iris_r.1 + self.center_jitter;
        if 2.0 * margin >= self.width.min(self.height) as f64 {
            return Err(invalid("iris does not fit in the image"));
        }
        for p in [self.occlusion_probability, self.specular_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("probabilities must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One sinusoidal texture component in normalized polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Wave {
    amplitude: f64,
    angular: f64,
    radial: f64,
    phase: f64,
}

/// Dark Gaussian pit fixed in normalized polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Crypt {
    rho: f64,
    theta: f64,
    rho_width: f64,
    theta_width: f64,
    depth: f64,
}

/// Per-class texture signature: a sum of sinusoids bent by a class-specific
/// quadratic (so classes differ in histogram shape, not just contrast), a
/// radial profile (limbal ramp plus collarette ring) and a fixed set of crypts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub base: f64,
    strength: f64,
    skew: f64,
    ramp: f64,
    collarette: (f64, f64, f64),
    waves: Vec<Wave>,
    crypts: Vec<Crypt>,
}

impl ClassSignature {
    pub fn new(seed: u64, class: usize, strength: (f64, f64)) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, class as u64, 0x5157));
        let base = rng.gen_range(70.0..110.0);
        let band_lo = rng.gen_range(2.0..30.0f64).round();
        let band_span = rng.gen_range(4.0..16.0f64).round();
        let radial_hi = rng.gen_range(1.0..6.0);
        let strength = rng.gen_range(strength.0..=strength.1);
        let n = 10;
        let waves = (0..n)
            .map(|_| Wave {
                amplitude: strength * rng.gen_range(0.3..1.0),
                angular: (band_lo + rng.gen_range(0.0..=band_span)).round(),
                radial: rng.gen_range(0.0..radial_hi),
                phase: rng.gen_range(0.0..2.0 * PI),
            })
            .collect();
        let skew = rng.gen_range(-0.8..0.8);
        let crypt_depth = rng.gen_range(10.0..40.0);
        let crypt_size = rng.gen_range(0.5..1.5);
        let crypts = (0..rng.gen_range(0..=12))
            .map(|_| Crypt {
                rho: rng.gen_range(0.2..0.9),
                theta: rng.gen_range(0.0..2.0 * PI),
                rho_width: crypt_size * rng.gen_range(0.04..0.1),
                theta_width: crypt_size * rng.gen_range(0.04..0.12),
                depth: crypt_depth * rng.gen_range(0.5..1.0),
            })
            .collect();
        let ramp = rng.gen_range(-35.0..5.0);
        let collarette = (
            rng.gen_range(0.2..0.45),
            rng.gen_range(0.06..0.12),
            rng.gen_range(-25.0..25.0),
        );
        Self {
            base,
            strength,
            skew,
            ramp,
            collarette,
            waves,
            crypts,
        }
    }

    /// Iris intensity at normalized radius `rho ∈ [0,1]` and angle `theta`.
    pub fn texture(&self, rho: f64, theta: f64) -> f64 {
        let s = self
            .waves
            .iter()
            .map(|w| w.amplitude * (w.angular * theta + 2.0 * PI * w.radial * rho + w.phase).cos())
            .sum::<f64>()
            / (self.waves.len() as f64).sqrt();
        let pits: f64 = self
            .crypts
            .iter()
            .map(|c| {
                let dt = (theta - c.theta + PI).rem_euclid(2.0 * PI) - PI;
                let q = ((rho - c.rho) / c.rho_width).powi(2) + (dt / c.theta_width).powi(2);
                c.depth * (-0.5 * q).exp()
            })
            .sum();
        let (c_rho, c_width, c_amp) = self.collarette;
        let profile = self.ramp * (rho - 0.5) + c_amp * (-0.5 * ((rho - c_rho) / c_width).powi(2)).exp();
        self.base + profile + s + self.skew * s * s / self.strength - pits
    }
}

/// Upper-eyelid occluder: pixels with `y < y0 − curvature·(x − cx)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub y0: f64,
    pub cx: f64,
    pub curvature: f64,
}

impl Occluder {
    #[inline]
    pub fn covers(&self, x: f64, y: f64) -> bool {
        y < self.y0 - self.curvature * (x - self.cx).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub subject_id: String,
    pub class: usize,
    pub index: usize,
    pub file: PathBuf,
    pub pupil: Circle,
    pub iris: Circle,
    pub rotation_deg: f64,
    pub occluder: Option<Occluder>,
    pub specular: Option<Circle>,
}

impl GroundTruth {
    /// Pixels (by center) covered by the occluder and inside the iris disk.
    pub fn occluded_iris(&self, width: usize, height: usize) -> Vec<bool> {
        let mut out = vec![false; width * height];
        if let Some(occ) = self.occluder {
            for y in 0..height {
                for x in 0..width {
                    let (xf, yf) = (x as f64, y as f64);
                    out[y * width + x] = occ.covers(xf, yf) && self.iris.contains(xf, yf);
                }
            }
        }
        out
    }
}

pub fn subject_name(class: usize) -> String {
    format!("S{:03}", class + 1)
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SCLERA: f64 = 195.0;
const PUPIL: f64 = 25.0;
const EYELID: f64 = 150.0;
const SPECULAR: f64 = 250.0;
const SUPERSAMPLE: usize = 3;

/// Renders image `index` of `class`. Deterministic in (spec.seed, class, index).
pub fn render_eye(spec: &SyntheticEyeSpec, class: usize, index: usize) -> (GrayImage, GroundTruth) {
    let sig = ClassSignature::new(spec.seed, class, spec.texture_strength);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, class as u64, 1 + index as u64));
    let (w, h) = (spec.width, spec.height);
    let jitter = |rng: &mut ChaCha8Rng, m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };

    let icx = w as f64 / 2.0 + jitter(&mut rng, spec.center_jitter);
    let icy = h as f64 / 2.0 + jitter(&mut rng, spec.center_jitter);
    let ir = rng.gen_range(spec.iris_r.0..=spec.iris_r.1);
    let pr = rng.gen_range(spec.pupil_r.0..=spec.pupil_r.1);
    let off_a = rng.gen_range(0.0..2.0 * PI);
    let off_r = rng.gen_range(0.0..=spec.pupil_offset);
    let (pcx, pcy) = (icx + off_r * off_a.cos(), icy + off_r * off_a.sin());
    let rotation_deg = jitter(&mut rng, spec.rotation_jitter_deg);
    let rot = rotation_deg.to_radians();
    let gain = rng.gen_range(0.93..1.07);
    let (gx, gy) = (rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12));

    let specular = rng.gen_bool(spec.specular_probability).then(|| {
        let a = rng.gen_range(0.0..2.0 * PI);
        let d = rng.gen_range(0.0..0.4) * pr;
        Circle::new(pcx + d * a.cos(), pcy + d * a.sin(), rng.gen_range(2.0..3.5))
    });
    let occluder = rng.gen_bool(spec.occlusion_probability).then(|| Occluder {
        y0: icy - rng.gen_range(0.45..0.75) * ir,
        cx: icx + jitter(&mut rng, 0.2 * ir),
        curvature: rng.gen_range(0.002..0.008),
    });

    let pupil = Circle::new(pcx, pcy, pr);
    let iris = Circle::new(icx, icy, ir);
    let shade = |x: f64, y: f64| -> f64 {
        let illum = 1.0 + gx * (x / w as f64 - 0.5) + gy * (y / h as f64 - 0.5);
        let v = if occluder.is_some_and(|o| o.covers(x, y)) {
            EYELID
        } else if specular.is_some_and(|s| s.contains(x, y)) {
            SPECULAR
        } else if pupil.contains(x, y) {
            PUPIL
        } else if iris.contains(x, y) {
            let theta = (y - pcy).atan2(x - pcx);
            let d = (x - pcx).hypot(y - pcy);
            let rho = ((d - pr) / (ir - pr)).clamp(0.0, 1.0);
            sig.texture(rho, theta - rot)
        } else {
            SCLERA
        };
        v * gain * illum
    };

    let noise = Normal::new(0.0, spec.noise_sigma.max(1e-12)).expect("valid sigma");
    let ss = SUPERSAMPLE as f64;
    let img = GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let px = x as f64 + (sx as f64 + 0.5) / ss - 0.5;
                let py = y as f64 + (sy as f64 + 0.5) / ss - 0.5;
                acc += shade(px, py);
            }
        }
        let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        (acc / (ss * ss) + n).round().clamp(0.0, 255.0) as u8
    });
    let subject_id = subject_name(class);
    let file = PathBuf::from(&subject_id).join(format!("{subject_id}_{index:02}.pgm"));
    (
        img,
        GroundTruth {
            subject_id,
            class,
            index,
            file,
            pupil,
            iris,
            rotation_deg,
            occluder,
            specular,
        },
    )
}

/// Renders the whole suite in memory, class-major.
pub fn render_suite(spec: &SyntheticEyeSpec) -> Result<Vec<(GrayImage, GroundTruth)>> {
    spec.validate()?;
    Ok((0..spec.classes)
        .flat_map(|c| (0..spec.images_per_class).map(move |i| (c, i)))
        .map(|(c, i)| render_eye(spec, c, i))
        .collect())
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Writes `<out>/<subject>/<subject>_<nn>.pgm` plus `<out>/ground_truth.json`.
pub fn generate_synthetic(spec: &SyntheticEyeSpec, out: &Path) -> Result<(DatasetManifest, Vec<GroundTruth>)> {
    let suite = render_suite(spec)?;
    fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(suite.len());
    let mut truths = Vec::with_capacity(suite.len());
    for (img, gt) in suite {
        let path = out.join(&gt.file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        save_pgm(&img, &path)?;
        entries.push(DatasetEntry {
            subject_id: gt.subject_id.clone(),
            image_path: path,
        });
        truths.push(gt);
    }
    fs::write(
        out.join(GROUND_TRUTH_FILE),
        serde_json::to_string_pretty(&serde_json::json!({ "spec": spec, "images": truths }))?,
    )?;
    Ok((DatasetManifest::from_entries(entries, Vec::new()), truths))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticEyeSpec {
        SyntheticEyeSpec {
            classes: 2,
            images_per_class: 3,
            ..Default::default()
        }
    }

    #[test]
    fn counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let (m, gt) = generate_synthetic(&small(), dir.path()).unwrap();
        assert_eq!(m.entries.len(), 6);
        assert_eq!(gt.len(), 6);
        assert_eq!(m.class_count, 2);
        let a = render_suite(&small()).unwrap();
        let b = render_suite(&small()).unwrap();
        assert_eq!(a, b);
        let other = render_suite(&SyntheticEyeSpec { seed: 9, ..small() }).unwrap();
        assert_ne!(a[0].0, other[0].0);
    }

    #[test]
    fn class_signatures_differ() {
        assert_ne!(ClassSignature::new(1, 0, (3.0, 8.0)), ClassSignature::new(1, 1, (3.0, 8.0)));
    }

    #[test]
    fn geometry_invariants() {
        for (_, gt) in render_suite(&SyntheticEyeSpec::default()).unwrap() {
            assert!(gt.pupil.r < gt.iris.r);
            assert!(gt.pupil.center_distance(&gt.iris) < gt.iris.r - gt.pupil.r);
        }
    }

    #[test]
    fn spec_validation() {
        let bad = SyntheticEyeSpec {
            pupil_r: (30.0, 45.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
