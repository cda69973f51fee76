//! Illumination normalization, impulse-noise removal and specular-reflection
//! suppression, applied in that order.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::{gaussian_blur, histogram256, median_filter, FloatImage, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Gaussian surround scale of the retinex, in pixels.
    pub ssr_sigma: f64,
    /// Fraction of pixels at or below the reflection threshold.
    pub reflection_quantile: f64,
    pub median_radius: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            ssr_sigma: 30.0,
            reflection_quantile: 0.995,
            median_radius: 1,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ssr_sigma > 0.0) {
            return Err(invalid("preprocess.ssr_sigma must be > 0"));
        }
        if !(self.reflection_quantile > 0.0 && self.reflection_quantile <= 1.0) {
            return Err(invalid("preprocess.reflection_quantile must be in (0, 1]"));
        }
        if self.median_radius < 1 {
            return Err(invalid("preprocess.median_radius must be >= 1"));
        }
        Ok(())
    }
}

/// Single-scale retinex `log(I+1) - log(G*I + 1)`, min-max rescaled to [0, 255].
pub fn enhance_ssr(img: &GrayImage, sigma: f64) -> Result<FloatImage> {
    Ok(ssr_raw(img, sigma)?.rescale_to_255())
}

/// The retinex response before rescaling.
pub fn ssr_raw(img: &GrayImage, sigma: f64) -> Result<FloatImage> {
    if !(sigma > 0.0) {
        return Err(invalid("ssr sigma must be > 0"));
    }
    let f = img.to_float();
    let surround = gaussian_blur(&f, sigma);
    let data = f
        .data()
        .iter()
        .zip(surround.data())
        .map(|(&i, &s)| (i + 1.0).ln() - (s + 1.0).ln())
        .collect();
    FloatImage::new(img.width(), img.height(), data)
}

/// Result of [`remove_reflections`].
#[derive(Debug, Clone)]
pub struct Reflections {
    pub image: GrayImage,
    pub threshold: u8,
    /// Number of pixels that were replaced.
    pub moderated: usize,
    /// Set when the input is constant; the image is returned unchanged.
    pub degenerate: bool,
}

/// Smallest intensity `t` such that at least `floor(quantile * N)` pixels are `<= t`.
pub fn reflection_threshold(img: &GrayImage, quantile: f64) -> u8 {
    let hist = histogram256(img);
    let n = (img.width() * img.height()) as f64;
    let need = ((quantile * n).floor() as u64).max(1);
    let mut cum = 0u64;
    for (t, &c) in hist.iter().enumerate() {
        cum += c;
        if cum >= need {
            return t as u8;
        }
    }
    255
}

const REFLECTION_WINDOW_RADIUS: isize = 3;

/// Replaces every pixel above the quantile threshold by the median of the
/// non-exceeding pixels in its 7×7 neighborhood, falling back to the global
/// median of non-exceeding pixels.
pub fn remove_reflections(img: &GrayImage, quantile: f64) -> Result<Reflections> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(invalid("reflection quantile must be in (0, 1]"));
    }
    let data = img.data();
    let (lo, hi) = data
        .iter()
        .fold((255u8, 0u8), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(Reflections {
            image: img.clone(),
            threshold: hi,
            moderated: 0,
            degenerate: true,
        });
    }
    let t = reflection_threshold(img, quantile);
    let mut below: Vec<u8> = data.iter().copied().filter(|&v| v <= t).collect();
    let global_median = upper_median(&mut below);

    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = img.clone();
    let mut moderated = 0;
    let mut window = Vec::with_capacity(49);
    for y in 0..h {
        for x in 0..w {
            if img.get(x as usize, y as usize) <= t {
                continue;
            }
            window.clear();
            for yy in (y - REFLECTION_WINDOW_RADIUS).max(0)..=(y + REFLECTION_WINDOW_RADIUS).min(h - 1) {
                for xx in (x - REFLECTION_WINDOW_RADIUS).max(0)..=(x + REFLECTION_WINDOW_RADIUS).min(w - 1) {
                    let v = img.get(xx as usize, yy as usize);
                    if v <= t {
                        window.push(v);
                    }
                }
            }
            let v = if window.is_empty() {
                global_median
            } else {
                upper_median(&mut window)
            };
            out.set(x as usize, y as usize, v);
            moderated += 1;
        }
    }
    Ok(Reflections {
        image: out,
        threshold: t,
        moderated,
        degenerate: false,
    })
}

fn upper_median(v: &mut [u8]) -> u8 {
    let mid = v.len() / 2;
    *v.select_nth_unstable(mid).1
}

/// retinex → 8-bit quantization → median filter → reflection removal.
pub fn preprocess(img: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let enhanced = enhance_ssr(img, cfg.ssr_sigma)?.to_gray();
    let denoised = median_filter(&enhanced, cfg.median_radius)?;
    let refl = remove_reflections(&denoised, cfg.reflection_quantile)?;
    if refl.degenerate {
        log::debug!("reflection removal skipped on constant image");
    }
    Ok(refl.image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_ssr(img: &GrayImage, sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as isize;
        let mut k = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                k.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
            }
        }
        let s: f64 = k.iter().sum();
        let (w, h) = (img.width() as isize, img.height() as isize);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut i = 0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        acc += k[i] / s * img.get_clamped(x + dx, y + dy) as f64;
                        i += 1;
                    }
                }
                let v = img.get(x as usize, y as usize) as f64;
                out.push((v + 1.0).ln() - (acc + 1.0).ln());
            }
        }
        out
    }

    #[test]
    fn ssr_constant_is_zero() {
        let img = GrayImage::filled(20, 10, 90);
        let raw = ssr_raw(&img, 5.0).unwrap();
        assert!(raw.data().iter().all(|v| v.abs() < 1e-12));
        let out = enhance_ssr(&img, 5.0).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(enhance_ssr(&img, 0.0).is_err());
    }

    #[test]
    fn ssr_matches_direct_convolution() {
        let img = GrayImage::from_fn(32, 32, |x, y| (x * 5 + y * 3) as u8);
        let raw = ssr_raw(&img, 4.0).unwrap();
        let oracle = direct_ssr(&img, 4.0);
        for (a, b) in raw.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let out = enhance_ssr(&img, 4.0).unwrap();
        let (lo, hi) = crate::imaging::min_max(out.data());
        assert_eq!(lo, 0.0);
        assert!((hi - 255.0).abs() < 1e-9);
    }

    #[test]
    fn reflections_nothing_to_moderate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(10, 10, |_, _| rng.gen_range(0..200));
        let r = remove_reflections(&img, 1.0).unwrap();
        assert_eq!(r.image, img);
        assert_eq!(r.moderated, 0);
    }

    #[test]
    fn reflections_single_spot_replaced_by_neighborhood_median() {
        let mut img = GrayImage::filled(9, 9, 100);
        img.set(4, 4, 255);
        let r = remove_reflections(&img, 0.99).unwrap();
        assert_eq!(r.threshold, 100);
        assert_eq!(r.image.get(4, 4), 100);
        assert_eq!(r.moderated, 1);
    }

    #[test]
    fn reflections_constant_image_unchanged() {
        for v in [0u8, 77, 255] {
            let img = GrayImage::filled(6, 6, v);
            let r = remove_reflections(&img, 0.995).unwrap();
            assert_eq!(r.image, img);
            assert!(r.degenerate);
        }
    }

    #[test]
    fn reflections_never_exceed_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let img = GrayImage::from_fn(24, 17, |_, _| rng.gen());
            let r = remove_reflections(&img, 0.9).unwrap();
            assert!(r.image.data().iter().all(|&v| v <= r.threshold));
        }
    }

    #[test]
    fn preprocess_constant_and_deterministic() {
        let c = GrayImage::filled(40, 30, 120);
        let out = preprocess(&c, &PreprocessConfig::default()).unwrap();
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| v == first));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_fn(50, 40, |_, _| rng.gen());
        let a = preprocess(&img, &PreprocessConfig::default()).unwrap();
        let b = preprocess(&img, &PreprocessConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let mut c = PreprocessConfig::default();
        assert!(c.validate().is_ok());
        c.reflection_quantile = 0.0;
        assert!(c.validate().is_err());
        c = PreprocessConfig { median_radius: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
