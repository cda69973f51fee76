//! Edge detection: a multi-scale oriented filter bank (the default used for
//! segmentation) plus Canny and Sobel baselines.
//!
//! The directional detector convolves the image with a bank of first-derivative
//! kernels of anisotropic Gaussians. Each kernel is elongated 2:1 along the edge
//! tangent, scales double from σ = 1, and directions sample the half circle
//! uniformly. Per pixel the strongest absolute response wins; its direction is
//! the edge normal. Thin edges come from non-maximum suppression across the
//! normal, followed by a threshold relative to the image's strongest response.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{fft2, to_complex};
use crate::imaging::{convolve_separable, gaussian_kernel, FloatImage};

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    /// Edge-normal angle in `[0, π)`.
    pub orientation: Vec<f64>,
    pub binary: Vec<bool>,
    /// Absolute magnitude threshold applied to `binary`.
    pub threshold: f64,
}

impl EdgeMap {
    #[inline]
    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.binary[y * self.width + x]
    }

    pub fn edge_count(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }

    /// Coordinates of all edge pixels in row-major order.
    pub fn edge_points(&self) -> Vec<(usize, usize)> {
        self.binary
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    /// Edge map rendered as a black/white image (for debug output).
    pub fn binary_image(&self) -> crate::imaging::GrayImage {
        crate::imaging::GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.is_edge(x, y) {
                255
            } else {
                0
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMethod {
    Directional,
    Canny,
    Sobel,
}

impl std::str::FromStr for EdgeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directional" => Ok(Self::Directional),
            "canny" => Ok(Self::Canny),
            "sobel" => Ok(Self::Sobel),
            other => Err(Error::Config(format!("unknown edge method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub method: EdgeMethod,
    pub scales: usize,
    pub directions: usize,
    /// Fraction of the maximum response. For Canny this is the high threshold
    /// and the low threshold is 0.4 of it.
    pub threshold: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            method: EdgeMethod::Directional,
            scales: 3,
            directions: 8,
            threshold: 0.15,
        }
    }
}

impl EdgeConfig {
    pub fn detect(&self, img: &FloatImage) -> Result<EdgeMap> {
        match self.method {
            EdgeMethod::Directional => {
                detect_edges_directional(img, self.scales, self.directions, self.threshold)
            }
            EdgeMethod::Canny => detect_edges_canny(img, 0.4 * self.threshold, self.threshold),
            EdgeMethod::Sobel => detect_edges_sobel(img, self.threshold),
        }
    }
}

/// Tangential elongation of the oriented kernels.
const ELONGATION: f64 = 2.0;

/// One oriented derivative-of-Gaussian kernel, `(2·radius+1)²` taps.
#[derive(Debug, Clone)]
pub struct OrientedKernel {
    pub radius: usize,
    pub taps: Vec<f64>,
    pub direction: usize,
    pub scale: usize,
}

/// Normal-direction derivative of an anisotropic Gaussian at angle `theta`.
/// Normalized so that an ideal unit step aligned with the kernel gives a peak
/// response of 1. Odd symmetric, hence zero mean.
pub fn oriented_kernel(sigma: f64, theta: f64) -> (usize, Vec<f64>) {
    let sigma_t = ELONGATION * sigma;
    let radius = (3.0 * sigma_t).ceil() as isize;
    let (s, c) = theta.sin_cos();
    let mut g = Vec::with_capacity(((2 * radius + 1) * (2 * radius + 1)) as usize);
    let mut u_vals = Vec::with_capacity(g.capacity());
    for y in -radius..=radius {
        for x in -radius..=radius {
            let u = x as f64 * c + y as f64 * s;
            let v = -(x as f64) * s + y as f64 * c;
            g.push((-u * u / (2.0 * sigma * sigma) - v * v / (2.0 * sigma_t * sigma_t)).exp());
            u_vals.push(u);
        }
    }
    let sum: f64 = g.iter().sum();
    let norm = (2.0 * PI).sqrt() * sigma / (sigma * sigma * sum);
    let taps = g
        .iter()
        .zip(&u_vals)
        .map(|(gv, u)| u * gv * norm)
        .collect();
    (radius as usize, taps)
}

pub fn filter_bank(scales: usize, directions: usize) -> Vec<OrientedKernel> {
    let mut bank = Vec::with_capacity(scales * directions);
    for d in 0..directions {
        let theta = PI * d as f64 / directions as f64;
        for s in 0..scales {
            let sigma = (1u32 << s) as f64;
            let (radius, taps) = oriented_kernel(sigma, theta);
            bank.push(OrientedKernel {
                radius,
                taps,
                direction: d,
                scale: s,
            });
        }
    }
    bank
}

/// Support (side length) of the coarsest kernel of a bank with `scales` levels.
pub fn directional_support(scales: usize) -> usize {
    let sigma = (1u32 << (scales - 1)) as f64;
    2 * (3.0 * ELONGATION * sigma).ceil() as usize + 1
}

pub fn detect_edges_directional(
    img: &FloatImage,
    scales: usize,
    directions: usize,
    threshold: f64,
) -> Result<EdgeMap> {
    if scales < 1 || scales > 8 {
        return Err(invalid("edges.scales must be in 1..=8"));
    }
    if directions < 4 {
        return Err(invalid("edges.directions must be >= 4"));
    }
    check_threshold(threshold)?;
    let support = directional_support(scales);
    check_size(img, support)?;

    let bank = filter_bank(scales, directions);
    let pad = bank.iter().map(|k| k.radius).max().unwrap_or(0);
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);

    // Kernels are zero-mean, so removing the image mean changes nothing but
    // makes a constant image transform to exactly zero.
    let mean = img.data().iter().sum::<f64>() / (w * h) as f64;
    let mut padded = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        for x in 0..pw {
            let v = img.get_clamped(x as isize - pad as isize, y as isize - pad as isize);
            padded.push(v - mean);
        }
    }
    let mut spectrum = to_complex(&padded);
    fft2(&mut spectrum, pw, ph, false);

    let mut magnitude = vec![0.0; w * h];
    let mut dir_index = vec![0usize; w * h];
    let mut buf = vec![Complex64::new(0.0, 0.0); pw * ph];
    for k in &bank {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let r = k.radius as isize;
        let side = 2 * k.radius + 1;
        for ky in -r..=r {
            for kx in -r..=r {
                let t = k.taps[(ky + r) as usize * side + (kx + r) as usize];
                let xx = kx.rem_euclid(pw as isize) as usize;
                let yy = ky.rem_euclid(ph as isize) as usize;
                buf[yy * pw + xx] = Complex64::new(t, 0.0);
            }
        }
        fft2(&mut buf, pw, ph, false);
        for (b, s) in buf.iter_mut().zip(&spectrum) {
            *b *= s;
        }
        fft2(&mut buf, pw, ph, true);
        for y in 0..h {
            for x in 0..w {
                let resp = buf[(y + pad) * pw + x + pad].re.abs();
                let i = y * w + x;
                if resp > magnitude[i] {
                    magnitude[i] = resp;
                    dir_index[i] = k.direction;
                }
            }
        }
    }
    let orientation: Vec<f64> = dir_index
        .iter()
        .map(|&d| PI * d as f64 / directions as f64)
        .collect();
    let thin = non_maximum_suppression(&magnitude, &orientation, w, h);
    let max = magnitude.iter().cloned().fold(0.0, f64::max);
    let abs_threshold = threshold * max;
    let binary = thin
        .iter()
        .zip(&magnitude)
        .map(|(&t, &m)| t && max > 0.0 && m >= abs_threshold)
        .collect();
    Ok(EdgeMap {
        width: w,
        height: h,
        magnitude,
        orientation,
        binary,
        threshold: abs_threshold,
    })
}

/// Pixel step across the edge for a normal angle, quantized to 0°, 45°, 90°, 135°.
fn normal_step(theta: f64) -> (isize, isize) {
    let q = ((theta / (PI / 4.0)).round() as isize).rem_euclid(4);
    match q {
        0 => (1, 0),
        1 => (1, 1),
        2 => (0, 1),
        _ => (-1, 1),
    }
}

/// Keeps pixels that are maximal across the edge normal. Plateaus of equal
/// magnitude resolve to the pixel on the positive-normal side.
pub fn non_maximum_suppression(magnitude: &[f64], orientation: &[f64], w: usize, h: usize) -> Vec<bool> {
    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        magnitude[yc * w + xc]
    };
    let mut keep = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = magnitude[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = normal_step(orientation[i]);
            let (prev, next) = (at(x - dx, y - dy), at(x + dx, y + dy));
            // a neighbor clamped onto the pixel itself does not count
            let prev_ok = m >= prev;
            let next_ok = m > next || clamps_to_self(x + dx, y + dy, x, y, w, h);
            keep[i] = prev_ok && next_ok;
        }
    }
    keep
}

fn clamps_to_self(nx: isize, ny: isize, x: isize, y: isize, w: usize, h: usize) -> bool {
    (nx.clamp(0, w as isize - 1), ny.clamp(0, h as isize - 1)) == (x, y)
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid("edge threshold must be in (0, 1)"));
    }
    Ok(())
}

fn check_size(img: &FloatImage, min_side: usize) -> Result<()> {
    if img.width() < min_side || img.height() < min_side {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min_side,
        });
    }
    Ok(())
}

/// Sobel gradients with edge replication: returns (gx, gy).
fn sobel(img: &FloatImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let i = y as usize * w + x as usize;
            gx[i] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[i] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (gx, gy)
}

fn gradient_polar(gx: &[f64], gy: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mag = gx.iter().zip(gy).map(|(a, b)| a.hypot(*b)).collect();
    let ori = gx
        .iter()
        .zip(gy)
        .map(|(a, b)| {
            let t = b.atan2(*a).rem_euclid(PI);
            if t >= PI {
                0.0
            } else {
                t
            }
        })
        .collect();
    (mag, ori)
}

/// Canny: Gaussian smoothing (σ = 1.4), Sobel gradients, non-maximum
/// suppression and double-threshold hysteresis (8-connected).
pub fn detect_edges_canny(img: &FloatImage, low: f64, high: f64) -> Result<EdgeMap> {
    if !(low > 0.0 && low < high && high < 1.0) {
        return Err(invalid("canny thresholds must satisfy 0 < low < high < 1"));
    }
    let taps = gaussian_kernel(1.4);
    check_size(img, taps.len())?;
    let smooth = convolve_separable(img, &taps, &taps);
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = sobel(&smooth);
    let (mag, ori) = gradient_polar(&gx, &gy);
    let thin = non_maximum_suppression(&mag, &ori, w, h);
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let (lo, hi) = (low * max, high * max);
    let mut binary = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    if max > 1e-9 {
        for i in 0..w * h {
            if thin[i] && mag[i] >= hi {
                binary[i] = true;
                stack.push(i);
            }
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !binary[j] && thin[j] && mag[j] >= lo {
                    binary[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    Ok(EdgeMap {
        width: w,
        height: h,
        magnitude: mag,
        orientation: ori,
        binary,
        threshold: lo,
    })
}

/// 3×3 Sobel magnitude thresholded at `threshold × max`.
pub fn detect_edges_sobel(img: &FloatImage, threshold: f64) -> Result<EdgeMap> {
    check_threshold(threshold)?;
    check_size(img, 3)?;
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = sobel(img);
    let (mag, ori) = gradient_polar(&gx, &gy);
    let max = mag.iter().cloned().fold(0.0, f64::max);
    let t = threshold * max;
    let binary = mag.iter().map(|&m| max > 0.0 && m >= t).collect();
    Ok(EdgeMap {
        width: w,
        height: h,
        magnitude: mag,
        orientation: ori,
        binary,
        threshold: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(w: usize, h: usize) -> FloatImage {
        FloatImage::from_fn(w, h, |x, _| if x < w / 2 { 0.0 } else { 255.0 })
    }

    fn disk(size: usize, r: f64, inside: f64, outside: f64) -> FloatImage {
        let c = size as f64 / 2.0;
        // 4×4 supersampled for an accurate boundary
        FloatImage::from_fn(size, size, |x, y| {
            let mut acc = 0.0;
            for sy in 0..4 {
                for sx in 0..4 {
                    let px = x as f64 + (sx as f64 + 0.5) / 4.0 - 0.5;
                    let py = y as f64 + (sy as f64 + 0.5) / 4.0 - 0.5;
                    acc += if (px - c).hypot(py - c) <= r { inside } else { outside };
                }
            }
            acc / 16.0
        })
    }

    fn circle_precision(map: &EdgeMap, c: f64, r: f64, tol: f64) -> f64 {
        let pts = map.edge_points();
        let near = pts
            .iter()
            .filter(|(x, y)| ((*x as f64 - c).hypot(*y as f64 - c) - r).abs() <= tol)
            .count();
        near as f64 / pts.len().max(1) as f64
    }

    #[test]
    fn kernels_are_zero_mean_and_step_normalized() {
        let (r, k) = oriented_kernel(2.0, 0.0);
        assert!(k.iter().sum::<f64>().abs() < 1e-12);
        // step response at the edge: sum of taps with u > 0 minus nothing
        let side = 2 * r + 1;
        let mut resp = 0.0;
        for y in 0..side {
            for x in 0..side {
                if x > r {
                    resp += k[y * side + x];
                } else if x == r {
                    resp += 0.5 * k[y * side + x];
                }
            }
        }
        assert!((resp - 1.0).abs() < 0.05, "step response {resp}");
    }

    #[test]
    fn directional_step_edge() {
        let img = step(64, 64);
        let map = detect_edges_directional(&img, 3, 8, 0.15).unwrap();
        for y in 0..64 {
            let xs: Vec<usize> = (0..64).filter(|&x| map.is_edge(x, y)).collect();
            assert_eq!(xs.len(), 1, "row {y}: {xs:?}");
            assert!(xs[0] == 31 || xs[0] == 32);
            let o = map.orientation[y * 64 + xs[0]];
            let bin = PI / 8.0;
            assert!(o <= bin + 1e-9 || o >= PI - bin - 1e-9, "orientation {o}");
        }
    }

    #[test]
    fn directional_constant_image() {
        let img = FloatImage::from_fn(60, 60, |_, _| 93.0);
        let map = detect_edges_directional(&img, 3, 8, 0.15).unwrap();
        assert!(map.magnitude.iter().all(|&m| m == 0.0));
        assert_eq!(map.edge_count(), 0);
    }

    #[test]
    fn directional_disk_boundary() {
        let img = disk(96, 20.0, 40.0, 200.0);
        let map = detect_edges_directional(&img, 3, 8, 0.15).unwrap();
        assert!(map.edge_count() > 100);
        let p = circle_precision(&map, 48.0, 20.0, 1.5);
        assert!(p >= 0.95, "precision {p}");
    }

    #[test]
    fn directional_offset_invariance() {
        let img = disk(64, 12.0, 30.0, 180.0);
        let shifted = img.map(|v| v + 37.0);
        let a = detect_edges_directional(&img, 2, 8, 0.2).unwrap();
        let b = detect_edges_directional(&shifted, 2, 8, 0.2).unwrap();
        for (x, y) in a.magnitude.iter().zip(&b.magnitude) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn directional_rotation_covariance_on_bars() {
        // a bar at angle phi has its edge normal at phi + 90°
        let directions = 8;
        let size = 81;
        let c = 40.0;
        for d in 0..directions {
            let normal = PI * d as f64 / directions as f64;
            let (s, co) = normal.sin_cos();
            let img = FloatImage::from_fn(size, size, |x, y| {
                let u = (x as f64 - c) * co + (y as f64 - c) * s;
                if u.abs() <= 4.0 {
                    220.0
                } else {
                    30.0
                }
            });
            let map = detect_edges_directional(&img, 2, directions, 0.3).unwrap();
            // sample the response on the bar edge near the center
            let (px, py) = ((c + 4.5 * co).round() as usize, (c + 4.5 * s).round() as usize);
            let mut best = (0.0, 0usize);
            for yy in py - 1..=py + 1 {
                for xx in px - 1..=px + 1 {
                    let i = yy * size + xx;
                    if map.magnitude[i] > best.0 {
                        best = (map.magnitude[i], (map.orientation[i] / (PI / directions as f64)).round() as usize % directions);
                    }
                }
            }
            assert_eq!(best.1, d, "direction {d}");
        }
    }

    #[test]
    fn directional_errors() {
        let small = FloatImage::zeros(20, 20);
        assert!(matches!(
            detect_edges_directional(&small, 3, 8, 0.15),
            Err(Error::ImageTooSmall { .. })
        ));
        let img = FloatImage::zeros(64, 64);
        assert!(detect_edges_directional(&img, 3, 3, 0.15).is_err());
        assert!(detect_edges_directional(&img, 3, 8, 1.0).is_err());
    }

    #[test]
    fn canny_cases() {
        let c = FloatImage::from_fn(32, 32, |_, _| 50.0);
        assert_eq!(detect_edges_canny(&c, 0.1, 0.3).unwrap().edge_count(), 0);
        let map = detect_edges_canny(&step(40, 40), 0.1, 0.3).unwrap();
        for y in 0..40 {
            let n = (0..40).filter(|&x| map.is_edge(x, y)).count();
            assert_eq!(n, 1);
        }
        let d = disk(96, 20.0, 40.0, 200.0);
        let m = detect_edges_canny(&d, 0.1, 0.3).unwrap();
        assert!(circle_precision(&m, 48.0, 20.0, 1.5) >= 0.95);
        assert!(detect_edges_canny(&d, 0.3, 0.1).is_err());
    }

    #[test]
    fn sobel_cases() {
        let c = FloatImage::from_fn(16, 16, |_, _| 9.0);
        assert_eq!(detect_edges_sobel(&c, 0.5).unwrap().edge_count(), 0);
        let map = detect_edges_sobel(&step(30, 30), 0.5).unwrap();
        for y in 0..30 {
            let n = (0..30).filter(|&x| map.is_edge(x, y)).count();
            assert!(n >= 1 && n <= 2);
        }
    }
}
