//! Spectral and wavelet views of a normalized iris rectangle.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{fft2, to_complex};
use crate::imaging::FloatImage;
use crate::normalization::NormalizedIris;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FftMode {
    #[default]
    Magnitude,
    /// `ln(1 + |F|)`
    LogMagnitude,
    Power,
}

impl FromStr for FftMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(FftMode::Magnitude),
            "log_magnitude" => Ok(FftMode::LogMagnitude),
            "power" => Ok(FftMode::Power),
            _ => Err(invalid(format!("unknown fft mode {s:?}"))),
        }
    }
}

/// DC-centered 2-D spectrum of the mean-filled rectangle (`width × height`).
pub fn fft_magnitude(rect: &NormalizedIris, mode: FftMode) -> Result<FloatImage> {
    let (w, h) = (rect.width, rect.height);
    if w < 2 || h < 2 {
        return Err(invalid(format!("rectangle {w}×{h} is smaller than 2×2")));
    }
    let mut buf = to_complex(&rect.mean_filled());
    fft2(&mut buf, w, h, false);
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let m = buf[v * w + u].norm();
            let (su, sv) = ((u + w / 2) % w, (v + h / 2) % h);
            out[sv * w + su] = match mode {
                FftMode::Magnitude => m,
                FftMode::LogMagnitude => m.ln_1p(),
                FftMode::Power => m * m,
            };
        }
    }
    FloatImage::new(w, h, out)
}

pub const SUBBAND_NAMES: [&str; 8] = ["LL1", "LH1", "HL1", "HH1", "LL2", "LH2", "HL2", "HH2"];

/// One level of orthonormal Haar analysis.
///
/// For each 2×2 block `[a b; c d]`: `LL = (a+b+c+d)/2`, `LH = (a+b−c−d)/2`
/// (horizontal lowpass, vertical highpass), `HL = (a−b+c−d)/2`,
/// `HH = (a−b−c+d)/2`. Dimensions must be even.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarLevel {
    pub ll: FloatImage,
    pub lh: FloatImage,
    pub hl: FloatImage,
    pub hh: FloatImage,
}

pub fn haar_analysis(img: &FloatImage) -> Result<HaarLevel> {
    let (w, h) = (img.width(), img.height());
    if w % 2 != 0 || h % 2 != 0 || w == 0 || h == 0 {
        return Err(invalid(format!("Haar analysis needs even dimensions, got {w}×{h}")));
    }
    let (hw, hh) = (w / 2, h / 2);
    let mut bands = [vec![0.0; hw * hh], vec![0.0; hw * hh], vec![0.0; hw * hh], vec![0.0; hw * hh]];
    for y in 0..hh {
        for x in 0..hw {
            let a = img.get(2 * x, 2 * y);
            let b = img.get(2 * x + 1, 2 * y);
            let c = img.get(2 * x, 2 * y + 1);
            let d = img.get(2 * x + 1, 2 * y + 1);
            let i = y * hw + x;
            bands[0][i] = 0.5 * (a + b + c + d);
            bands[1][i] = 0.5 * (a + b - c - d);
            bands[2][i] = 0.5 * (a - b + c - d);
            bands[3][i] = 0.5 * (a - b - c + d);
        }
    }
    let [ll, lh, hl, hh_] = bands;
    Ok(HaarLevel {
        ll: FloatImage::new(hw, hh, ll)?,
        lh: FloatImage::new(hw, hh, lh)?,
        hl: FloatImage::new(hw, hh, hl)?,
        hh: FloatImage::new(hw, hh, hh_)?,
    })
}

/// Exact inverse of [`haar_analysis`].
pub fn haar_synthesis(level: &HaarLevel) -> FloatImage {
    let (hw, hh) = (level.ll.width(), level.ll.height());
    let mut out = vec![0.0; 4 * hw * hh];
    let w = 2 * hw;
    for y in 0..hh {
        for x in 0..hw {
            let (s, v, u, t) = (
                level.ll.get(x, y),
                level.lh.get(x, y),
                level.hl.get(x, y),
                level.hh.get(x, y),
            );
            out[2 * y * w + 2 * x] = 0.5 * (s + v + u + t);
            out[2 * y * w + 2 * x + 1] = 0.5 * (s + v - u - t);
            out[(2 * y + 1) * w + 2 * x] = 0.5 * (s - v + u - t);
            out[(2 * y + 1) * w + 2 * x + 1] = 0.5 * (s - v - u + t);
        }
    }
    FloatImage::new(w, 2 * hh, out).expect("synthesis of finite bands is finite")
}

/// Mean-filled rectangle, edge-replicated up to multiples of 4 in both axes.
pub fn padded_plane(rect: &NormalizedIris) -> FloatImage {
    let filled = rect.mean_filled();
    let (w, h) = (rect.width, rect.height);
    let (pw, ph) = (w.div_ceil(4) * 4, h.div_ceil(4) * 4);
    FloatImage::from_fn(pw, ph, |x, y| filled[y.min(h - 1) * w + x.min(w - 1)])
}

/// Per-band coefficient validity for [`dwt2_haar`]: a coefficient counts only
/// if its whole support block (2×2 at level 1, 4×4 at level 2) is valid, so
/// mean-filled areas do not leak into the sub-band statistics.
pub fn subband_validity(rect: &NormalizedIris) -> [Vec<bool>; 8] {
    let (w, h) = (rect.width, rect.height);
    let (pw, ph) = (w.div_ceil(4) * 4, h.div_ceil(4) * 4);
    let valid = |x: usize, y: usize| rect.valid[y.min(h - 1) * w + x.min(w - 1)];
    let blocks = |size: usize| -> Vec<bool> {
        let (bw, bh) = (pw / size, ph / size);
        (0..bw * bh)
            .map(|i| {
                let (bx, by) = (i % bw, i / bw);
                (0..size).all(|dy| (0..size).all(|dx| valid(bx * size + dx, by * size + dy)))
            })
            .collect()
    };
    let (l1, l2) = (blocks(2), blocks(4));
    [l1.clone(), l1.clone(), l1.clone(), l1, l2.clone(), l2.clone(), l2.clone(), l2]
}

/// Two-level Haar decomposition; bands in the order of [`SUBBAND_NAMES`].
pub fn dwt2_haar(rect: &NormalizedIris) -> Result<[FloatImage; 8]> {
    let l1 = haar_analysis(&padded_plane(rect))?;
    let l2 = haar_analysis(&l1.ll)?;
    Ok([l1.ll, l1.lh, l1.hl, l1.hh, l2.ll, l2.lh, l2.hl, l2.hh])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rect_fn(h: usize, w: usize, f: impl FnMut(usize, usize) -> f64) -> NormalizedIris {
        NormalizedIris::from_fn(h, w, f)
    }

    fn pseudo(i: usize, j: usize) -> f64 {
        ((i * 37 + j * 101) % 97) as f64 + 0.25 * ((i * j) % 7) as f64
    }

    #[test]
    fn subband_validity_follows_support_blocks() {
        let mut r = rect_fn(8, 8, pseudo);
        r.valid[3 * 8 + 5] = false; // pixel (x=5, y=3)
        let v = subband_validity(&r);
        assert_eq!(v[0].len(), 16);
        assert_eq!(v[4].len(), 4);
        let bad1: Vec<usize> = (0..16).filter(|&i| !v[0][i]).collect();
        assert_eq!(bad1, vec![4 + 2]); // level-1 block (2, 1)
        let bad2: Vec<usize> = (0..4).filter(|&i| !v[4][i]).collect();
        assert_eq!(bad2, vec![1]); // level-2 block (1, 0)
        assert!(v[1] == v[0] && v[7] == v[4]);
    }

    #[test]
    fn constant_spectrum_is_dc_only() {
        let r = rect_fn(6, 10, |_, _| 3.0);
        let f = fft_magnitude(&r, FftMode::Magnitude).unwrap();
        for y in 0..6 {
            for x in 0..10 {
                let expect = if (x, y) == (5, 3) { 180.0 } else { 0.0 };
                assert!((f.get(x, y) - expect).abs() < 1e-9, "({x},{y})");
            }
        }
    }

    #[test]
    fn parseval() {
        let r = rect_fn(8, 12, pseudo);
        let f = fft_magnitude(&r, FftMode::Power).unwrap();
        let spec: f64 = f.data().iter().sum::<f64>() / 96.0;
        let space: f64 = r.data.iter().map(|x| x * x).sum();
        assert!(((spec - space) / space).abs() < 1e-6);
    }

    #[test]
    fn cosine_has_two_peaks_matching_direct_dft() {
        let (h, w, k) = (4usize, 16usize, 3usize);
        let r = rect_fn(h, w, |_, j| (2.0 * PI * k as f64 * j as f64 / w as f64).cos());
        let f = fft_magnitude(&r, FftMode::Magnitude).unwrap();
        // direct DFT oracle
        for v in 0..h {
            for u in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let a = -2.0 * PI * (u as f64 * x as f64 / w as f64 + v as f64 * y as f64 / h as f64);
                        re += r.get(y, x) * a.cos();
                        im += r.get(y, x) * a.sin();
                    }
                }
                let got = f.get((u + w / 2) % w, (v + h / 2) % h);
                assert!((got - re.hypot(im)).abs() < 1e-9);
            }
        }
        let peak = f.data().iter().cloned().fold(0.0, f64::max);
        let peaks: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| f.get(x, y) > 1e-6 * peak)
            .collect();
        assert_eq!(peaks, vec![(w / 2 - k, h / 2), (w / 2 + k, h / 2)]);
    }

    #[test]
    fn mean_fill_before_transform() {
        let mut r = rect_fn(2, 2, |_, _| 4.0);
        r.data[0] = 1000.0;
        r.valid[0] = false;
        let f = fft_magnitude(&r, FftMode::Magnitude).unwrap();
        assert!((f.get(1, 1) - 16.0).abs() < 1e-12);
        assert!(fft_magnitude(&rect_fn(1, 5, |_, _| 0.0), FftMode::Magnitude).is_err());
    }

    #[test]
    fn haar_constant_pattern() {
        let c = 7.25;
        let bands = dwt2_haar(&rect_fn(8, 12, |_, _| c)).unwrap();
        assert!(bands[0].data().iter().all(|&x| x == 2.0 * c));
        assert!(bands[4].data().iter().all(|&x| x == 4.0 * c));
        for k in [1, 2, 3, 5, 6, 7] {
            assert!(bands[k].data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn haar_reconstruction_and_energy() {
        let img = FloatImage::from_fn(12, 8, |x, y| pseudo(y, x) - 40.0);
        let lvl = haar_analysis(&img).unwrap();
        let back = haar_synthesis(&lvl);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        let e: f64 = img.data().iter().map(|x| x * x).sum();
        let eb: f64 = [&lvl.ll, &lvl.lh, &lvl.hl, &lvl.hh]
            .iter()
            .flat_map(|b| b.data().iter())
            .map(|x| x * x)
            .sum();
        assert!((e - eb).abs() < 1e-9 * e);
    }

    #[test]
    fn haar_matches_matrix_form() {
        // 1-D orthonormal Haar matrix H (8×8); 2-D analysis is H·X·Hᵀ
        let n = 8;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut hm = vec![vec![0.0; n]; n];
        for k in 0..n / 2 {
            hm[k][2 * k] = s;
            hm[k][2 * k + 1] = s;
            hm[n / 2 + k][2 * k] = s;
            hm[n / 2 + k][2 * k + 1] = -s;
        }
        let x: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| pseudo(i, j)).collect()).collect();
        let mut y = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        y[i][j] += hm[i][a] * x[a][b] * hm[j][b];
                    }
                }
            }
        }
        let img = FloatImage::from_fn(n, n, |c, r| x[r][c]);
        let lvl = haar_analysis(&img).unwrap();
        let h2 = n / 2;
        for r in 0..h2 {
            for c in 0..h2 {
                assert!((lvl.ll.get(c, r) - y[r][c]).abs() < 1e-9);
                assert!((lvl.hl.get(c, r) - y[r][h2 + c]).abs() < 1e-9);
                assert!((lvl.lh.get(c, r) - y[h2 + r][c]).abs() < 1e-9);
                assert!((lvl.hh.get(c, r) - y[h2 + r][h2 + c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn padding_to_multiple_of_four() {
        let r = rect_fn(6, 9, pseudo);
        let p = padded_plane(&r);
        assert_eq!((p.width(), p.height()), (12, 8));
        assert_eq!(p.get(11, 7), r.get(5, 8));
        let bands = dwt2_haar(&r).unwrap();
        assert_eq!((bands[7].width(), bands[7].height()), (3, 2));
        assert!(haar_analysis(&FloatImage::zeros(3, 2)).is_err());
    }
}
