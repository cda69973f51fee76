//! Raster containers, file IO and the small spatial filters shared by every stage.
//!
//! All windowed filters replicate edge pixels at the borders.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{invalid, Error, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be at least 1x1"));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn to_float(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Real-valued raster, row-major. Values are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be at least 1x1"));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite pixel at ({x}, {y})");
                data.push(v);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Applies `f` to every value. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> FloatImage {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced non-finite value");
        FloatImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Rounds to nearest and clamps into [0, 255].
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }

    /// Linear min-max rescale to [0, 255]. A constant image maps to all zeros.
    pub fn rescale_to_255(&self) -> FloatImage {
        let (lo, hi) = min_max(&self.data);
        let span = hi - lo;
        let data = if span > 0.0 {
            self.data.iter().map(|&v| (v - lo) / span * 255.0).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        FloatImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Loads a binary PGM or PNG. Color inputs are converted with fixed
/// 0.299/0.587/0.114 luma weights, rounded to nearest.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(Error::Io)?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "unrecognized file {}",
                path.display()
            )))
        }
    }
    let decoded = reader
        .decode()
        .map_err(|e| Error::CorruptData(format!("{}: {e}", path.display())))?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "pixel layout {:?} (only 8-bit gray or RGB)",
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

/// ITU-R 601 luma, rounded to nearest.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Writes a binary (P5) PGM.
pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(img.data.len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    out.extend_from_slice(&img.data);
    fs::write(path, out)?;
    Ok(())
}

/// Median over the (2r+1)² neighborhood of every pixel.
pub fn median_filter(img: &GrayImage, radius: usize) -> Result<GrayImage> {
    if radius == 0 {
        return Err(invalid("median radius must be >= 1"));
    }
    let r = radius as isize;
    let mut window = Vec::with_capacity((2 * radius + 1).pow(2));
    let mut out = Vec::with_capacity(img.data.len());
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    window.push(img.get_clamped(x + dx, y + dy));
                }
            }
            let mid = window.len() / 2;
            let (_, m, _) = window.select_nth_unstable(mid);
            out.push(*m);
        }
    }
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        data: out,
    })
}

pub fn histogram256(img: &GrayImage) -> [u64; 256] {
    let mut bins = [0u64; 256];
    for &v in &img.data {
        bins[v as usize] += 1;
    }
    bins
}

/// Histogram of a float image quantized by rounding and clamping into 0..=255.
pub fn histogram256_float(img: &FloatImage) -> [u64; 256] {
    let mut bins = [0u64; 256];
    for &v in &img.data {
        bins[v.round().clamp(0.0, 255.0) as usize] += 1;
    }
    bins
}

/// Normalized 1-D Gaussian taps truncated at 3σ.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &FloatImage, sigma: f64) -> FloatImage {
    let taps = gaussian_kernel(sigma);
    convolve_separable(img, &taps, &taps)
}

/// Convolves rows with `row_taps` then columns with `col_taps` (both odd length, centered).
pub fn convolve_separable(img: &FloatImage, row_taps: &[f64], col_taps: &[f64]) -> FloatImage {
    let (w, h) = (img.width, img.height);
    let rr = (row_taps.len() / 2) as isize;
    let cr = (col_taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in row_taps.iter().enumerate() {
                let xi = (x as isize + k as isize - rr).clamp(0, w as isize - 1) as usize;
                acc += t * row[xi];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &t) in col_taps.iter().enumerate() {
            let yi = (y as isize + k as isize - cr).clamp(0, h as isize - 1) as usize;
            let src = &tmp[yi * w..(yi + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    FloatImage {
        width: w,
        height: h,
        data: out,
    }
}

/// Bilinear interpolation at a real-valued position. Returns `None` outside
/// the pixel-center hull `[0, w-1] × [0, h-1]`.
pub fn bilinear(img: &GrayImage, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (img.width as f64, img.height as f64);
    if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx: usize, yy: usize| img.get(xx, yy) as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Rotates the image content by `degrees` about `(cx, cy)` (positive angles turn
/// +x toward +y in image coordinates). Uncovered pixels take the nearest edge value.
pub fn rotate_about(img: &GrayImage, cx: f64, cy: f64, degrees: f64) -> GrayImage {
    let (s, c) = degrees.to_radians().sin_cos();
    let (wm, hm) = ((img.width - 1) as f64, (img.height - 1) as f64);
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        // inverse rotation maps the output pixel back to its source
        let sx = (cx + c * dx + s * dy).clamp(0.0, wm);
        let sy = (cy - s * dx + c * dy).clamp(0.0, hm);
        bilinear(img, sx, sy)
            .unwrap_or(0.0)
            .round()
            .clamp(0.0, 255.0) as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn luma_examples() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(100, 200, 50), 153);
        assert_eq!(luma(0, 0, 0), 0);
    }

    #[test]
    fn pgm_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = GrayImage::new(2, 2, vec![0, 128, 255, 64]).unwrap();
        save_pgm(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn png_rgb_converted_with_fixed_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let buf = image::RgbImage::from_raw(2, 1, vec![255, 255, 255, 100, 200, 50]).unwrap();
        buf.save(&path).unwrap();
        let g = load_image(&path).unwrap();
        assert_eq!(g.data(), &[255, 153]);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(&dir.path().join("missing.pgm")),
            Err(Error::FileNotFound(_))
        ));
        let junk = dir.path().join("junk.bin");
        fs::write(&junk, b"hello world, not an image").unwrap();
        assert!(matches!(load_image(&junk), Err(Error::UnsupportedFormat(_))));
        let trunc = dir.path().join("t.pgm");
        fs::write(&trunc, b"P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(matches!(load_image(&trunc), Err(Error::CorruptData(_))));
    }

    #[test]
    fn median_constant_and_impulse() {
        let c = GrayImage::filled(6, 5, 7);
        assert_eq!(median_filter(&c, 1).unwrap(), c);
        let mut imp = GrayImage::filled(5, 5, 0);
        imp.set(2, 2, 255);
        assert!(median_filter(&imp, 1).unwrap().data().iter().all(|&v| v == 0));
        assert!(median_filter(&imp, 0).is_err());
    }

    #[test]
    fn median_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = GrayImage::from_fn(16, 16, |_, _| rng.gen());
        let out = median_filter(&img, 1).unwrap();
        for y in 0..16isize {
            for x in 0..16isize {
                let mut v = Vec::new();
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let xx = (x + dx).clamp(0, 15) as usize;
                        let yy = (y + dy).clamp(0, 15) as usize;
                        v.push(img.data()[yy * 16 + xx]);
                    }
                }
                v.sort();
                assert_eq!(out.get(x as usize, y as usize), v[4]);
            }
        }
    }

    #[test]
    fn histogram_examples() {
        let img = GrayImage::new(2, 2, vec![0, 0, 255, 255]).unwrap();
        let h = histogram256(&img);
        assert_eq!(h[0], 2);
        assert_eq!(h[255], 2);
        assert_eq!(h.iter().sum::<u64>(), 4);
        let k = histogram256(&GrayImage::filled(3, 4, 42));
        assert_eq!(k[42], 12);
    }

    #[test]
    fn float_image_rejects_nan() {
        assert!(FloatImage::new(1, 1, vec![f64::NAN]).is_err());
        assert!(FloatImage::new(2, 1, vec![0.0]).is_err());
    }

    #[test]
    fn gaussian_preserves_constants() {
        let img = FloatImage::from_fn(9, 7, |_, _| 3.5);
        let b = gaussian_blur(&img, 2.0);
        assert!(b.data().iter().all(|v| (v - 3.5).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn median_creates_no_new_values(data in proptest::collection::vec(any::<u8>(), 64), r in 1usize..3) {
            let img = GrayImage::new(8, 8, data.clone()).unwrap();
            let out = median_filter(&img, r).unwrap();
            for v in out.data() {
                prop_assert!(data.contains(v));
            }
        }

        #[test]
        fn histogram_sums_to_pixel_count(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(w, h, |_, _| rng.gen());
            prop_assert_eq!(histogram256(&img).iter().sum::<u64>(), (w * h) as u64);
        }
    }
}
