//! 2-D DFT on row-major complex buffers, backed by `rustfft`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D transform of a `w × h` row-major buffer. The inverse is scaled by `1/(w·h)`.
pub fn fft2(buf: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    assert_eq!(buf.len(), w * h);
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row_fft.process(buf);
    let mut col = vec![Complex64::new(0.0, 0.0); w * h];
    transpose(buf, &mut col, w, h);
    col_fft.process(&mut col);
    transpose(&col, buf, h, w);
    if inverse {
        let s = 1.0 / (w * h) as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], w: usize, h: usize) {
    for y in 0..h {
        for x in 0..w {
            dst[x * h + y] = src[y * w + x];
        }
    }
}

pub fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[f64], w: usize, h: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); w * h];
        for v in 0..h {
            for u in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let ph = -2.0 * std::f64::consts::PI
                            * (u as f64 * xx as f64 / w as f64 + v as f64 * y as f64 / h as f64);
                        acc += Complex64::from_polar(x[y * w + xx], ph);
                    }
                }
                out[v * w + u] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_and_inverts() {
        let (w, h) = (6, 5);
        let x: Vec<f64> = (0..w * h).map(|i| ((i * 7919) % 31) as f64 - 15.0).collect();
        let mut buf = to_complex(&x);
        fft2(&mut buf, w, h, false);
        for (a, b) in buf.iter().zip(naive_dft(&x, w, h)) {
            assert!((a - b).norm() < 1e-9);
        }
        fft2(&mut buf, w, h, true);
        for (a, b) in buf.iter().zip(&x) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }
}
