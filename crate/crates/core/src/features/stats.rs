//! The fourteen summary statistics applied to every feature subsection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STAT_NAMES: [&str; 14] = [
    "area",
    "mean",
    "std",
    "max",
    "min",
    "mean_deviation",
    "energy",
    "entropy",
    "kurtosis",
    "skewness",
    "range",
    "rms",
    "median",
    "uniformity",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatVector14 {
    /// Count of nonzero values.
    pub area: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub mean_deviation: f64,
    pub energy: f64,
    /// Bits, over a 256-bin histogram of the min-max scaled values.
    pub entropy: f64,
    /// Raw (non-excess) kurtosis `m4/m2²`.
    pub kurtosis: f64,
    pub skewness: f64,
    pub range: f64,
    pub rms: f64,
    pub median: f64,
    pub uniformity: f64,
}

impl StatVector14 {
    pub fn to_array(&self) -> [f64; 14] {
        [
            self.area,
            self.mean,
            self.std,
            self.max,
            self.min,
            self.mean_deviation,
            self.energy,
            self.entropy,
            self.kurtosis,
            self.skewness,
            self.range,
            self.rms,
            self.median,
            self.uniformity,
        ]
    }
}

/// Bin index of `x` in the 256-bin histogram spanning `[min, min+range]`.
#[inline]
pub fn histogram_bin(x: f64, min: f64, range: f64) -> usize {
    (((x - min) / range) * 255.0).round().clamp(0.0, 255.0) as usize
}

/// Statistics over the values whose `valid` flag is set.
pub fn compute_stats14_masked(values: &[f64], valid: &[bool]) -> Result<StatVector14> {
    if values.len() != valid.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            actual: valid.len(),
        });
    }
    let kept: Vec<f64> = values
        .iter()
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|(&x, _)| x)
        .collect();
    compute_stats14(&kept)
}

pub fn compute_stats14(values: &[f64]) -> Result<StatVector14> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };

    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4, mut abs_dev, mut energy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        abs_dev += d.abs();
        energy += x * x;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let range = max - min;
    let (entropy, uniformity, kurtosis, skewness) = if m2 == 0.0 || range == 0.0 {
        (0.0, 1.0, 0.0, 0.0)
    } else {
        let mut hist = [0u64; 256];
        for &x in values {
            hist[histogram_bin(x, min, range)] += 1;
        }
        let (mut h, mut u) = (0.0, 0.0);
        for &c in hist.iter().filter(|&&c| c > 0) {
            let p = c as f64 / n;
            h -= p * p.log2();
            u += p * p;
        }
        (h, u, m4 / (m2 * m2), m3 / m2.powf(1.5))
    };

    Ok(StatVector14 {
        area: values.iter().filter(|&&x| x != 0.0).count() as f64,
        mean,
        std: m2.sqrt(),
        max,
        min,
        mean_deviation: abs_dev / n,
        energy,
        entropy,
        kurtosis,
        skewness,
        range,
        rms: (energy / n).sqrt(),
        median,
        uniformity,
    })
}
