//! Gray-level co-occurrence matrices and gray-level difference histograms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normalization::NormalizedIris;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    D0,
    D45,
    D90,
    D135,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::D0, Direction::D45, Direction::D90, Direction::D135];

    /// Unit displacement `(dx, dy)` in image coordinates (y grows downward).
    pub fn unit_offset(self) -> (isize, isize) {
        match self {
            Direction::D0 => (1, 0),
            Direction::D45 => (1, -1),
            Direction::D90 => (0, -1),
            Direction::D135 => (-1, -1),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            Direction::D0 => 0,
            Direction::D45 => 45,
            Direction::D90 => 90,
            Direction::D135 => 135,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(Direction::D0),
            "45" => Ok(Direction::D45),
            "90" => Ok(Direction::D90),
            "135" => Ok(Direction::D135),
            _ => Err(invalid(format!("unknown direction {s:?}"))),
        }
    }
}

/// Integer gray levels in `0..levels` with a validity mask.
///
/// With `wrap_columns` the column axis is periodic, which is the natural
/// topology for the angular axis of a rubber-sheet rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPlane {
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub data: Vec<u16>,
    pub valid: Vec<bool>,
    pub wrap_columns: bool,
}

impl QuantizedPlane {
    pub fn new(
        width: usize,
        height: usize,
        levels: usize,
        data: Vec<u16>,
        valid: Vec<bool>,
        wrap_columns: bool,
    ) -> Result<Self> {
        if levels < 2 || levels > 256 {
            return Err(invalid(format!("levels must be in 2..=256, got {levels}")));
        }
        if data.len() != width * height || valid.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: data.len().min(valid.len()),
            });
        }
        if data.iter().any(|&g| g as usize >= levels) {
            return Err(invalid("gray level out of range"));
        }
        Ok(Self {
            width,
            height,
            levels,
            data,
            valid,
            wrap_columns,
        })
    }

    /// Quantizes 8-bit-scale intensities: `floor(x·levels/256)`, clamped.
    pub fn from_rect(rect: &NormalizedIris, levels: usize) -> Result<Self> {
        let data = rect.data.iter().map(|&x| quantize(x, levels)).collect();
        Self::new(rect.width, rect.height, levels, data, rect.valid.clone(), true)
    }

    /// Calls `f(a, b)` for each valid pair `(p, p + d·offset)`.
    fn for_each_pair(&self, dir: Direction, distance: usize, mut f: impl FnMut(usize, usize)) {
        let (ux, uy) = dir.unit_offset();
        let (dx, dy) = (ux * distance as isize, uy * distance as isize);
        let (w, h) = (self.width as isize, self.height as isize);
        for y in 0..h {
            let y2 = y + dy;
            if y2 < 0 || y2 >= h {
                continue;
            }
            for x in 0..w {
                let mut x2 = x + dx;
                if self.wrap_columns {
                    x2 = x2.rem_euclid(w);
                } else if x2 < 0 || x2 >= w {
                    continue;
                }
                let (p, q) = ((y * w + x) as usize, (y2 * w + x2) as usize);
                if self.valid[p] && self.valid[q] {
                    f(self.data[p] as usize, self.data[q] as usize);
                }
            }
        }
    }
}

#[inline]
pub fn quantize(x: f64, levels: usize) -> u16 {
    ((x * levels as f64 / 256.0).floor().max(0.0) as usize).min(levels - 1) as u16
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    pub levels: usize,
    /// Row-major `levels × levels` joint probabilities.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GldmHistogram {
    /// Probability of each absolute difference `0..levels`.
    pub probs: Vec<f64>,
}

/// Symmetric co-occurrence probabilities at `distance` along `dir`.
pub fn glcm(plane: &QuantizedPlane, dir: Direction, distance: usize) -> Result<GlcmMatrix> {
    if distance == 0 {
        return Err(invalid("co-occurrence distance must be ≥ 1"));
    }
    let l = plane.levels;
    let mut counts = vec![0u64; l * l];
    plane.for_each_pair(dir, distance, |a, b| {
        counts[a * l + b] += 1;
        counts[b * l + a] += 1;
    });
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoValidPairs);
    }
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    debug_assert!((0..l).all(|i| (0..l).all(|j| probs[i * l + j] == probs[j * l + i])));
    Ok(GlcmMatrix { levels: l, probs })
}

/// Distribution of absolute gray-level differences at `distance` along `dir`.
pub fn gldm(plane: &QuantizedPlane, dir: Direction, distance: usize) -> Result<GldmHistogram> {
    if distance == 0 {
        return Err(invalid("difference distance must be ≥ 1"));
    }
    let mut counts = vec![0u64; plane.levels];
    plane.for_each_pair(dir, distance, |a, b| counts[a.abs_diff(b)] += 1);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoValidPairs);
    }
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    Ok(GldmHistogram { probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(w: usize, h: usize, levels: usize, data: Vec<u16>, wrap: bool) -> QuantizedPlane {
        QuantizedPlane::new(w, h, levels, data, vec![true; w * h], wrap).unwrap()
    }

    #[test]
    fn two_by_two_examples() {
        let p = plane(2, 2, 2, vec![0, 0, 1, 1], false);
        assert_eq!(glcm(&p, Direction::D0, 1).unwrap().probs, vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(gldm(&p, Direction::D90, 1).unwrap().probs, vec![0.0, 1.0]);
        let wrapped = plane(2, 2, 2, vec![0, 0, 1, 1], true);
        assert_eq!(glcm(&wrapped, Direction::D0, 1).unwrap().probs, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn constant_plane() {
        let p = plane(5, 4, 8, vec![3; 20], true);
        for dir in Direction::ALL {
            let m = glcm(&p, dir, 1).unwrap();
            assert_eq!(m.probs[3 * 8 + 3], 1.0);
            assert_eq!(m.probs.iter().filter(|&&x| x > 0.0).count(), 1);
            assert_eq!(gldm(&p, dir, 1).unwrap().probs[0], 1.0);
        }
    }

    #[test]
    fn no_valid_pairs() {
        let p = QuantizedPlane::new(3, 1, 4, vec![0, 1, 2], vec![true, false, true], false).unwrap();
        assert!(matches!(glcm(&p, Direction::D0, 1), Err(Error::NoValidPairs)));
        assert!(matches!(gldm(&p, Direction::D90, 1), Err(Error::NoValidPairs)));
    }

    #[test]
    fn direction_round_trip_and_quantize() {
        for d in Direction::ALL {
            assert_eq!(d.to_string().parse::<Direction>().unwrap(), d);
        }
        assert_eq!(quantize(0.0, 32), 0);
        assert_eq!(quantize(7.99, 32), 0);
        assert_eq!(quantize(8.0, 32), 1);
        assert_eq!(quantize(255.0, 32), 31);
        assert_eq!(quantize(300.0, 32), 31);
        assert_eq!(quantize(-4.0, 32), 0);
    }

    proptest! {
        #[test]
        fn level_shift_leaves_gldm_unchanged(
            data in prop::collection::vec(0u16..24, 48),
            shift in 0u16..8,
            dir in 0usize..4,
        ) {
            let a = plane(8, 6, 32, data.clone(), true);
            let b = plane(8, 6, 32, data.iter().map(|g| g + shift).collect(), true);
            let d = Direction::ALL[dir];
            prop_assert_eq!(gldm(&a, d, 1).unwrap(), gldm(&b, d, 1).unwrap());
        }

        #[test]
        fn glcm_symmetric_unit_mass(data in prop::collection::vec(0u16..6, 35), dir in 0usize..4) {
            let m = glcm(&plane(7, 5, 6, data, false), Direction::ALL[dir], 1).unwrap();
            prop_assert!((m.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert_eq!(m.probs[i * 6 + j], m.probs[j * 6 + i]);
                }
            }
        }
    }
}
