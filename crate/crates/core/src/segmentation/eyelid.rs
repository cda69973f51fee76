//! Parabolic eyelid boundaries.

use std::f64::consts::PI;

use super::Circle;
use crate::edges::{non_maximum_suppression, EdgeMap};

/// A band with fewer candidate edge points gets no parabola.
pub const MIN_BAND_POINTS: usize = 10;
/// Edge points this close to either boundary circle belong to the circle.
const BOUNDARY_MARGIN: f64 = 2.5;
/// Minimum horizontal span of the inliers, as a fraction of the iris radius.
const MIN_SPAN_FRACTION: f64 = 0.5;
/// Eyelid-over-iris contrast is much lower than pupil contrast, so ridge
/// pixels inside the annulus are also accepted above this fraction of the
/// pupil boundary's typical edge strength.
const WEAK_FRACTION: f64 = 0.08;

/// Median over the pupil circle of the strongest response within ±1 px radially.
fn pupil_edge_strength(edges: &EdgeMap, pupil: &Circle) -> f64 {
    let (w, h) = (edges.width as f64, edges.height as f64);
    let mut samples: Vec<f64> = (0..64)
        .filter_map(|k| {
            let t = 2.0 * PI * k as f64 / 64.0;
            (-1..=1)
                .filter_map(|dr| {
                    let r = pupil.r + dr as f64;
                    let x = (pupil.cx + r * t.cos()).round();
                    let y = (pupil.cy + r * t.sin()).round();
                    (x >= 0.0 && y >= 0.0 && x < w && y < h)
                        .then(|| edges.magnitude[y as usize * edges.width + x as usize])
                })
                .reduce(f64::max)
        })
        .collect();
    if samples.is_empty() {
        return f64::INFINITY;
    }
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

/// `y = a·(x−h)² + k`, stored in expanded form about `x0`:
/// `y = c2·(x−x0)² + c1·(x−x0) + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parabola {
    pub x0: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Parabola {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.x0;
        (self.c2 * t + self.c1) * t + self.c0
    }

    /// Vertex form `(a, h, k)`; `None` for a degenerate (straight) fit.
    pub fn vertex(&self) -> Option<(f64, f64, f64)> {
        if self.c2.abs() < 1e-12 {
            return None;
        }
        let h = self.x0 - self.c1 / (2.0 * self.c2);
        Some((self.c2, h, self.eval(h)))
    }
}

#[derive(Debug, Clone)]
pub struct EyelidFit {
    pub upper: Option<Parabola>,
    pub lower: Option<Parabola>,
    pub mask: Vec<bool>,
}

fn least_squares(points: &[(f64, f64)], x0: f64) -> Option<Parabola> {
    // normal equations of y = c2 t² + c1 t + c0
    let mut m = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    for &(x, y) in points {
        let t = x - x0;
        let basis = [t * t, t, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            v[i] += basis[i] * y;
        }
    }
    let c = solve3(m, v)?;
    Some(Parabola {
        x0,
        c2: c[0],
        c1: c[1],
        c0: c[2],
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    Some(x)
}

/// Least squares with iterative outlier trimming.
fn robust_fit(points: &[(f64, f64)], x0: f64, min_span: f64) -> Option<Parabola> {
    if points.len() < MIN_BAND_POINTS {
        return None;
    }
    let mut inliers = points.to_vec();
    let mut fit = least_squares(&inliers, x0)?;
    for _ in 0..4 {
        let mut res: Vec<f64> = points.iter().map(|&(x, y)| (y - fit.eval(x)).abs()).collect();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = (3.0 * sorted[sorted.len() / 2]).max(1.5);
        inliers = points
            .iter()
            .zip(res.iter_mut())
            .filter(|(_, r)| **r <= cut)
            .map(|(p, _)| *p)
            .collect();
        if inliers.len() < MIN_BAND_POINTS {
            return None;
        }
        fit = least_squares(&inliers, x0)?;
    }
    let (lo, hi) = inliers
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    if hi - lo < min_span {
        return None;
    }
    Some(fit)
}

/// Fits the upper and lower eyelid boundaries and masks the iris pixels beyond them.
///
/// Candidates are edge pixels strictly inside the iris annulus whose edge
/// normal is closer to vertical than horizontal.
pub fn fit_eyelids(edges: &EdgeMap, pupil: &Circle, iris: &Circle) -> EyelidFit {
    let (w, h) = (edges.width, edges.height);
    let ridges = non_maximum_suppression(&edges.magnitude, &edges.orientation, w, h);
    let weak = WEAK_FRACTION * pupil_edge_strength(edges, pupil);
    let mut upper_pts = Vec::new();
    let mut lower_pts = Vec::new();
    for (x, y) in (0..h).flat_map(|y| (0..w).map(move |x| (x, y))) {
        let i = y * w + x;
        if !(edges.binary[i] || (ridges[i] && edges.magnitude[i] >= weak)) {
            continue;
        }
        let (xf, yf) = (x as f64, y as f64);
        let di = (xf - iris.cx).hypot(yf - iris.cy);
        let dp = (xf - pupil.cx).hypot(yf - pupil.cy);
        if di >= iris.r - BOUNDARY_MARGIN || dp <= pupil.r + BOUNDARY_MARGIN {
            continue;
        }
        let theta = edges.orientation[y * w + x];
        if !(PI / 4.0..=3.0 * PI / 4.0).contains(&theta) {
            continue;
        }
        if yf < pupil.cy - 0.5 * pupil.r {
            upper_pts.push((xf, yf));
        } else if yf > pupil.cy + 0.5 * pupil.r {
            lower_pts.push((xf, yf));
        }
    }
    let span = MIN_SPAN_FRACTION * iris.r;
    let upper = robust_fit(&upper_pts, iris.cx, span);
    let lower = robust_fit(&lower_pts, iris.cx, span);

    let mut mask = vec![false; w * h];
    if upper.is_some() || lower.is_some() {
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                if !iris.contains(xf, yf) {
                    continue;
                }
                let above = upper.is_some_and(|p| yf < p.eval(xf));
                let below = lower.is_some_and(|p| yf > p.eval(xf));
                mask[y * w + x] = above || below;
            }
        }
    }
    EyelidFit { upper, lower, mask }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(points: &[(usize, usize)], w: usize, h: usize, theta: f64) -> EdgeMap {
        let mut binary = vec![false; w * h];
        for &(x, y) in points {
            binary[y * w + x] = true;
        }
        EdgeMap {
            width: w,
            height: h,
            magnitude: vec![1.0; w * h],
            orientation: vec![theta; w * h],
            binary,
            threshold: 0.5,
        }
    }

    #[test]
    fn parabola_vertex_form() {
        let p = least_squares(&[(0.0, 5.0), (1.0, 6.0), (-1.0, 6.0), (2.0, 9.0)], 0.0).unwrap();
        let (a, h, k) = p.vertex().unwrap();
        assert!((a - 1.0).abs() < 1e-9 && h.abs() < 1e-9 && (k - 5.0).abs() < 1e-9);
    }

    #[test]
    fn no_points_no_mask() {
        let pupil = Circle::new(64.0, 64.0, 15.0);
        let iris = Circle::new(64.0, 64.0, 45.0);
        let fit = fit_eyelids(&map_with(&[], 128, 128, PI / 2.0), &pupil, &iris);
        assert!(fit.upper.is_none() && fit.lower.is_none());
        assert!(fit.mask.iter().all(|&m| !m));
    }

    #[test]
    fn horizontal_line_masks_region_above() {
        let pupil = Circle::new(64.0, 64.0, 15.0);
        let iris = Circle::new(64.0, 64.0, 45.0);
        let pts: Vec<(usize, usize)> = (30..99).map(|x| (x, 40)).collect();
        let fit = fit_eyelids(&map_with(&pts, 128, 128, PI / 2.0), &pupil, &iris);
        assert!(fit.upper.is_some());
        for y in 0..128 {
            for x in 0..128 {
                let m = fit.mask[y * 128 + x];
                let inside = iris.contains(x as f64, y as f64);
                if y == 40 {
                    continue;
                }
                assert_eq!(m, inside && y < 40, "({x},{y})");
            }
        }
    }

    #[test]
    fn radial_edges_ignored() {
        let pupil = Circle::new(64.0, 64.0, 15.0);
        let iris = Circle::new(64.0, 64.0, 45.0);
        let pts: Vec<(usize, usize)> = (30..99).map(|x| (x, 40)).collect();
        let fit = fit_eyelids(&map_with(&pts, 128, 128, 0.0), &pupil, &iris);
        assert!(fit.mask.iter().all(|&m| !m));
    }
}
