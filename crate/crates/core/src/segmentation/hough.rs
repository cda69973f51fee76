//! Coarse-to-fine circle localization.

use std::f64::consts::PI;

use super::Circle;
use crate::edges::EdgeMap;
use crate::error::{invalid, Error, Result};
use crate::imaging::{histogram256, GrayImage};

const DARK_FRACTION: f64 = 0.02;
const PUPIL_WINDOW_FRACTION: f64 = 0.25;
const IRIS_CENTER_WINDOW: f64 = 15.0;
const VOTE_FLOOR: f64 = 0.25;

/// Centroid of every pixel at or below the 2% intensity quantile.
pub fn pupil_seed(img: &GrayImage) -> (f64, f64) {
    let hist = histogram256(img);
    let need = ((DARK_FRACTION * img.data().len() as f64).ceil() as u64).max(1);
    let mut cum = 0;
    let mut t = 255u8;
    for (v, &c) in hist.iter().enumerate() {
        cum += c;
        if cum >= need {
            t = v as u8;
            break;
        }
    }
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.get(x, y) <= t {
                sx += x as f64;
                sy += y as f64;
                n += 1.0;
            }
        }
    }
    (sx / n, sy / n)
}

#[derive(Debug, Clone, Copy)]
struct Best {
    votes: usize,
    cx: i64,
    cy: i64,
    r: i64,
}

impl Best {
    /// More votes wins; ties prefer smaller r, then lower cy, then lower cx.
    fn better_than(&self, other: &Best) -> bool {
        (self.votes, -self.r, -self.cy, -self.cx) > (other.votes, -other.r, -other.cy, -other.cx)
    }
}

/// Each edge pixel votes once per candidate center, into the radius bin
/// nearest its distance. Centers are restricted by `accept`.
fn hough_search(
    points: &[(f64, f64)],
    centers: impl Iterator<Item = (i64, i64)>,
    r_min: i64,
    r_max: i64,
    accept: impl Fn(i64, i64, i64) -> bool,
) -> Option<Best> {
    let nr = (r_max - r_min + 1) as usize;
    let mut acc = vec![0usize; nr];
    let mut best: Option<Best> = None;
    for (cx, cy) in centers {
        acc.iter_mut().for_each(|a| *a = 0);
        for &(px, py) in points {
            let d = (px - cx as f64).hypot(py - cy as f64).round() as i64;
            if d >= r_min && d <= r_max {
                acc[(d - r_min) as usize] += 1;
            }
        }
        for (k, &votes) in acc.iter().enumerate() {
            let r = r_min + k as i64;
            if votes == 0 || !accept(cx, cy, r) {
                continue;
            }
            let cand = Best { votes, cx, cy, r };
            if best.map_or(true, |b| cand.better_than(&b)) {
                best = Some(cand);
            }
        }
    }
    best
}

fn radius_bins(range: (f64, f64)) -> Result<(i64, i64)> {
    let lo = range.0.ceil().max(1.0) as i64;
    let hi = range.1.floor() as i64;
    if !(range.0 <= range.1) || hi < lo {
        return Err(invalid(format!("empty radius range {range:?}")));
    }
    Ok((lo, hi))
}

fn required_votes(r: i64) -> usize {
    (VOTE_FLOOR * 2.0 * PI * r as f64).ceil() as usize
}

fn disk_centers(cx: f64, cy: f64, radius: f64, w: usize, h: usize) -> impl Iterator<Item = (i64, i64)> {
    let y0 = (cy - radius).floor().max(0.0) as i64;
    let y1 = (cy + radius).ceil().min(h as f64 - 1.0) as i64;
    let x0 = (cx - radius).floor().max(0.0) as i64;
    let x1 = (cx + radius).ceil().min(w as f64 - 1.0) as i64;
    (y0..=y1)
        .flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
        .filter(move |&(x, y)| (x as f64 - cx).hypot(y as f64 - cy) <= radius)
}

/// Finds the pupil near the dark-pixel seed, then the iris around the pupil.
pub fn localize_circles(
    edges: &EdgeMap,
    img: &GrayImage,
    r_pupil_range: (f64, f64),
    r_iris_range: (f64, f64),
) -> Result<(Circle, Circle)> {
    if edges.width != img.width() || edges.height != img.height() {
        return Err(invalid("edge map and image dimensions differ"));
    }
    let (w, h) = (img.width(), img.height());
    let (pr0, pr1) = radius_bins(r_pupil_range)?;
    let (ir0, ir1) = radius_bins(r_iris_range)?;
    let points: Vec<(f64, f64)> = edges
        .edge_points()
        .into_iter()
        .map(|(x, y)| (x as f64, y as f64))
        .collect();

    let (sx, sy) = pupil_seed(img);
    let window = PUPIL_WINDOW_FRACTION * w.min(h) as f64;
    let pupil = hough_search(&points, disk_centers(sx, sy, window, w, h), pr0, pr1, |_, _, _| true);
    let pupil = match pupil {
        Some(b) if b.votes >= required_votes(b.r) => b,
        other => {
            let (votes, r) = other.map_or((0, pr0), |b| (b.votes, b.r));
            return Err(Error::NoPupilFound {
                votes,
                required: required_votes(r),
            });
        }
    };
    let (pcx, pcy, pr) = (pupil.cx as f64, pupil.cy as f64, pupil.r as f64);

    let iris = hough_search(
        &points,
        disk_centers(pcx, pcy, IRIS_CENTER_WINDOW, w, h),
        ir0,
        ir1,
        |cx, cy, r| {
            let off = (cx as f64 - pcx).hypot(cy as f64 - pcy);
            (r as f64) > pr && off < r as f64 - pr
        },
    );
    let iris = match iris {
        Some(b) if b.votes >= required_votes(b.r) => b,
        other => {
            let (votes, r) = other.map_or((0, ir0), |b| (b.votes, b.r));
            return Err(Error::NoIrisFound {
                votes,
                required: required_votes(r),
            });
        }
    };
    Ok((
        Circle::new(pcx, pcy, pr),
        Circle::new(iris.cx as f64, iris.cy as f64, iris.r as f64),
    ))
}
