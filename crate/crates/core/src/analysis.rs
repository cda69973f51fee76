//! Feature-pool diagnostics: pairwise Pearson correlation and one-vs-rest AUC
//! ranking of single features and feature groups.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureGroup;
use crate::reduce::Matrix;

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub dim: usize,
    /// Row-major `dim × dim`.
    pub matrix: Vec<f64>,
    /// Counts of |r| over the upper triangle in bins `[0.05k, 0.05(k+1))`; 1.0 lands in the last bin.
    pub histogram: Vec<u64>,
    pub fraction_below_half: f64,
    /// Columns with zero variance; their off-diagonal coefficients are 0.
    pub zero_variance: Vec<usize>,
}

impl CorrelationReport {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }
}

pub fn pearson_matrix(f: &Matrix) -> Result<CorrelationReport> {
    let (n, d) = (f.rows, f.cols);
    if n < 3 {
        return Err(Error::TooFewSamples { got: n, need: 3 });
    }
    // centered, unit-norm columns (or zero for constant columns)
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| f.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            col.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let mut zero_variance = Vec::new();
    for (j, c) in cols.iter_mut().enumerate() {
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 || scale == 0.0 {
            zero_variance.push(j);
            c.iter_mut().for_each(|v| *v = 0.0);
        } else {
            c.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let r: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                        r.clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut matrix = rows.concat();
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            matrix[i * d + j] = matrix[j * d + i];
        }
    }
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    let (mut below, mut pairs) = (0u64, 0u64);
    for i in 0..d {
        for j in i + 1..d {
            let a = matrix[i * d + j].abs();
            histogram[((a / HISTOGRAM_BIN_WIDTH) as usize).min(HISTOGRAM_BINS - 1)] += 1;
            pairs += 1;
            if a < 0.5 {
                below += 1;
            }
        }
    }
    Ok(CorrelationReport {
        dim: d,
        matrix,
        histogram,
        fraction_below_half: if pairs == 0 { 0.0 } else { below as f64 / pairs as f64 },
        zero_variance,
    })
}

/// Midranks (1-based) of `values`; tied values share the mean of their ranks.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Mann–Whitney AUC: probability that a positive outranks a negative, ties ½.
pub fn auc_mann_whitney(values: &[f64], positive: &[bool]) -> Option<f64> {
    let ranks = midranks(values);
    let npos = positive.iter().filter(|&&p| p).count();
    let nneg = positive.len() - npos;
    if npos == 0 || nneg == 0 {
        return None;
    }
    let rsum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rsum - (npos * (npos + 1)) as f64 / 2.0;
    Some(u / (npos as f64 * nneg as f64))
}

/// Area under the empirical ROC curve by the trapezoid rule, sweeping the
/// threshold down through the distinct values.
pub fn auc_trapezoid(values: &[f64], positive: &[bool]) -> Option<f64> {
    let npos = positive.iter().filter(|&&p| p).count() as f64;
    let nneg = positive.len() as f64 - npos;
    if npos == 0.0 || nneg == 0.0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let (tp0, fp0) = (tp, fp);
        let v = values[idx[k]];
        while k < idx.len() && values[idx[k]] == v {
            if positive[idx[k]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        area += (fp - fp0) / nneg * (tp + tp0) / (2.0 * npos);
    }
    Some(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAuc {
    pub feature: usize,
    pub mean: f64,
    pub std: f64,
}

/// One-vs-rest AUC of feature `j` for every class `0..classes`, folded to
/// `max(A, 1−A)`, summarized as mean and population std.
pub fn feature_auc(f: &Matrix, labels: &[usize], classes: usize, j: usize) -> Result<FeatureAuc> {
    if labels.len() != f.rows {
        return Err(Error::DimensionMismatch {
            expected: f.rows,
            actual: labels.len(),
        });
    }
    if classes < 2 {
        return Err(Error::TooFewSamples { got: classes, need: 2 });
    }
    let values: Vec<f64> = (0..f.rows).map(|i| f.get(i, j)).collect();
    let aucs: Vec<f64> = (0..classes)
        .map(|c| {
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            auc_mann_whitney(&values, &pos)
                .map(|a| a.max(1.0 - a))
                .ok_or(Error::DegenerateClass(c))
        })
        .collect::<Result<_>>()?;
    let k = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / k;
    let std = (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k).sqrt();
    Ok(FeatureAuc { feature: j, mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub features: Vec<FeatureAuc>,
    /// AUCs are orientation-folded into [0.5, 1].
    pub folded: bool,
}

pub fn auc_report(f: &Matrix, labels: &[usize], classes: usize) -> Result<AucReport> {
    let features = (0..f.cols)
        .into_par_iter()
        .map(|j| feature_auc(f, labels, classes, j))
        .collect::<Result<_>>()?;
    Ok(AucReport { features, folded: true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Feature indices by descending mean AUC, ties by index.
    pub order: Vec<usize>,
    pub group_means: Vec<(FeatureGroup, f64)>,
}

/// `groups[j]` is the group of feature `j`; groups without features are omitted.
pub fn rank_features(report: &AucReport, groups: &[FeatureGroup]) -> Result<Ranking> {
    if groups.len() != report.features.len() {
        return Err(Error::DimensionMismatch {
            expected: report.features.len(),
            actual: groups.len(),
        });
    }
    let mut order: Vec<usize> = (0..report.features.len()).collect();
    order.sort_by(|&a, &b| {
        report.features[b]
            .mean
            .total_cmp(&report.features[a].mean)
            .then(a.cmp(&b))
    });
    let group_means = FeatureGroup::ALL
        .iter()
        .filter_map(|&g| {
            let v: Vec<f64> = report
                .features
                .iter()
                .zip(groups)
                .filter(|(_, &fg)| fg == g)
                .map(|(fa, _)| fa.mean)
                .collect();
            (!v.is_empty()).then(|| (g, v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect();
    Ok(Ranking { order, group_means })
}
