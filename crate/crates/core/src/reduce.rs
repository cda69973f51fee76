//! Kernel PCA: standardize, build the kernel matrix, double-center, and keep
//! the leading eigen-directions scaled to unit norm in feature space.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::symmetric_eigen;

pub const DEFAULT_COMPONENTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(−γ‖x−y‖²)`
    Rbf { gamma: f64 },
    Linear,
    /// `(x·y + coef0)^degree`
    Polynomial { degree: u32, coef0: f64 },
}

impl Kernel {
    /// RBF with `γ = 1/d`, the inverse of the total variance of `d` standardized columns.
    pub fn default_rbf(dims: usize) -> Self {
        Kernel::Rbf {
            gamma: 1.0 / dims.max(1) as f64,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => dot(x, y),
            Kernel::Polynomial { degree, coef0 } => (dot(x, y) + coef0).powi(degree as i32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Config(format!("rbf gamma must be positive, got {gamma}")))
            }
            Kernel::Polynomial { degree: 0, .. } => Err(Error::Config("polynomial degree must be ≥ 1".into())),
            Kernel::Polynomial { coef0, .. } if !coef0.is_finite() => {
                Err(Error::Config("polynomial coef0 must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
            Kernel::Linear => write!(f, "linear"),
            Kernel::Polynomial { degree, coef0 } => write!(f, "polynomial(degree={degree},coef0={coef0})"),
        }
    }
}

/// Kernel family name as used in configuration; parameters come from separate keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Linear,
    Polynomial,
}

impl FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(KernelKind::Rbf),
            "linear" => Ok(KernelKind::Linear),
            "polynomial" | "poly" => Ok(KernelKind::Polynomial),
            _ => Err(invalid(format!("unknown kernel {s:?}"))),
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// A dense row-major matrix of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: bad.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub kernel: Kernel,
    /// Standardized training rows.
    pub train: Matrix,
    pub col_mean: Vec<f64>,
    /// Population std; zero for constant columns, which standardize to 0.
    pub col_std: Vec<f64>,
    /// Training kernel-matrix row means and grand mean, for centering new rows.
    pub kernel_row_means: Vec<f64>,
    pub kernel_mean: f64,
    /// Retained eigenvalues of the centered kernel matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Row-major `n × k`; column `m` is `α_m/√λ_m`.
    pub coefficients: Vec<f64>,
    pub k: usize,
    /// Fewer than `min(requested, n−1)` positive eigenvalues were available.
    pub rank_deficient: bool,
}

impl KpcaModel {
    pub fn input_dim(&self) -> usize {
        self.train.cols
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        standardize_row(x, &self.col_mean, &self.col_std)
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let z = self.standardize(x);
        let n = self.train.rows;
        let kx: Vec<f64> = (0..n).map(|j| self.kernel.eval(&z, self.train.row(j))).collect();
        let kx_mean = kx.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = kx
            .iter()
            .zip(&self.kernel_row_means)
            .map(|(&v, &rm)| v - kx_mean - rm + self.kernel_mean)
            .collect();
        Ok((0..self.k)
            .map(|m| (0..n).map(|j| centered[j] * self.coefficients[j * self.k + m]).sum())
            .collect())
    }

    pub fn transform_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = (0..x.rows)
            .into_par_iter()
            .map(|i| self.transform(x.row(i)))
            .collect::<Result<_>>()?;
        Ok(Matrix {
            rows: x.rows,
            cols: self.k,
            data: rows.concat(),
        })
    }
}

fn standardize_row(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean.iter().zip(std))
        .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
        .collect()
}

/// Column means and population standard deviations.
pub fn column_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows as f64;
    let mut mean = vec![0.0; x.cols];
    for i in 0..x.rows {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.cols];
    for i in 0..x.rows {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    // Spread at round-off level (e.g. a column that is 1/L² by construction)
    // is treated as constant; standardizing it would inject pure noise.
    let mut scale = vec![0.0f64; x.cols];
    for i in 0..x.rows {
        for (s, v) in scale.iter_mut().zip(x.row(i)) {
            *s = s.max(v.abs());
        }
    }
    let std = var
        .iter()
        .zip(&scale)
        .map(|(s, &mx)| {
            let sd = (s / n).sqrt();
            if sd <= CONSTANT_COLUMN_RTOL * mx {
                0.0
            } else {
                sd
            }
        })
        .collect();
    (mean, std)
}

const CONSTANT_COLUMN_RTOL: f64 = 1e-10;

pub fn kpca_fit(x: &Matrix, k: usize, kernel: Kernel) -> Result<KpcaModel> {
    kernel.validate()?;
    let n = x.rows;
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("training matrix has non-finite entries"));
    }
    let (col_mean, col_std) = column_stats(x);
    let train_rows: Vec<Vec<f64>> = (0..n).map(|i| standardize_row(x.row(i), &col_mean, &col_std)).collect();
    let train = Matrix::from_rows(&train_rows)?;

    let gram: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| kernel.eval(train.row(i), train.row(j))).collect())
        .collect();
    let mut km = gram.concat();
    // symmetrize exactly
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (km[i * n + j] + km[j * n + i]);
            km[i * n + j] = v;
            km[j * n + i] = v;
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| km[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let max_abs = km.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut centered = km;
    for i in 0..n {
        for j in 0..n {
            centered[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }

    let eig = symmetric_eigen(&centered, n)?;
    let lambda1 = eig.values.first().copied().unwrap_or(0.0);
    let floor = (1e-10 * lambda1).max(n as f64 * f64::EPSILON * max_abs);
    let bound = k.min(n - 1);
    let kept = eig.values.iter().take(bound).take_while(|&&l| l > floor).count();
    let rank_deficient = kept < bound;
    if rank_deficient {
        warn!("kernel PCA rank deficient: {kept} positive components of {bound} requested");
    }

    let mut coefficients = vec![0.0; n * kept];
    for m in 0..kept {
        let mut v = eig.vector(m);
        // sign fix: largest-magnitude entry positive (first on ties)
        let lead = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let s = eig.values[m].sqrt();
        for j in 0..n {
            coefficients[j * kept + m] = v[j] / s;
        }
    }
    Ok(KpcaModel {
        kernel,
        train,
        col_mean,
        col_std,
        kernel_row_means: row_means,
        kernel_mean: grand,
        eigenvalues: eig.values[..kept].to_vec(),
        coefficients,
        k: kept,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|i| rng.gen_range(-2.0..2.0) * (1 + i % d) as f64).collect();
        Matrix::new(n, d, data).unwrap()
    }

    /// Covariance-eigendecomposition PCA scores of the standardized data.
    fn pca_oracle(x: &Matrix) -> (Vec<f64>, DMatrix<f64>, Vec<f64>, Vec<f64>) {
        let (n, d) = (x.rows, x.cols);
        let m = DMatrix::from_row_slice(n, d, &x.data);
        let mean: Vec<f64> = (0..d).map(|j| m.column(j).mean()).collect();
        let std: Vec<f64> = (0..d)
            .map(|j| (m.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt())
            .collect();
        let z = DMatrix::from_fn(n, d, |i, j| (m[(i, j)] - mean[j]) / std[j]);
        let cov = z.transpose() * &z;
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vecs = DMatrix::from_fn(d, d, |i, c| eig.eigenvectors[(i, order[c])]);
        (vals, vecs, mean, std)
    }

    fn same_up_to_sign(a: &[f64], b: &[f64], tol: f64) -> bool {
        let plus = a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol);
        let minus = a.iter().zip(b).all(|(x, y)| (x + y).abs() < tol);
        plus || minus
    }

    #[test]
    fn linear_kernel_matches_pca_oracle() {
        let x = random_matrix(20, 5, 7);
        let model = kpca_fit(&x, 100, Kernel::Linear).unwrap();
        assert_eq!(model.k, 5);
        let (vals, vecs, mean, std) = pca_oracle(&x);
        for m in 0..5 {
            assert!((model.eigenvalues[m] - vals[m]).abs() < 1e-8 * vals[0]);
        }
        let probe: Vec<f64> = vec![0.3, -1.0, 2.2, 0.0, 4.0];
        let zp: Vec<f64> = (0..5).map(|j| (probe[j] - mean[j]) / std[j]).collect();
        for m in 0..5 {
            let col = vecs.column(m);
            let train_scores: Vec<f64> = (0..20)
                .map(|i| (0..5).map(|j| (x.get(i, j) - mean[j]) / std[j] * col[j]).sum())
                .collect();
            let ours: Vec<f64> = (0..20).map(|i| model.transform(x.row(i)).unwrap()[m]).collect();
            assert!(same_up_to_sign(&ours, &train_scores, 1e-8), "component {m}");
            let oracle: f64 = (0..5).map(|j| zp[j] * col[j]).sum();
            let got = model.transform(&probe).unwrap()[m];
            let sign = if (ours[0] - train_scores[0]).abs() < 1e-8 { 1.0 } else { -1.0 };
            assert!((got - sign * oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_rows_are_rank_zero() {
        let x = Matrix::new(6, 3, [1.0, 2.0, 3.0].repeat(6)).unwrap();
        for kernel in [Kernel::default_rbf(3), Kernel::Linear] {
            let m = kpca_fit(&x, 100, kernel).unwrap();
            assert_eq!(m.k, 0);
            assert!(m.rank_deficient);
            assert!(m.transform(&[1.0, 2.0, 3.0]).unwrap().is_empty());
        }
    }

    #[test]
    fn component_count_bounded_by_samples() {
        let x = random_matrix(50, 252, 3);
        let m = kpca_fit(&x, 100, Kernel::default_rbf(252)).unwrap();
        assert_eq!(m.k, 49);
        assert!(!m.rank_deficient);
        let big = random_matrix(130, 20, 4);
        let m = kpca_fit(&big, 100, Kernel::default_rbf(20)).unwrap();
        assert_eq!(m.k, 100);
        assert_eq!(m.transform(big.row(0)).unwrap().len(), 100);
    }

    #[test]
    fn projections_consistent_and_uncorrelated() {
        let x = random_matrix(40, 8, 11);
        for kernel in [
            Kernel::default_rbf(8),
            Kernel::Linear,
            Kernel::Polynomial { degree: 2, coef0: 1.0 },
        ] {
            let m = kpca_fit(&x, 10, kernel).unwrap();
            let p = m.transform_matrix(&x).unwrap();
            // training projection equals √λ·α
            for i in 0..x.rows {
                for c in 0..m.k {
                    let direct = m.eigenvalues[c] * m.coefficients[i * m.k + c];
                    assert!((p.get(i, c) - direct).abs() < 1e-9 * m.eigenvalues[0].sqrt());
                }
            }
            let mut cov = vec![0.0; m.k * m.k];
            for i in 0..x.rows {
                for a in 0..m.k {
                    for b in 0..m.k {
                        cov[a * m.k + b] += p.get(i, a) * p.get(i, b);
                    }
                }
            }
            let diag_max = (0..m.k).map(|a| cov[a * m.k + a]).fold(0.0, f64::max);
            for a in 0..m.k {
                for b in 0..m.k {
                    if a != b {
                        assert!(cov[a * m.k + b].abs() < 1e-8 * diag_max, "{kernel}");
                    }
                }
            }
        }
    }

    #[test]
    fn eigen_residual_and_trace_bound() {
        let x = random_matrix(30, 6, 2);
        let m = kpca_fit(&x, 20, Kernel::default_rbf(6)).unwrap();
        let n = 30;
        let mut kc = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                kc[i * n + j] = m.kernel.eval(m.train.row(i), m.train.row(j)) + m.kernel_mean
                    - m.kernel_row_means[i]
                    - m.kernel_row_means[j];
            }
        }
        let trace: f64 = (0..n).map(|i| kc[i * n + i]).sum();
        assert!(m.eigenvalues.iter().sum::<f64>() <= trace * (1.0 + 1e-9));
        for c in 0..m.k {
            let s = m.eigenvalues[c].sqrt();
            let v: Vec<f64> = (0..n).map(|j| m.coefficients[j * m.k + c] * s).collect();
            for i in 0..n {
                let kv: f64 = (0..n).map(|j| kc[i * n + j] * v[j]).sum();
                assert!((kv - m.eigenvalues[c] * v[i]).abs() <= 1e-8 * m.eigenvalues[0]);
            }
        }
    }

    #[test]
    fn constant_columns_standardize_to_zero() {
        let mut x = random_matrix(10, 4, 9);
        for i in 0..10 {
            x.data[i * 4 + 2] = 5.0;
        }
        let m = kpca_fit(&x, 3, Kernel::Linear).unwrap();
        assert_eq!(m.col_std[2], 0.0);
        assert!(m.train.data.iter().all(|v| v.is_finite()));
        assert!((0..10).all(|i| m.train.get(i, 2) == 0.0));
    }

    #[test]
    fn round_off_spread_counts_as_constant() {
        let mut x = random_matrix(10, 4, 9);
        for i in 0..10 {
            // 1/1024 computed as a sum in varying order
            let parts: Vec<f64> = (0..1024).map(|k| ((k * 7 + i * 13) % 1024) as f64 / 1024.0 / 523_776.0).collect();
            x.data[i * 4 + 1] = parts.iter().sum();
        }
        let (_, std) = column_stats(&x);
        assert_eq!(std[1], 0.0);
        assert!(std[0] > 0.0);
    }

    #[test]
    fn errors() {
        let x = random_matrix(5, 3, 1);
        let m = kpca_fit(&x, 2, Kernel::Linear).unwrap();
        assert!(matches!(m.transform(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(kpca_fit(&random_matrix(1, 3, 1), 2, Kernel::Linear).is_err());
        assert!(kpca_fit(&x, 2, Kernel::Rbf { gamma: 0.0 }).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
