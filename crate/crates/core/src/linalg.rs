//! Dense symmetric eigendecomposition: Householder tridiagonalization followed
//! by implicit QL iterations (the classic tred2/tql2 pair).

use crate::error::{invalid, Result};

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub n: usize,
    /// Descending.
    pub values: Vec<f64>,
    /// Row-major `n × n`; column `j` is the unit eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    #[inline]
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }
}

/// Decomposes the row-major symmetric `n × n` matrix `a`. Only symmetry up to
/// rounding is assumed; the lower triangle is used.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<SymmetricEigen> {
    if a.len() != n * n {
        return Err(invalid(format!("expected {}×{} matrix, got {} entries", n, n, a.len())));
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            n,
            values: vec![],
            vectors: vec![],
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let mut v = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + k];
        }
    }
    Ok(SymmetricEigen { n, values, vectors })
}

fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let ix = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[ix(n - 1, j)];
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[ix(i - 1, j)];
                v[ix(i, j)] = 0.0;
                v[ix(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = if f > 0.0 { -h.sqrt() } else { h.sqrt() };
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);
            for j in 0..i {
                f = d[j];
                v[ix(j, i)] = f;
                g = e[j] + v[ix(j, j)] * f;
                for k in j + 1..i {
                    g += v[ix(k, j)] * d[k];
                    e[k] += v[ix(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[ix(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[ix(i - 1, j)];
                v[ix(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    // accumulate the transformations
    for i in 0..n - 1 {
        v[ix(n - 1, i)] = v[ix(i, i)];
        v[ix(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[ix(k, i + 1)] / h;
            }
            for j in 0..=i {
                let g: f64 = (0..=i).map(|k| v[ix(k, i + 1)] * v[ix(k, j)]).sum();
                for k in 0..=i {
                    v[ix(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[ix(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[ix(n - 1, j)];
        v[ix(n - 1, j)] = 0.0;
    }
    v[ix(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

const MAX_QL_SWEEPS: usize = 64;

fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let ix = |r: usize, c: usize| r * n + c;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(invalid("eigensolver failed to converge"));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in &mut d[l + 2..n] {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let t = v[ix(k, i + 1)];
                        v[ix(k, i + 1)] = s * v[ix(k, i)] + c * t;
                        v[ix(k, i)] = c * v[ix(k, i)] - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rng.gen_range(-1.0..1.0);
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        a
    }

    fn check_decomposition(a: &[f64], n: usize) -> SymmetricEigen {
        let eig = symmetric_eigen(a, n).unwrap();
        let scale = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        for j in 0..n {
            let vj = eig.vector(j);
            let norm: f64 = vj.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-10);
            for i in 0..n {
                let av: f64 = (0..n).map(|k| a[i * n + k] * vj[k]).sum();
                assert!((av - eig.values[j] * vj[i]).abs() < 1e-10 * scale);
            }
            for k in 0..j {
                let dot: f64 = vj.iter().zip(eig.vector(k)).map(|(x, y)| x * y).sum();
                assert!(dot.abs() < 1e-10);
            }
        }
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        eig
    }

    #[test]
    fn matches_nalgebra() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (17, 4), (60, 5)] {
            let a = random_symmetric(n, seed);
            let ours = check_decomposition(&a, n);
            let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
            let mut theirs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
            theirs.sort_by(|a, b| b.total_cmp(a));
            for (x, y) in ours.values.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn diagonal_and_degenerate() {
        let a = vec![3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 3.0];
        let eig = check_decomposition(&a, 3);
        assert_eq!(eig.values, vec![3.0, 3.0, -1.0]);
        let zero = check_decomposition(&[0.0; 16], 4);
        assert!(zero.values.iter().all(|&x| x == 0.0));
        let ones = check_decomposition(&[1.0; 9], 3);
        assert!((ones.values[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(symmetric_eigen(&[1.0, 2.0], 2).is_err());
        assert!(symmetric_eigen(&[f64::NAN], 1).is_err());
        assert!(symmetric_eigen(&[], 0).unwrap().values.is_empty());
    }
}
