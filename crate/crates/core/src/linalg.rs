//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 64;
const OFF_TOL: f64 = 1e-10;
const SYM_TOL: f64 = 1e-10;

/// Eigenpairs sorted by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

pub fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal(a: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

pub fn sym_eig(m: &[Vec<f64>]) -> Result<SymEigen> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(Error::domain("matrix is not square"));
    }
    let norm = frobenius(m);
    let sym_tol = SYM_TOL * norm.max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (m[i][j] - m[j][i]).abs() > sym_tol {
                return Err(Error::domain(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    m[i][j], m[j][i]
                )));
            }
        }
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("matrix has non-finite entries"));
    }

    // symmetrize exactly so the rotations see one value per pair
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (m[i][j] + m[j][i])).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let target = OFF_TOL * norm;
    let mut sweeps = 0;
    loop {
        let off = off_diagonal(&a);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diagonal norm {off:e}, target {target:e})"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let g = a[k][p];
                    let h = a[k][q];
                    a[k][p] = c * g - s * h;
                    a[p][k] = a[k][p];
                    a[k][q] = s * g + c * h;
                    a[q][k] = a[k][q];
                }
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let g = row[p];
                    let h = row[q];
                    row[p] = c * g - s * h;
                    row[q] = s * g + c * h;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    Ok(SymEigen {
        values: order.iter().map(|&i| a[i][i]).collect(),
        vectors: order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect(),
        sweeps,
    })
}

impl SymEigen {
    /// `V diag(values) V^T`.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.values.len();
        let mut out = vec![vec![0.0; n]; n];
        for (lambda, vec) in self.values.iter().zip(&self.vectors) {
            for i in 0..n {
                for j in 0..n {
                    out[i][j] += lambda * vec[i] * vec[j];
                }
            }
        }
        out
    }

    /// Largest `||M v - lambda v||` over all pairs.
    pub fn max_residual(&self, m: &[Vec<f64>]) -> f64 {
        self.values
            .iter()
            .zip(&self.vectors)
            .map(|(lambda, vec)| {
                m.iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let mv: f64 = row.iter().zip(vec).map(|(a, b)| a * b).sum();
                        (mv - lambda * vec[i]).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_eigenvalues() {
        let m: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (i == j) as u8 as f64).collect()).collect();
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
    }

    #[test]
    fn diagonal_sorted_descending() {
        let m = vec![vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]];
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0].iter().map(|v| v.abs()).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vectors[1].iter().map(|v| v.abs()).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        assert!(matches!(sym_eig(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let e = sym_eig(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..=12);
            let mut m = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i..n {
                    let v: f64 = rng.random_range(-5.0..5.0);
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
            let e = sym_eig(&m).unwrap();
            let norm = frobenius(&m);
            assert!(e.max_residual(&m) <= 1e-7 * norm);
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = e.vectors[a].iter().zip(&e.vectors[b]).map(|(x, y)| x * y).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }
}
