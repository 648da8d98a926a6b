//! Ng-Jordan-Weiss spectral clustering over a distance-derived affinity.

use crate::compression::NcdMatrix;
use crate::error::{Error, Result};
use crate::kmeans::{canonical_labels, kmeans, KMeansConfig};
use crate::linalg::sym_eig;
use crate::seed;

const ZERO_DEGREE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelScale {
    /// Median of the off-diagonal distances (1 if that median is 0).
    Auto,
    Fixed(f64),
}

/// Symmetric affinity with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    entries: Vec<Vec<f64>>,
    sigma: f64,
}

impl Affinity {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Wrap a caller-built affinity; symmetry is checked, the diagonal forced
    /// to 1.
    pub fn from_entries(mut entries: Vec<Vec<f64>>) -> Result<Self> {
        let n = entries.len();
        for i in 0..n {
            if entries[i].len() != n {
                return Err(Error::domain("affinity is not square"));
            }
            for j in 0..n {
                let v = entries[i][j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::domain(format!("affinity ({i},{j}) = {v} outside [0,1]")));
                }
                if entries[j][i] != v {
                    return Err(Error::domain(format!("affinity not symmetric at ({i},{j})")));
                }
            }
            entries[i][i] = 1.0;
        }
        Ok(Affinity { entries, sigma: f64::NAN })
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Gaussian kernel `exp(-d^2 / (2 sigma^2))` over a symmetric distance matrix.
pub fn affinity_from_distances(d: &[Vec<f64>], scale: KernelScale) -> Affinity {
    let n = d.len();
    let sigma = match scale {
        KernelScale::Fixed(s) => s,
        KernelScale::Auto => {
            let upper = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d[i][j]).collect();
            let m = median(upper);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let denom = 2.0 * sigma * sigma;
    let mut entries = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (-d[i][j] * d[i][j] / denom).exp();
            entries[i][j] = v;
            entries[j][i] = v;
        }
    }
    Affinity { entries, sigma }
}

pub fn affinity_from_ncd(d: &NcdMatrix, scale: KernelScale) -> Affinity {
    affinity_from_distances(d.entries(), scale)
}

/// `D^{-1/2} A D^{-1/2}`.
pub fn normalized_affinity(a: &Affinity) -> Vec<Vec<f64>> {
    let inv_sqrt: Vec<f64> = a
        .entries
        .iter()
        .map(|row| {
            let deg: f64 = row.iter().sum();
            1.0 / deg.max(ZERO_DEGREE).sqrt()
        })
        .collect();
    a.entries
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, v)| v * inv_sqrt[i] * inv_sqrt[j]).collect())
        .collect()
}

/// Top-`k` eigenvector rows of the normalized affinity, each row scaled to
/// unit length (zero rows stay zero).
pub fn spectral_embedding(a: &Affinity, k: usize) -> Result<Vec<Vec<f64>>> {
    let l = normalized_affinity(a);
    let eig = sym_eig(&l)?;
    let n = a.n();
    Ok((0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|c| eig.vectors[c][i]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.into_iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SpectralConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            restarts: 20,
            max_iter: 100,
        }
    }
}

pub fn spectral_cluster(a: &Affinity, k: usize, seed_value: u64) -> Result<Vec<usize>> {
    spectral_cluster_with(a, k, seed_value, &SpectralConfig::default())
}

/// Labels in `0..k`, canonical by first occurrence.
pub fn spectral_cluster_with(a: &Affinity, k: usize, seed_value: u64, cfg: &SpectralConfig) -> Result<Vec<usize>> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::domain(format!("spectral clustering needs 1 <= k <= n, got k={k}, n={n}")));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let rows = spectral_embedding(a, k)?;
    let mut km = KMeansConfig::new(k, seed::derive(seed_value, 0x5EC7));
    km.restarts = cfg.restarts;
    km.max_iter = cfg.max_iter;
    let fit = kmeans(&rows, &km)?;
    Ok(canonical_labels(&fit.labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distances_give_all_ones() {
        let a = affinity_from_distances(&vec![vec![0.0; 3]; 3], KernelScale::Fixed(0.7));
        assert!(a.entries().iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn fixed_scale_arithmetic() {
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let a = affinity_from_distances(&d, KernelScale::Fixed(1.0));
        assert!((a.entries()[0][1] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(a.entries()[0][0], 1.0);
    }

    #[test]
    fn auto_scale_uses_median_or_fallback() {
        let d = vec![vec![0.2; 4]; 4];
        assert!((affinity_from_distances(&d, KernelScale::Auto).sigma() - 0.2).abs() < 1e-15);
        let z = vec![vec![0.0; 4]; 4];
        assert_eq!(affinity_from_distances(&z, KernelScale::Auto).sigma(), 1.0);
    }

    #[test]
    fn k_one_is_all_zero() {
        let a = affinity_from_distances(&vec![vec![0.5; 5]; 5], KernelScale::Auto);
        assert_eq!(spectral_cluster(&a, 1, 0).unwrap(), vec![0; 5]);
    }

    #[test]
    fn k_above_n_is_rejected() {
        let a = affinity_from_distances(&vec![vec![0.5; 2]; 2], KernelScale::Auto);
        assert!(spectral_cluster(&a, 3, 0).is_err());
    }

    #[test]
    fn perfect_blocks() {
        let n = 7;
        let block = |i: usize| usize::from(i >= 3);
        let e: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if block(i) == block(j) { 1.0 } else { 0.0 }).collect())
            .collect();
        let a = Affinity::from_entries(e).unwrap();
        let labels = spectral_cluster(&a, 2, 4).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 1, 1, 1, 1]);
    }
}
