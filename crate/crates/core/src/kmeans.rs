//! Lloyd's k-means with k-means++ seeding and seeded restarts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

/// What to do when a cluster loses all of its points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyCluster {
    /// Move the point farthest from its centroid into the empty cluster.
    Repair,
    /// Draw a fresh seeding; fail after this many seedings per restart.
    Reseed { attempts: usize },
}

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub empty: EmptyCluster,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            max_iter: 100,
            restarts: 20,
            seed,
            empty: EmptyCluster::Repair,
        }
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn empty(mut self, policy: EmptyCluster) -> Self {
        self.empty = policy;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Restart that produced this fit.
    pub restart: usize,
}

struct Flat {
    data: Vec<f64>,
    dim: usize,
    n: usize,
}

impl Flat {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(pts: &Flat, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, dim) = (pts.n, pts.dim);
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(pts.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(pts.row(i), pts.row(first))).collect();
    while centers.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = pts.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), &c));
        }
        centers.extend_from_slice(&c);
    }
    centers
}

enum Lloyd {
    Done(Vec<usize>, Vec<f64>, f64),
    Empty,
}

fn lloyd(pts: &Flat, mut centers: Vec<f64>, k: usize, max_iter: usize, policy: EmptyCluster) -> Lloyd {
    let (n, dim) = (pts.n, pts.dim);
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let p = pts.row(i);
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(p, &centers[c * dim..(c + 1) * dim]);
                if d < best.0 {
                    best = (d, c);
                }
            }
            dist[i] = best.0;
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            if let EmptyCluster::Reseed { .. } = policy {
                return Lloyd::Empty;
            }
            // steal the worst-fitting point from a cluster that can spare one
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                })
                .expect("n >= k leaves a cluster with two points");
            counts[labels[donor]] -= 1;
            labels[donor] = empty;
            counts[empty] += 1;
            dist[donor] = 0.0;
            changed = true;
        }
        let mut sums = vec![0.0; k * dim];
        for i in 0..n {
            let l = labels[i];
            for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(pts.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            for d in 0..dim {
                centers[c * dim + d] = sums[c * dim + d] * inv;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(pts.row(i), &centers[labels[i] * dim..(labels[i] + 1) * dim]))
        .sum();
    Lloyd::Done(labels, centers, inertia)
}

fn one_restart(pts: &Flat, cfg: &KMeansConfig, restart: usize) -> Result<KMeansFit> {
    let mut rng = seed::rng(seed::derive(cfg.seed, restart as u64));
    let attempts = match cfg.empty {
        EmptyCluster::Repair => 1,
        EmptyCluster::Reseed { attempts } => attempts.max(1),
    };
    for _ in 0..attempts {
        let centers = plus_plus(pts, cfg.k, &mut rng);
        if let Lloyd::Done(labels, centers, inertia) = lloyd(pts, centers, cfg.k, cfg.max_iter, cfg.empty) {
            return Ok(KMeansFit {
                labels,
                centroids: centers.chunks(pts.dim).map(<[f64]>::to_vec).collect(),
                inertia,
                restart,
            });
        }
    }
    Err(Error::KMeansDegenerate { attempts })
}

/// Best-inertia fit over `cfg.restarts` seeded runs; ties go to the lowest
/// restart index. Restarts run in parallel with per-restart derived seeds.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansFit> {
    let n = points.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::domain(format!("k-means needs 1 <= k <= n, got k={}, n={n}", cfg.k)));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::domain("k-means points have mixed dimensions"));
    }
    let pts = Flat {
        data: points.iter().flatten().copied().collect(),
        dim,
        n,
    };
    let fits = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| one_restart(&pts, cfg, r))
        .collect::<Vec<_>>();
    let mut best: Option<KMeansFit> = None;
    let mut first_err = None;
    for fit in fits {
        match fit {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.inertia < b.inertia) {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one restart"),
    }
}

/// Relabel so labels appear in order of first occurrence.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for i in 0..10 {
            let o = i as f64 * 0.01;
            pts.push(vec![o, o]);
            pts.push(vec![10.0 + o, 10.0 - o]);
        }
        pts
    }

    #[test]
    fn separates_blobs() {
        let fit = kmeans(&blobs(), &KMeansConfig::new(2, 3)).unwrap();
        let canon = canonical_labels(&fit.labels);
        assert!(canon.iter().step_by(2).all(|&l| l == 0));
        assert!(canon.iter().skip(1).step_by(2).all(|&l| l == 1));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = kmeans(&blobs(), &KMeansConfig::new(3, 9)).unwrap();
        let b = kmeans(&blobs(), &KMeansConfig::new(3, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_points_repair_keeps_clusters_nonempty() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let fit = kmeans(&pts, &KMeansConfig::new(3, 1)).unwrap();
        let mut counts = [0; 3];
        fit.labels.iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c > 0));
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn identical_points_reseed_fails() {
        let pts = vec![vec![1.0]; 6];
        let cfg = KMeansConfig::new(2, 1).empty(EmptyCluster::Reseed { attempts: 5 });
        assert!(matches!(kmeans(&pts, &cfg), Err(Error::KMeansDegenerate { attempts: 5 })));
    }

    #[test]
    fn k_larger_than_n() {
        assert!(kmeans(&[vec![0.0]], &KMeansConfig::new(2, 0)).is_err());
    }

    #[test]
    fn canonical_relabel() {
        assert_eq!(canonical_labels(&[2, 2, 0, 1, 0]), vec![0, 0, 1, 2, 1]);
    }
}
