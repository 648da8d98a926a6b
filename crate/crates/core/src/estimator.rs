//! Subsampled cluster structure function curves and the two K-selection
//! rules.
//!
//! For each K the full dataset is clustered once. Each subsample of `5 K`
//! items is then split by those labels into parts `A_p`, and scored as
//! `sum_p log2(max delta(A_p) - min delta(A_p) + 1) / kmax`, where parts that
//! are absent or have fewer than two members contribute zero.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::NcdMatrix;
use crate::data::{Dataset, Item, PointSet};
use crate::deficiency::{trim_indices, CentroidOracle, ComplexityOracle};
use crate::error::{Error, Result};
use crate::kmeans::{canonical_labels, kmeans, KMeansConfig};
use crate::report::{fmt_sig9, Tabular};
use crate::seed;
use crate::spectral::{affinity_from_ncd, spectral_cluster, KernelScale};

pub const DEFAULT_KMAX: usize = 10;
const LOG_FLOOR: f64 = 1e-9;

/// How the full dataset is split into K clusters.
#[derive(Debug, Clone, Copy)]
pub enum ClusterSource<'a> {
    /// Spectral clustering over the NCD affinity.
    Ncd(&'a NcdMatrix),
    /// k-means in Euclidean space.
    Points(&'a PointSet),
    /// Precomputed labelings; entry `K - 1` holds the K-cluster labels.
    Labels(&'a [Vec<usize>]),
}

impl ClusterSource<'_> {
    fn n(&self) -> usize {
        match self {
            ClusterSource::Ncd(m) => m.n(),
            ClusterSource::Points(p) => p.len(),
            ClusterSource::Labels(l) => l.first().map_or(0, Vec::len),
        }
    }

    /// Labels in `0..k` for every item, canonical by first occurrence.
    pub fn labels(&self, k: usize, seed_value: u64) -> Result<Vec<usize>> {
        match self {
            ClusterSource::Ncd(m) => spectral_cluster(&affinity_from_ncd(m, KernelScale::Auto), k, seed_value),
            ClusterSource::Points(p) => {
                let fit = kmeans(p.points(), &KMeansConfig::new(k, seed_value).restarts(10))?;
                Ok(canonical_labels(&fit.labels))
            }
            ClusterSource::Labels(all) => {
                let labels = all
                    .get(k.wrapping_sub(1))
                    .ok_or_else(|| Error::domain(format!("no precomputed labels for K = {k}")))?;
                if labels.iter().any(|&l| l >= k) {
                    return Err(Error::domain(format!("precomputed labels for K = {k} exceed {}", k - 1)));
                }
                Ok(labels.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsfConfig {
    pub kmax: usize,
    pub nsamples: usize,
    pub seed: u64,
    /// Subsample size is `sample_factor * K`.
    pub sample_factor: usize,
    /// One-sigma trim each part's deficiencies before taking the bandwidth.
    pub trim_parts: bool,
}

impl Default for CsfConfig {
    fn default() -> Self {
        CsfConfig {
            kmax: DEFAULT_KMAX,
            nsamples: 1000,
            seed: 0,
            sample_factor: 5,
            trim_parts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsfCurve {
    pub kmax: usize,
    pub nsamples: usize,
    /// `mean[K - 1]`, `std[K - 1]` for `K = 1..=kmax`.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Items drawn per subsample at each K.
    pub subsample_sizes: Vec<usize>,
    /// Set when `sample_factor * K` exceeded the dataset size for some K.
    pub clamped: bool,
}

impl CsfCurve {
    /// A curve from known statistics (fixtures, files).
    pub fn from_stats(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::domain("curve needs equal-length, nonempty mean and std"));
        }
        Ok(CsfCurve {
            kmax: mean.len(),
            nsamples: 0,
            subsample_sizes: vec![0; mean.len()],
            clamped: false,
            mean,
            std,
        })
    }

    /// Parse the `K,mean,std` CSV written by [`Tabular::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let pts = crate::data::parse_points_csv(text)?;
        if pts.dim() != 3 {
            return Err(Error::domain(format!("curve CSV needs 3 columns, found {}", pts.dim())));
        }
        for (i, row) in pts.points().iter().enumerate() {
            if row[0] != (i + 1) as f64 {
                return Err(Error::domain(format!("curve row {} has K = {}", i + 1, row[0])));
            }
        }
        CsfCurve::from_stats(
            pts.points().iter().map(|r| r[1]).collect(),
            pts.points().iter().map(|r| r[2]).collect(),
        )
    }

    /// Means for `K = 1..=kmax` followed by the standard deviations.
    pub fn feature_vector(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.std).copied().collect()
    }

    pub fn feature_csv(&self) -> String {
        let mut s = self.feature_vector().iter().map(|&v| fmt_sig9(v)).collect::<Vec<_>>().join(",");
        s.push('\n');
        s
    }
}

impl Tabular for CsfCurve {
    fn header(&self) -> Option<String> {
        Some("K,mean,std".into())
    }

    fn rows(&self) -> Vec<String> {
        self.mean
            .iter()
            .zip(&self.std)
            .enumerate()
            .map(|(i, (m, s))| format!("{},{},{}", i + 1, fmt_sig9(*m), fmt_sig9(*s)))
            .collect()
    }
}

/// One subsample's curve value from the deficiency lists of its parts.
pub fn sample_value(parts: &[Vec<f64>], kmax: usize, trim: bool) -> f64 {
    let total: f64 = parts
        .iter()
        .filter(|p| p.len() >= 2)
        .map(|p| {
            let (lo, hi) = if trim {
                trim_indices(p)
                    .into_iter()
                    .map(|i| p[i])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            } else {
                p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            };
            (hi - lo + 1.0).log2()
        })
        .sum();
    total / kmax as f64
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Subsample values at one K given the full-dataset labels.
pub fn sample_values_at_k(
    dataset: &Dataset,
    labels: &[usize],
    k: usize,
    oracle: &ComplexityOracle,
    cfg: &CsfConfig,
) -> Result<Vec<f64>> {
    let items = dataset.items();
    let n = items.len();
    let m = (cfg.sample_factor * k).min(n);
    (0..cfg.nsamples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed::rng(seed::derive2(cfg.seed, k as u64, s as u64));
            let mut idx = sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            let mut parts: Vec<Vec<&Item>> = vec![Vec::new(); k];
            for i in idx {
                parts[labels[i]].push(&items[i]);
            }
            let deficiencies = parts
                .iter()
                .map(|p| oracle.deficiencies(p))
                .collect::<Result<Vec<_>>>()?;
            Ok(sample_value(&deficiencies, cfg.kmax, cfg.trim_parts))
        })
        .collect()
}

pub fn subsampled_csf(
    dataset: &Dataset,
    source: ClusterSource<'_>,
    oracle: &ComplexityOracle,
    cfg: &CsfConfig,
) -> Result<CsfCurve> {
    let n = dataset.len();
    if cfg.kmax == 0 {
        return Err(Error::domain("kmax must be >= 1"));
    }
    if cfg.nsamples < 2 {
        return Err(Error::domain("need at least 2 subsamples for a standard deviation"));
    }
    if source.n() != n {
        return Err(Error::domain(format!(
            "cluster source covers {} items, dataset has {n}",
            source.n()
        )));
    }
    if cfg.kmax > n {
        return Err(Error::domain(format!("kmax = {} exceeds the {n} items", cfg.kmax)));
    }
    let mut curve = CsfCurve {
        kmax: cfg.kmax,
        nsamples: cfg.nsamples,
        mean: Vec::with_capacity(cfg.kmax),
        std: Vec::with_capacity(cfg.kmax),
        subsample_sizes: Vec::with_capacity(cfg.kmax),
        clamped: false,
    };
    for k in 1..=cfg.kmax {
        let labels = source.labels(k, seed::derive(cfg.seed, 0xC1u64 << 32 | k as u64))?;
        let values = sample_values_at_k(dataset, &labels, k, oracle, cfg)?;
        let (mean, std) = population_stats(&values);
        curve.mean.push(mean);
        curve.std.push(std);
        let m = cfg.sample_factor * k;
        curve.clamped |= m > n;
        curve.subsample_sizes.push(m.min(n));
    }
    Ok(curve)
}

/// Curve over a point set with the centroid oracle and k-means clusters.
pub fn point_csf(points: &Arc<PointSet>, cfg: &CsfConfig) -> Result<CsfCurve> {
    let ds = points.to_dataset();
    let oracle = ComplexityOracle::Centroid(CentroidOracle::new(points.clone()));
    subsampled_csf(&ds, ClusterSource::Points(points), &oracle, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    OneStd,
    LogRatio,
    Gap,
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KEstimate {
    pub k: usize,
    pub rule: SelectionRule,
    /// one-std: drop margin `mean[K-1] - std[K-1] - mean[K]` (0 at K=1);
    /// log-ratio: `D(K)`; gap: `gap[K] - gap[K+1] + s[K+1]`; aic/bic: the
    /// criterion value.
    pub decision: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// First K whose mean falls more than one standard deviation below the
/// previous K's mean; K = 1 when no such drop exists.
pub fn select_k_one_std(curve: &CsfCurve) -> KEstimate {
    let mut decision = vec![0.0];
    decision.extend((1..curve.mean.len()).map(|i| curve.mean[i - 1] - curve.std[i - 1] - curve.mean[i]));
    match decision.iter().skip(1).position(|&d| d > 0.0) {
        Some(i) => KEstimate {
            k: i + 2,
            rule: SelectionRule::OneStd,
            decision,
            note: None,
        },
        None => KEstimate {
            k: 1,
            rule: SelectionRule::OneStd,
            decision,
            note: Some("no significant drop".into()),
        },
    }
}

/// `argmax_K log2(ref[K]) - log2(data[K])`, means floored at 1e-9; ties go
/// to the smallest K.
pub fn select_k_logratio(data: &CsfCurve, reference: &CsfCurve) -> Result<KEstimate> {
    if data.mean.len() != reference.mean.len() {
        return Err(Error::domain(format!(
            "curves differ in kmax: {} vs {}",
            data.mean.len(),
            reference.mean.len()
        )));
    }
    let decision: Vec<f64> = data
        .mean
        .iter()
        .zip(&reference.mean)
        .map(|(&s, &r)| r.max(LOG_FLOOR).log2() - s.max(LOG_FLOOR).log2())
        .collect();
    let mut best = 0;
    for (i, &d) in decision.iter().enumerate() {
        if d > decision[best] {
            best = i;
        }
    }
    Ok(KEstimate {
        k: best + 1,
        rule: SelectionRule::LogRatio,
        decision,
        note: None,
    })
}

/// `|P|` points spread uniformly over the range of `P`: midpoints of equal
/// subintervals in one dimension, seeded uniform draws in the bounding box
/// otherwise.
pub fn uniform_reference(points: &PointSet, seed_value: u64) -> Result<PointSet> {
    let n = points.len();
    if n == 0 {
        return Err(Error::domain("uniform reference of an empty point set"));
    }
    let bbox = points.bounding_box();
    if points.dim() == 1 {
        let (lo, hi) = bbox[0];
        let width = (hi - lo) / n as f64;
        return PointSet::new((0..n).map(|i| vec![lo + (i as f64 + 0.5) * width]).collect());
    }
    let mut rng = seed::rng(seed_value);
    PointSet::new(
        (0..n)
            .map(|_| {
                bbox.iter()
                    .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
                    .collect()
            })
            .collect(),
    )
}

/// Data curve, reference curve and the log-ratio estimate for a point set.
pub fn logratio_estimate(points: &Arc<PointSet>, cfg: &CsfConfig) -> Result<(CsfCurve, CsfCurve, KEstimate)> {
    let data = point_csf(points, cfg)?;
    let reference = Arc::new(uniform_reference(points, seed::derive(cfg.seed, 0x4EF))?);
    let ref_curve = point_csf(&reference, cfg)?;
    let est = select_k_logratio(&data, &ref_curve)?;
    Ok((data, ref_curve, est))
}
