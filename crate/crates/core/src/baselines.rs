//! Baseline K estimators: the Gap statistic and information criteria over a
//! spherical Gaussian mixture fitted by k-means.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::PointSet;
use crate::error::{Error, Result};
use crate::estimator::{uniform_reference, KEstimate, SelectionRule};
use crate::kmeans::{kmeans, EmptyCluster, KMeansConfig, KMeansFit};
use crate::report::{fmt_sig9, Tabular};
use crate::seed;

const VARIANCE_FLOOR: f64 = 1e-12;
const LOG_W_FLOOR: f64 = 1e-300;
const RESEED_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCurve {
    /// Indexed by `k - 1`.
    pub log_w: Vec<f64>,
    pub ref_log_w: Vec<f64>,
    pub gap: Vec<f64>,
    pub s: Vec<f64>,
    pub b: usize,
}

impl Tabular for GapCurve {
    fn header(&self) -> Option<String> {
        Some("k,logW,ref_logW,gap,s".into())
    }

    fn rows(&self) -> Vec<String> {
        (0..self.gap.len())
            .map(|i| {
                format!(
                    "{},{},{},{},{}",
                    i + 1,
                    fmt_sig9(self.log_w[i]),
                    fmt_sig9(self.ref_log_w[i]),
                    fmt_sig9(self.gap[i]),
                    fmt_sig9(self.s[i])
                )
            })
            .collect()
    }
}

/// `sum_C (1 / 2|C|) sum_{i,j in C} ||x_i - x_j||^2`, which equals the total
/// squared distance to the cluster means.
pub fn within_dispersion(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let c = counts[l] as f64;
            p.iter().zip(&sums[l]).map(|(v, s)| (v - s / c) * (v - s / c)).sum::<f64>()
        })
        .sum()
}

/// Seeded k-means fits for `k = 1..=kmax` (10 restarts, re-seeding up to 5
/// times on an empty cluster, then repairing when `k` exceeds the number of
/// distinct points).
pub fn kmeans_path(points: &[Vec<f64>], kmax: usize, seed_value: u64) -> Result<Vec<KMeansFit>> {
    (1..=kmax)
        .map(|k| {
            let cfg = KMeansConfig::new(k, seed::derive(seed_value, k as u64))
                .restarts(10)
                .empty(EmptyCluster::Reseed {
                    attempts: RESEED_ATTEMPTS,
                });
            match kmeans(points, &cfg) {
                Err(Error::KMeansDegenerate { .. }) => kmeans(points, &cfg.empty(EmptyCluster::Repair)),
                r => r,
            }
        })
        .collect()
}

fn log_w(points: &[Vec<f64>], fits: &[KMeansFit]) -> Vec<f64> {
    fits.iter()
        .enumerate()
        .map(|(i, f)| within_dispersion(points, &f.labels, i + 1).max(LOG_W_FLOOR).ln())
        .collect()
}

fn check_gap_args(points: &PointSet, kmax: usize, b: usize) -> Result<()> {
    if kmax == 0 {
        return Err(Error::domain("kmax must be >= 1"));
    }
    if b < 2 {
        return Err(Error::domain("gap statistic needs at least 2 reference sets"));
    }
    if points.len() < kmax {
        return Err(Error::domain(format!("kmax = {kmax} exceeds the {} points", points.len())));
    }
    Ok(())
}

pub fn gap_statistic(points: &PointSet, kmax: usize, b: usize, seed_value: u64) -> Result<(KEstimate, GapCurve)> {
    check_gap_args(points, kmax, b)?;
    let fits = kmeans_path(points.points(), kmax, seed::derive(seed_value, 0))?;
    gap_from_fits(points, &fits, b, seed_value)
}

/// Gap statistic reusing data fits from [`kmeans_path`]; `kmax` is
/// `fits.len()`.
pub fn gap_from_fits(points: &PointSet, fits: &[KMeansFit], b: usize, seed_value: u64) -> Result<(KEstimate, GapCurve)> {
    let kmax = fits.len();
    check_gap_args(points, kmax, b)?;
    let log_w_data = log_w(points.points(), fits);
    let refs = (0..b)
        .into_par_iter()
        .map(|r| {
            let stream = seed::derive2(seed_value, 1, r as u64);
            let reference = uniform_box(points, stream)?;
            let ref_fits = kmeans_path(reference.points(), kmax, seed::derive(stream, 1))?;
            Ok(log_w(reference.points(), &ref_fits))
        })
        .collect::<Result<Vec<_>>>()?;
    let bf = b as f64;
    let mut ref_log_w = Vec::with_capacity(kmax);
    let mut gap = Vec::with_capacity(kmax);
    let mut s = Vec::with_capacity(kmax);
    for k in 0..kmax {
        let mean = refs.iter().map(|r| r[k]).sum::<f64>() / bf;
        let var = refs.iter().map(|r| (r[k] - mean) * (r[k] - mean)).sum::<f64>() / bf;
        ref_log_w.push(mean);
        gap.push(mean - log_w_data[k]);
        s.push(var.sqrt() * (1.0 + 1.0 / bf).sqrt());
    }
    let decision: Vec<f64> = (0..kmax)
        .map(|i| if i + 1 < kmax { gap[i] - gap[i + 1] + s[i + 1] } else { 0.0 })
        .collect();
    let k = (0..kmax.saturating_sub(1)).find(|&i| decision[i] >= 0.0).map_or(kmax, |i| i + 1);
    let curve = GapCurve {
        log_w: log_w_data,
        ref_log_w,
        gap,
        s,
        b,
    };
    Ok((
        KEstimate {
            k,
            rule: SelectionRule::Gap,
            decision,
            note: None,
        },
        curve,
    ))
}

/// Uniform draws in the bounding box, including the 1-D case (the
/// deterministic midpoint grid would make every reference identical).
fn uniform_box(points: &PointSet, seed_value: u64) -> Result<PointSet> {
    if points.dim() > 1 {
        return uniform_reference(points, seed_value);
    }
    let padded = PointSet::new(points.points().iter().map(|p| vec![p[0], 0.0]).collect())?;
    let r = uniform_reference(&padded, seed_value)?;
    PointSet::new(r.points().iter().map(|p| vec![p[0]]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoCriterion {
    Aic,
    Bic,
}

/// Log-likelihood, parameter count and whether the variance floor applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureFit {
    pub log_likelihood: f64,
    pub params: usize,
    pub variance: f64,
    pub floored: bool,
}

/// Spherical, shared-variance, equal-weight Gaussian mixture with the
/// k-means centroids as means.
pub fn spherical_mixture(points: &[Vec<f64>], fit: &KMeansFit) -> MixtureFit {
    let n = points.len() as f64;
    let d = points[0].len() as f64;
    let k = fit.centroids.len();
    let raw = fit.inertia / (n * d);
    let variance = raw.max(VARIANCE_FLOOR);
    let log_norm = -0.5 * d * (2.0 * std::f64::consts::PI * variance).ln() - (k as f64).ln();
    let log_likelihood = points
        .iter()
        .map(|p| {
            let terms: Vec<f64> = fit
                .centroids
                .iter()
                .map(|c| -p.iter().zip(c).map(|(x, m)| (x - m) * (x - m)).sum::<f64>() / (2.0 * variance))
                .collect();
            let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            log_norm + top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
        })
        .sum();
    MixtureFit {
        log_likelihood,
        params: k * points[0].len() + 1,
        variance,
        floored: raw < VARIANCE_FLOOR,
    }
}

pub fn criterion_value(kind: InfoCriterion, m: &MixtureFit, n: usize) -> f64 {
    let p = m.params as f64;
    match kind {
        InfoCriterion::Aic => 2.0 * p - 2.0 * m.log_likelihood,
        InfoCriterion::Bic => p * (n as f64).ln() - 2.0 * m.log_likelihood,
    }
}

/// k-means fits for `k = 1..=kmax` as used by [`xic_select`].
pub fn mixture_path(points: &PointSet, kmax: usize, seed_value: u64) -> Result<Vec<MixtureFit>> {
    if kmax == 0 || points.len() <= kmax {
        return Err(Error::domain(format!(
            "information criteria need 1 <= kmax < n, got kmax={kmax}, n={}",
            points.len()
        )));
    }
    (1..=kmax)
        .map(|k| {
            let cfg = KMeansConfig::new(k, seed::derive(seed_value, k as u64)).restarts(10);
            let fit = kmeans(points.points(), &cfg)?;
            Ok(spherical_mixture(points.points(), &fit))
        })
        .collect()
}

pub fn mixtures_from_fits(points: &PointSet, fits: &[KMeansFit]) -> Vec<MixtureFit> {
    fits.iter().map(|f| spherical_mixture(points.points(), f)).collect()
}

/// Argmin of the criterion over a precomputed mixture path; ties go to the
/// smallest k.
pub fn select_from_path(kind: InfoCriterion, path: &[MixtureFit], n: usize) -> KEstimate {
    let decision: Vec<f64> = path.iter().map(|m| criterion_value(kind, m, n)).collect();
    let mut best = 0;
    for (i, &v) in decision.iter().enumerate() {
        if v < decision[best] {
            best = i;
        }
    }
    KEstimate {
        k: best + 1,
        rule: match kind {
            InfoCriterion::Aic => SelectionRule::Aic,
            InfoCriterion::Bic => SelectionRule::Bic,
        },
        decision,
        note: path.iter().any(|m| m.floored).then(|| "variance floored at 1e-12".to_string()),
    }
}

pub fn xic_select(points: &PointSet, kmax: usize, kind: InfoCriterion, seed_value: u64) -> Result<KEstimate> {
    let path = mixture_path(points, kmax, seed_value)?;
    Ok(select_from_path(kind, &path, points.len()))
}
