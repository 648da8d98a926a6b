//! Three-component isotropic Gaussian mixtures and the K-estimation
//! accuracy benchmark comparing the CSF against Gap, AIC and BIC.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{gap_from_fits, kmeans_path, mixtures_from_fits, select_from_path, InfoCriterion};
use crate::data::PointSet;
use crate::error::{Error, Result};
use crate::deficiency::{CentroidOracle, ComplexityOracle};
use crate::estimator::{
    select_k_logratio, select_k_one_std, subsampled_csf, uniform_reference, ClusterSource, CsfConfig, SelectionRule,
};
use crate::report::{fmt_sig9, Tabular};
use crate::kmeans::canonical_labels;
use crate::seed;

pub const TRUE_K: usize = 3;
pub const METHODS: [Method; 4] = [Method::Csf, Method::Gap, Method::Aic, Method::Bic];

/// Clusters at `(0,0)`, `(r,0)`, `(2r,0)` with identity covariance; labels
/// follow the generating component, points grouped by component.
pub fn gen_mixture(spacing: f64, per_cluster: usize, seed_value: u64) -> Result<(PointSet, Vec<usize>)> {
    if per_cluster == 0 {
        return Err(Error::domain("need at least one point per cluster"));
    }
    let mut rng = seed::rng(seed_value);
    let mut pts = Vec::with_capacity(TRUE_K * per_cluster);
    let mut labels = Vec::with_capacity(TRUE_K * per_cluster);
    for c in 0..TRUE_K {
        let cx = c as f64 * spacing;
        for _ in 0..per_cluster {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            pts.push(vec![cx + x, y]);
            labels.push(c);
        }
    }
    Ok((PointSet::new(pts)?, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Csf,
    Gap,
    Aic,
    Bic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Csf => "csf",
            Method::Gap => "gap",
            Method::Aic => "aic",
            Method::Bic => "bic",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub spacings: Vec<f64>,
    pub points_per_cluster: usize,
    pub trials: usize,
    pub kmax: usize,
    pub seed: u64,
    /// CSF subsamples per K.
    pub csf_samples: usize,
    /// Gap reference sets.
    pub gap_refs: usize,
    pub bootstrap: usize,
    /// Rule the CSF path uses to turn its curve into K.
    pub csf_rule: SelectionRule,
}

impl BenchConfig {
    /// 1000 points per cluster, 30 trials.
    pub fn desk() -> Self {
        BenchConfig {
            spacings: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            points_per_cluster: 1000,
            trials: 30,
            kmax: 10,
            seed: 1,
            csf_samples: 1000,
            gap_refs: 5,
            bootstrap: 1000,
            csf_rule: SelectionRule::OneStd,
        }
    }

    /// 10000 points per cluster, 100 trials.
    pub fn full() -> Self {
        BenchConfig {
            points_per_cluster: 10_000,
            trials: 100,
            ..BenchConfig::desk()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::domain("trials must be >= 1"));
        }
        if let Some(r) = self.spacings.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::domain(format!("spacing {r} is not positive")));
        }
        if self.kmax < TRUE_K {
            return Err(Error::domain(format!("kmax must be >= {TRUE_K}")));
        }
        if !matches!(self.csf_rule, SelectionRule::OneStd | SelectionRule::LogRatio) {
            return Err(Error::domain("CSF rule must be one_std or log_ratio"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub spacing: f64,
    pub accuracy: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `histogram[k - 1]` trials selected k.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// `selections[spacing][trial]` in [`METHODS`] order.
    pub selections: Vec<Vec<[usize; 4]>>,
}

impl BenchReport {
    pub fn row(&self, method: Method, spacing: f64) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.spacing == spacing)
    }

    pub fn accuracy(&self, method: Method, spacing: f64) -> Option<f64> {
        self.row(method, spacing).map(|r| r.accuracy)
    }

    /// `method,spacing,k,count` for every selected-K histogram cell.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("method,spacing,k,count\n");
        for r in &self.rows {
            for (i, c) in r.histogram.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", r.method.name(), fmt_sig9(r.spacing), i + 1, c));
            }
        }
        out
    }
}

impl Tabular for BenchReport {
    fn header(&self) -> Option<String> {
        Some("method,spacing,accuracy,ci_lo,ci_hi".into())
    }

    fn rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{}",
                    r.method.name(),
                    fmt_sig9(r.spacing),
                    fmt_sig9(r.accuracy),
                    fmt_sig9(r.ci_lo),
                    fmt_sig9(r.ci_hi)
                )
            })
            .collect()
    }
}

/// Percentile bootstrap 95% interval of the mean of 0/1 outcomes.
pub fn bootstrap_ci(hits: &[bool], resamples: usize, seed_value: u64) -> (f64, f64) {
    let n = hits.len();
    let point = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
    if n <= 1 || resamples == 0 {
        return (point, point);
    }
    let mut rng = seed::rng(seed_value);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).filter(|_| hits[rng.random_range(0..n)]).count() as f64 / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

fn centroid_curve(points: &Arc<PointSet>, labels: &[Vec<usize>], cfg: &CsfConfig) -> Result<crate::estimator::CsfCurve> {
    let oracle = ComplexityOracle::Centroid(CentroidOracle::new(points.clone()));
    subsampled_csf(&points.to_dataset(), ClusterSource::Labels(labels), &oracle, cfg)
}

/// K chosen by every method on one trial, in [`METHODS`] order. One k-means
/// path over the points serves the CSF clusterings, the Gap data term and
/// the mixture fits.
pub fn run_trial(points: &PointSet, cfg: &BenchConfig, trial_seed: u64) -> Result<[usize; 4]> {
    let fits = kmeans_path(points.points(), cfg.kmax, seed::derive(trial_seed, 0))?;
    let labels: Vec<Vec<usize>> = fits.iter().map(|f| canonical_labels(&f.labels)).collect();
    let csf_cfg = CsfConfig {
        kmax: cfg.kmax,
        nsamples: cfg.csf_samples,
        seed: seed::derive(trial_seed, 1),
        sample_factor: 5,
        trim_parts: true,
    };
    let shared = Arc::new(points.clone());
    let curve = centroid_curve(&shared, &labels, &csf_cfg)?;
    let csf = match cfg.csf_rule {
        SelectionRule::LogRatio => {
            let reference = Arc::new(uniform_reference(points, seed::derive(trial_seed, 4))?);
            let ref_fits = kmeans_path(reference.points(), cfg.kmax, seed::derive(trial_seed, 5))?;
            let ref_labels: Vec<Vec<usize>> = ref_fits.iter().map(|f| canonical_labels(&f.labels)).collect();
            let ref_curve = centroid_curve(&reference, &ref_labels, &csf_cfg)?;
            select_k_logratio(&curve, &ref_curve)?.k
        }
        _ => select_k_one_std(&curve).k,
    };
    let gap = gap_from_fits(points, &fits, cfg.gap_refs, seed::derive(trial_seed, 2))?.0.k;
    let path = mixtures_from_fits(points, &fits);
    let aic = select_from_path(InfoCriterion::Aic, &path, points.len()).k;
    let bic = select_from_path(InfoCriterion::Bic, &path, points.len()).k;
    Ok([csf, gap, aic, bic])
}

/// Trial `t` uses the same generator seed at every spacing, so spacings
/// differ only in the cluster offsets.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.spacings.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let picks = jobs
        .par_iter()
        .map(|&(s, t)| {
            let trial_seed = seed::derive(cfg.seed, t as u64);
            let (points, _) = gen_mixture(cfg.spacings[s], cfg.points_per_cluster, trial_seed)?;
            run_trial(&points, cfg, seed::derive(trial_seed, s as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let selections: Vec<Vec<[usize; 4]>> = picks.chunks(cfg.trials).map(<[_]>::to_vec).collect();
    let mut rows = Vec::new();
    for (si, &spacing) in cfg.spacings.iter().enumerate() {
        for (mi, &method) in METHODS.iter().enumerate() {
            let chosen: Vec<usize> = selections[si].iter().map(|p| p[mi]).collect();
            let hits: Vec<bool> = chosen.iter().map(|&k| k == TRUE_K).collect();
            let mut histogram = vec![0; cfg.kmax];
            chosen.iter().for_each(|&k| histogram[k - 1] += 1);
            let accuracy = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
            let (ci_lo, ci_hi) = bootstrap_ci(&hits, cfg.bootstrap, seed::derive2(cfg.seed, si as u64, 0xB00 + mi as u64));
            rows.push(BenchRow {
                method,
                spacing,
                accuracy,
                ci_lo,
                ci_hi,
                histogram,
            });
        }
    }
    Ok(BenchReport { rows, selections })
}
