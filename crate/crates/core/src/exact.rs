//! Brute-force cluster structure function over all k-partitions of a small
//! multiset.
//!
//! Partitions are streamed as restricted-growth strings in lexicographic
//! order; nothing is materialized beyond a per-subset summary table of size
//! `2^n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Item};
use crate::deficiency::{trim_indices, ComplexityOracle, DeficiencyStats};
use crate::error::{Error, Result};
use crate::report::{fmt_sig9, Tabular};

pub const MAX_EXACT_ITEMS: usize = 12;

/// Assignment of `n` items to `k` nonempty parts, labels `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Validates that labels are `0..k` with every label used.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let k = assignment.iter().map(|&a| a + 1).max().unwrap_or(0);
        let mut seen = vec![false; k];
        for &a in &assignment {
            seen[a] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::domain("partition has an empty part"));
        }
        Ok(Partition { assignment, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Member indices of each part, ascending.
    pub fn parts(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.k];
        for (i, &a) in self.assignment.iter().enumerate() {
            parts[a].push(i);
        }
        parts
    }

    fn masks(&self) -> Vec<u32> {
        let mut masks = vec![0u32; self.k];
        for (i, &a) in self.assignment.iter().enumerate() {
            masks[a] |= 1 << i;
        }
        masks
    }
}

/// Lexicographic stream of restricted-growth strings with exactly `k` blocks.
#[derive(Debug, Clone)]
pub struct Partitions {
    n: usize,
    k: usize,
    current: Option<Vec<usize>>,
}

pub fn partitions(n: usize, k: usize) -> Result<Partitions> {
    if n > MAX_EXACT_ITEMS {
        return Err(Error::SizeLimit {
            what: "items",
            got: n,
            max: MAX_EXACT_ITEMS,
        });
    }
    if k == 0 || k > n {
        return Err(Error::domain(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let first = (0..n).map(|i| i.saturating_sub(n - k)).collect();
    Ok(Partitions {
        n,
        k,
        current: Some(first),
    })
}

impl Partitions {
    fn advance(&mut self, a: &mut [usize]) -> bool {
        let (n, k) = (self.n, self.k);
        let mut prefix_max = vec![0usize; n];
        for i in 1..n {
            prefix_max[i] = prefix_max[i - 1].max(a[i - 1]);
        }
        for i in (1..n).rev() {
            let v = a[i] + 1;
            let pm = prefix_max[i];
            if v > pm + 1 || v > k - 1 {
                continue;
            }
            let m = pm.max(v);
            let missing = k - 1 - m;
            let rest = n - 1 - i;
            if rest < missing {
                continue;
            }
            a[i] = v;
            for (off, slot) in a[i + 1..].iter_mut().enumerate() {
                let from_end = rest - off;
                *slot = if from_end <= missing { m + 1 + missing - from_end } else { 0 };
            }
            return true;
        }
        false
    }
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let mut a = self.current.take()?;
        let out = Partition {
            assignment: a.clone(),
            k: self.k,
        };
        if self.advance(&mut a) {
            self.current = Some(a);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// Sum of part bandwidths.
    BandwidthSum,
    /// Mean over parts of the mean deficiency.
    MeanAvg,
    /// Largest bandwidth among the parts restricted to the one-sigma core of
    /// the whole multiset.
    SigmaMax,
}

impl CriterionKind {
    pub fn name(&self) -> &'static str {
        match self {
            CriterionKind::BandwidthSum => "bandwidth_sum",
            CriterionKind::MeanAvg => "mean_avg",
            CriterionKind::SigmaMax => "sigma_max",
        }
    }

    pub const ALL: [CriterionKind; 3] = [
        CriterionKind::BandwidthSum,
        CriterionKind::MeanAvg,
        CriterionKind::SigmaMax,
    ];
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "bandwidth_sum" => Ok(CriterionKind::BandwidthSum),
            "mean_avg" => Ok(CriterionKind::MeanAvg),
            "sigma_max" => Ok(CriterionKind::SigmaMax),
            _ => Err(Error::domain(format!("unknown criterion {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Summary {
    bandwidth: f64,
    mean: f64,
}

fn members_of(items: &[Item], mask: u32) -> Vec<&Item> {
    (0..items.len()).filter(|&i| mask >> i & 1 == 1).map(|i| &items[i]).collect()
}

fn summarize(oracle: &ComplexityOracle, items: &[Item], mask: u32) -> Result<Summary> {
    let members = members_of(items, mask);
    if members.is_empty() {
        return Ok(Summary::default());
    }
    let s = DeficiencyStats::from_values(oracle.deficiencies(&members)?)?;
    Ok(Summary {
        bandwidth: s.bandwidth,
        mean: s.mean,
    })
}

/// Mask of the items kept by one-sigma trimming of `delta(S, x)`.
fn core_mask(oracle: &ComplexityOracle, items: &[Item]) -> Result<u32> {
    let all: Vec<&Item> = items.iter().collect();
    let values = oracle.deficiencies(&all)?;
    Ok(trim_indices(&values).into_iter().fold(0u32, |m, i| m | 1 << i))
}

fn combine(kind: CriterionKind, parts: impl Iterator<Item = Summary>, k: usize) -> f64 {
    match kind {
        CriterionKind::BandwidthSum => parts.fold(0.0, |acc, s| acc + s.bandwidth),
        CriterionKind::MeanAvg => parts.fold(0.0, |acc, s| acc + s.mean) / k as f64,
        CriterionKind::SigmaMax => parts.fold(0.0, |acc: f64, s| acc.max(s.bandwidth)),
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("exact CSF of an empty dataset"));
    }
    if n > MAX_EXACT_ITEMS {
        return Err(Error::SizeLimit {
            what: "items",
            got: n,
            max: MAX_EXACT_ITEMS,
        });
    }
    Ok(())
}

/// Criterion value `f(pi)` of one partition.
pub fn criterion(partition: &Partition, dataset: &Dataset, oracle: &ComplexityOracle, kind: CriterionKind) -> Result<f64> {
    let items = dataset.items();
    if partition.n() != items.len() {
        return Err(Error::domain(format!(
            "partition covers {} items, dataset has {}",
            partition.n(),
            items.len()
        )));
    }
    check_size(items.len())?;
    let core = match kind {
        CriterionKind::SigmaMax => core_mask(oracle, items)?,
        _ => u32::MAX,
    };
    let summaries = partition
        .masks()
        .into_iter()
        .map(|m| summarize(oracle, items, m & core))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(kind, summaries.into_iter(), partition.k()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactCsfCurve {
    pub n: usize,
    pub kind: CriterionKind,
    /// `values[k - 1] = H(k)`.
    pub values: Vec<f64>,
    /// One minimizing partition per k; first in enumeration order on ties.
    pub witnesses: Vec<Vec<usize>>,
    /// Size of the one-sigma core (`sigma_max` only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub core_size: Option<usize>,
}

impl ExactCsfCurve {
    pub fn value(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn witness(&self, k: usize) -> Partition {
        Partition::new(self.witnesses[k - 1].clone()).expect("witness is a valid partition")
    }
}

impl Tabular for ExactCsfCurve {
    fn header(&self) -> Option<String> {
        Some("k,H,witness".into())
    }

    fn rows(&self) -> Vec<String> {
        self.values
            .iter()
            .zip(&self.witnesses)
            .enumerate()
            .map(|(i, (v, w))| {
                let w: Vec<String> = w.iter().map(|a| a.to_string()).collect();
                format!("{},{},{}", i + 1, fmt_sig9(*v), w.join(" "))
            })
            .collect()
    }
}

pub fn exact_csf(dataset: &Dataset, oracle: &ComplexityOracle, kind: CriterionKind) -> Result<ExactCsfCurve> {
    let items = dataset.items();
    let n = items.len();
    check_size(n)?;
    let table = (0..1u32 << n)
        .into_par_iter()
        .map(|mask| summarize(oracle, items, mask))
        .collect::<Result<Vec<_>>>()?;
    let core = match kind {
        CriterionKind::SigmaMax => core_mask(oracle, items)?,
        _ => u32::MAX,
    };

    let per_k = (1..=n)
        .into_par_iter()
        .map(|k| -> Result<(f64, Vec<usize>)> {
            let mut best: Option<(f64, Partition)> = None;
            for p in partitions(n, k)? {
                let v = combine(kind, p.masks().into_iter().map(|m| table[(m & core) as usize]), k);
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, p));
                }
            }
            let (v, p) = best.expect("at least one partition");
            Ok((v, p.assignment))
        })
        .collect::<Result<Vec<_>>>()?;

    let (values, witnesses) = per_k.into_iter().unzip();
    Ok(ExactCsfCurve {
        n,
        kind,
        values,
        witnesses,
        core_size: (kind == CriterionKind::SigmaMax).then(|| core.count_ones() as usize),
    })
}
