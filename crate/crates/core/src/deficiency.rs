//! Complexity oracles and optimality deficiencies.
//!
//! The optimality deficiency of a multiset `A` for a member `x` is
//! `K(A) + log2|A| - K(x)`: how far `A` falls short of being a sufficient
//! statistic for `x`. Parts with fewer than two members have deficiency zero.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::compression::Compressor;
use crate::data::{encode_multiset, EncodeMode, Item, ItemId, PointSet};
use crate::error::{Error, Result};

/// How a [`TableOracle`] answers for a multiset it has no explicit entry for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRule {
    /// Missing sets are an error.
    Strict,
    /// `K(A) = max_{x in A} K(x)`.
    #[default]
    MaxItem,
    /// `K(A) = sum_{x in A} K(x)`.
    Sum,
}

/// Explicit complexities for items and (optionally) multisets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableOracle {
    items: HashMap<ItemId, f64>,
    sets: HashMap<Vec<ItemId>, f64>,
    rule: SetRule,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    items: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    sets: Vec<SetEntry>,
    #[serde(default)]
    set_rule: SetRule,
}

#[derive(Serialize, Deserialize)]
struct SetEntry {
    members: Vec<u64>,
    k: f64,
}

fn set_key(ids: impl IntoIterator<Item = ItemId>) -> Vec<ItemId> {
    let mut key: Vec<ItemId> = ids.into_iter().collect();
    key.sort_unstable();
    key
}

impl TableOracle {
    pub fn new(rule: SetRule) -> Self {
        TableOracle {
            rule,
            ..Default::default()
        }
    }

    /// Items `0..n` with the given complexities.
    pub fn from_item_values(values: &[f64], rule: SetRule) -> Self {
        let mut t = TableOracle::new(rule);
        for (i, &v) in values.iter().enumerate() {
            t.set_item(ItemId(i as u64), v);
        }
        t
    }

    pub fn set_item(&mut self, id: ItemId, k: f64) {
        self.items.insert(id, k);
    }

    pub fn set_multiset(&mut self, members: impl IntoIterator<Item = ItemId>, k: f64) {
        self.sets.insert(set_key(members), k);
    }

    pub fn rule(&self) -> SetRule {
        self.rule
    }

    /// Ids known to the table, ascending.
    pub fn item_ids(&self) -> Vec<ItemId> {
        let mut ids: Vec<ItemId> = self.items.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn item_k(&self, id: ItemId) -> Result<f64> {
        self.items
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Oracle(format!("no complexity for item {id}")))
    }

    pub fn set_k(&self, members: &[ItemId]) -> Result<f64> {
        if let Some(&k) = self.sets.get(&set_key(members.iter().copied())) {
            return Ok(k);
        }
        match self.rule {
            SetRule::Strict => Err(Error::Oracle(format!(
                "no complexity for multiset {members:?}"
            ))),
            SetRule::MaxItem => members
                .iter()
                .map(|&id| self.item_k(id))
                .try_fold(f64::NEG_INFINITY, |acc, k| k.map(|k| acc.max(k))),
            SetRule::Sum => members.iter().map(|&id| self.item_k(id)).sum(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        let mut t = TableOracle::new(file.set_rule);
        for (key, k) in file.items {
            let id: u64 = key
                .parse()
                .map_err(|_| Error::Oracle(format!("item key {key:?} is not an integer id")))?;
            check_value(k)?;
            t.set_item(ItemId(id), k);
        }
        for e in file.sets {
            check_value(e.k)?;
            t.set_multiset(e.members.into_iter().map(ItemId), e.k);
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TableOracle::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut sets: Vec<SetEntry> = self
            .sets
            .iter()
            .map(|(m, &k)| SetEntry {
                members: m.iter().map(|id| id.0).collect(),
                k,
            })
            .collect();
        sets.sort_by(|a, b| a.members.cmp(&b.members));
        let file = TableFile {
            items: self.items.iter().map(|(id, &k)| (id.to_string(), k)).collect(),
            sets,
            set_rule: self.rule,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

fn check_value(k: f64) -> Result<()> {
    if k.is_finite() && k >= 0.0 {
        Ok(())
    } else {
        Err(Error::Oracle(format!("complexity {k} must be finite and >= 0")))
    }
}

/// Unit in which compressed lengths enter the deficiency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    /// Bytes times eight, commensurate with `log2|A|`.
    #[default]
    Bits,
    /// Raw byte counts mixed with `log2|A|`.
    Bytes,
}

/// `K(x) ~ Z(x)`, `K(A) ~ Z(encode(A))`.
pub struct CompressorOracle {
    compressor: Arc<dyn Compressor>,
    mode: EncodeMode,
    unit: LengthUnit,
    // keyed by id: items sharing an id must share bytes
    cache: Mutex<HashMap<ItemId, usize>>,
}

impl std::fmt::Debug for CompressorOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompressorOracle")
            .field("compressor", &self.compressor.name())
            .field("mode", &self.mode)
            .field("unit", &self.unit)
            .finish()
    }
}

impl CompressorOracle {
    pub fn new(compressor: Arc<dyn Compressor>, mode: EncodeMode, unit: LengthUnit) -> Self {
        CompressorOracle {
            compressor,
            mode,
            unit,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn compressor(&self) -> &dyn Compressor {
        self.compressor.as_ref()
    }

    fn scale(&self, bytes: usize) -> f64 {
        match self.unit {
            LengthUnit::Bits => 8.0 * bytes as f64,
            LengthUnit::Bytes => bytes as f64,
        }
    }

    pub fn item_k(&self, x: &Item) -> Result<f64> {
        if let Some(&z) = self.cache.lock().expect("cache poisoned").get(&x.id()) {
            return Ok(self.scale(z));
        }
        let z = self.compressor.compressed_len(x.bytes())?;
        self.cache.lock().expect("cache poisoned").insert(x.id(), z);
        Ok(self.scale(z))
    }

    pub fn set_k(&self, part: &[&Item]) -> Result<f64> {
        let enc = encode_multiset(part.iter().copied(), self.mode);
        Ok(self.scale(self.compressor.compressed_len(&enc)?))
    }
}

/// Supplies `K(A) - K(x)` as the Euclidean distance from point `x` to the
/// centroid of `A`. Item ids index into the point set.
#[derive(Debug, Clone)]
pub struct CentroidOracle {
    points: Arc<PointSet>,
    include_log: bool,
}

impl CentroidOracle {
    pub fn new(points: Arc<PointSet>) -> Self {
        CentroidOracle {
            points,
            include_log: true,
        }
    }

    /// Drop the `log2|A|` term from the deficiency.
    pub fn without_log_term(mut self) -> Self {
        self.include_log = false;
        self
    }

    pub fn includes_log_term(&self) -> bool {
        self.include_log
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    fn point(&self, x: &Item) -> Result<&[f64]> {
        let i = x.id().0 as usize;
        if i >= self.points.len() {
            return Err(Error::Oracle(format!(
                "item {} is not an index into a point set of {} points",
                x.id(),
                self.points.len()
            )));
        }
        Ok(self.points.point(i))
    }

    /// Distances from each member to the centroid of `part`.
    pub fn centroid_distances(&self, part: &[&Item]) -> Result<Vec<f64>> {
        let pts = part.iter().map(|x| self.point(x)).collect::<Result<Vec<_>>>()?;
        let d = self.points.dim();
        let mut centroid = vec![0.0; d];
        for p in &pts {
            for (c, v) in centroid.iter_mut().zip(p.iter()) {
                *c += v;
            }
        }
        let inv = 1.0 / pts.len() as f64;
        centroid.iter_mut().for_each(|c| *c *= inv);
        Ok(pts
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&centroid)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }
}

#[derive(Debug)]
pub enum ComplexityOracle {
    Table(TableOracle),
    Compressor(CompressorOracle),
    Centroid(CentroidOracle),
}

impl From<TableOracle> for ComplexityOracle {
    fn from(t: TableOracle) -> Self {
        ComplexityOracle::Table(t)
    }
}

impl From<CompressorOracle> for ComplexityOracle {
    fn from(c: CompressorOracle) -> Self {
        ComplexityOracle::Compressor(c)
    }
}

impl From<CentroidOracle> for ComplexityOracle {
    fn from(c: CentroidOracle) -> Self {
        ComplexityOracle::Centroid(c)
    }
}

impl ComplexityOracle {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ComplexityOracle::Table(_) => "table",
            ComplexityOracle::Compressor(_) => "compressor",
            ComplexityOracle::Centroid(_) => "centroid",
        }
    }

    /// `delta(part, x)` for every member of `part`, in order.
    pub fn deficiencies(&self, part: &[&Item]) -> Result<Vec<f64>> {
        let n = part.len();
        if n < 2 {
            return Ok(vec![0.0; n]);
        }
        let log_n = (n as f64).log2();
        match self {
            ComplexityOracle::Table(t) => {
                let ids: Vec<ItemId> = part.iter().map(|x| x.id()).collect();
                let ka = t.set_k(&ids)?;
                ids.iter().map(|&id| Ok(ka + log_n - t.item_k(id)?)).collect()
            }
            ComplexityOracle::Compressor(c) => {
                let ka = c.set_k(part)?;
                part.iter().map(|x| Ok(ka + log_n - c.item_k(x)?)).collect()
            }
            ComplexityOracle::Centroid(c) => {
                let extra = if c.include_log { log_n } else { 0.0 };
                Ok(c.centroid_distances(part)?.into_iter().map(|d| d + extra).collect())
            }
        }
    }
}

/// `delta(A, x)` for a single member.
pub fn delta(oracle: &ComplexityOracle, part: &[&Item], x: &Item) -> Result<f64> {
    let pos = part
        .iter()
        .position(|y| y.id() == x.id())
        .ok_or_else(|| Error::domain(format!("item {} is not a member of the multiset", x.id())))?;
    Ok(oracle.deficiencies(part)?[pos])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficiencyStats {
    pub values: Vec<f64>,
    pub mean: f64,
    /// `(1/|A|) * sqrt(sum (delta - mean)^2)`.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub bandwidth: f64,
}

impl DeficiencyStats {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("deficiency statistics of an empty multiset"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        // guard float drift on near-constant inputs
        let mean = mean.clamp(min, max);
        Ok(DeficiencyStats {
            mean,
            std: ss.sqrt() / n,
            min,
            max,
            bandwidth: max - min,
            values,
        })
    }
}

pub fn deficiency_stats(oracle: &ComplexityOracle, part: &[&Item]) -> Result<DeficiencyStats> {
    DeficiencyStats::from_values(oracle.deficiencies(part)?)
}

/// Indices of the values lying within one standard deviation of the mean.
/// Never empty for nonempty input: if nothing qualifies, the values nearest
/// the mean are kept.
pub fn trim_indices(values: &[f64]) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let stats = DeficiencyStats::from_values(values.to_vec()).expect("nonempty");
    let tol = 1e-12 * (1.0 + stats.mean.abs().max(stats.max.abs()));
    let dev: Vec<f64> = values.iter().map(|v| (v - stats.mean).abs()).collect();
    let kept: Vec<usize> = (0..values.len()).filter(|&i| dev[i] <= stats.std + tol).collect();
    if !kept.is_empty() {
        return kept;
    }
    let nearest = dev.iter().copied().fold(f64::INFINITY, f64::min);
    (0..values.len()).filter(|&i| dev[i] <= nearest + tol).collect()
}

/// The sub-multiset of `part` kept by one-sigma trimming of its deficiencies.
pub fn sigma_trim<'a>(oracle: &ComplexityOracle, part: &[&'a Item]) -> Result<Vec<&'a Item>> {
    if part.is_empty() {
        return Err(Error::domain("sigma_trim of an empty multiset"));
    }
    let values = oracle.deficiencies(part)?;
    Ok(trim_indices(&values).into_iter().map(|i| part[i]).collect())
}
