//! Compressed-length functions and the normalized compression distance.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, Item};
use crate::error::{Error, Result};
use crate::report::{fmt_sig9, Tabular};

/// A lossless compressor reduced to its length function.
///
/// Implementations must be deterministic and usable from several threads.
pub trait Compressor: Send + Sync {
    fn name(&self) -> &str;

    /// Compressed size of `data` in whole bytes.
    fn compressed_len(&self, data: &[u8]) -> Result<usize>;
}

impl<C: Compressor + ?Sized> Compressor for Arc<C> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        (**self).compressed_len(data)
    }
}

impl<C: Compressor + ?Sized> Compressor for &C {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        (**self).compressed_len(data)
    }
}

/// zlib-framed DEFLATE.
#[derive(Debug, Clone, Copy)]
pub struct Deflate {
    level: u32,
}

impl Deflate {
    pub fn new(level: u32) -> Self {
        Deflate { level: level.min(9) }
    }

    pub fn best() -> Self {
        Deflate::new(9)
    }
}

impl Default for Deflate {
    fn default() -> Self {
        Deflate::best()
    }
}

impl Compressor for Deflate {
    fn name(&self) -> &str {
        "deflate"
    }

    fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        let mut enc = ZlibEncoder::new(Vec::with_capacity(data.len() / 2 + 16), Compression::new(self.level));
        let wrap = |source| Error::Compressor {
            name: self.name().to_string(),
            source,
        };
        enc.write_all(data).map_err(wrap)?;
        Ok(enc.finish().map_err(wrap)?.len())
    }
}

/// `Z(s) = |s|`. Only meaningful as an arithmetic fixture.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Compressor for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        Ok(data.len())
    }
}

/// Wraps a compressor and counts backend invocations.
#[derive(Debug, Default)]
pub struct Counting<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C> Counting<C> {
    pub fn new(inner: C) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<C: Compressor> Compressor for Counting<C> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.compressed_len(data)
    }
}

pub const DEFAULT_COMPRESSOR: &str = "deflate";

/// Look up a compressor by name: `deflate` (level 9), `deflate:N`, `identity`.
pub fn compressor_by_name(name: &str) -> Result<Arc<dyn Compressor>> {
    match name {
        "deflate" | "zlib" => Ok(Arc::new(Deflate::best())),
        "identity" => Ok(Arc::new(Identity)),
        _ => {
            if let Some(level) = name.strip_prefix("deflate:") {
                let level: u32 = level
                    .parse()
                    .map_err(|_| Error::UnknownCompressor(name.to_string()))?;
                return Ok(Arc::new(Deflate::new(level)));
            }
            Err(Error::UnknownCompressor(name.to_string()))
        }
    }
}

pub fn z_len(c: &dyn Compressor, x: &[u8]) -> Result<usize> {
    c.compressed_len(x)
}

fn concat(x: &[u8], y: &[u8]) -> Vec<u8> {
    let mut xy = Vec::with_capacity(x.len() + y.len());
    xy.extend_from_slice(x);
    xy.extend_from_slice(y);
    xy
}

/// `min(Z(xy), Z(yx))`; a single compression when `x == y`.
fn pair_len(c: &dyn Compressor, x: &[u8], y: &[u8]) -> Result<usize> {
    let xy = z_len(c, &concat(x, y))?;
    if x == y {
        return Ok(xy);
    }
    Ok(xy.min(z_len(c, &concat(y, x))?))
}

fn ncd_from_lens(zx: usize, zy: usize, zpair: usize) -> Result<f64> {
    let (lo, hi) = if zx <= zy { (zx, zy) } else { (zy, zx) };
    if hi == 0 {
        return Err(Error::UndefinedDistance(
            "both compressed lengths are zero".into(),
        ));
    }
    Ok((zpair as f64 - lo as f64).max(0.0) / hi as f64)
}

/// Normalized compression distance, symmetrized over both concatenation
/// orders.
pub fn ncd(c: &dyn Compressor, x: &Item, y: &Item) -> Result<f64> {
    if x.is_empty() && y.is_empty() {
        return Err(Error::UndefinedDistance("both items are empty".into()));
    }
    let zx = z_len(c, x.bytes())?;
    let zy = z_len(c, y.bytes())?;
    ncd_from_lens(zx, zy, pair_len(c, x.bytes(), y.bytes())?)
}

/// Work done while filling an [`NcdMatrix`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NcdStats {
    /// `Z(x_i)`, once per item.
    pub singleton_jobs: usize,
    /// Unordered off-diagonal pairs, once each.
    pub pair_jobs: usize,
    /// Diagonal self-pairs `Z(x_i x_i)`.
    pub self_jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NcdMatrix {
    n: usize,
    compressor: String,
    entries: Vec<Vec<f64>>,
    #[serde(skip)]
    singleton_lens: Vec<usize>,
    #[serde(skip)]
    stats: NcdStats,
}

impl NcdMatrix {
    /// Wrap precomputed distances (e.g. loaded from disk).
    pub fn from_entries(entries: Vec<Vec<f64>>, compressor: impl Into<String>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::domain("distance matrix is empty"));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    line: i + 1,
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::domain(format!("entry ({i},{j}) = {v} is not a finite nonnegative distance")));
                }
                if entries[j][i] != v {
                    return Err(Error::domain(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(NcdMatrix {
            n,
            compressor: compressor.into(),
            entries,
            singleton_lens: Vec::new(),
            stats: NcdStats::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn compressor(&self) -> &str {
        &self.compressor
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// Cached `Z(x_i)` in bytes; empty for matrices built by
    /// [`NcdMatrix::from_entries`].
    pub fn singleton_lens(&self) -> &[usize] {
        &self.singleton_lens
    }

    pub fn stats(&self) -> NcdStats {
        self.stats
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Envelope {
            compressor: String,
            entries: Vec<Vec<f64>>,
        }
        let env: Envelope = serde_json::from_str(text)?;
        NcdMatrix::from_entries(env.entries, env.compressor)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let points = crate::data::parse_points_csv(text)?;
        NcdMatrix::from_entries(points.points().to_vec(), "unknown")
    }
}

impl Tabular for NcdMatrix {
    fn header(&self) -> Option<String> {
        None
    }

    fn rows(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|&v| fmt_sig9(v)).collect::<Vec<_>>().join(","))
            .collect()
    }
}

/// Pairwise NCD over a dataset. Each `Z(x_i)` is computed once and each
/// unordered pair once; pairs are evaluated in parallel and every cell depends
/// only on its inputs, so the result does not depend on scheduling.
pub fn ncd_matrix(c: &dyn Compressor, dataset: &Dataset) -> Result<NcdMatrix> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::domain("ncd_matrix needs at least one item"));
    }
    let items = dataset.items();
    let singleton_lens = items
        .par_iter()
        .map(|it| z_len(c, it.bytes()))
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (&items[i], &items[j]);
            if x.is_empty() && y.is_empty() {
                return Err(Error::UndefinedDistance(format!("items {i} and {j} are both empty")));
            }
            let zp = pair_len(c, x.bytes(), y.bytes())?;
            ncd_from_lens(singleton_lens[i], singleton_lens[j], zp)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        entries[i][j] = v;
        entries[j][i] = v;
    }
    Ok(NcdMatrix {
        n,
        compressor: c.name().to_string(),
        entries,
        singleton_lens,
        stats: NcdStats {
            singleton_jobs: n,
            pair_jobs: n * (n - 1) / 2,
            self_jobs: n,
        },
    })
}

/// Cell-by-cell recomputation through [`ncd`]; no sharing between cells.
pub fn ncd_matrix_uncached(c: &dyn Compressor, dataset: &Dataset) -> Result<NcdMatrix> {
    let items = dataset.items();
    let n = items.len();
    if n == 0 {
        return Err(Error::domain("ncd_matrix needs at least one item"));
    }
    let mut entries = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = ncd(c, &items[i], &items[j])?;
            entries[i][j] = v;
            entries[j][i] = v;
        }
    }
    NcdMatrix::from_entries(entries, c.name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bytes(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random()).collect()
    }

    #[test]
    fn deflate_empty_header_is_pinned() {
        // zlib header (2) + empty final block (2) + adler32 (4)
        assert_eq!(z_len(&Deflate::best(), &[]).unwrap(), 8);
    }

    #[test]
    fn deflate_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Deflate::best();
        for _ in 0..100 {
            let len = rng.random_range(0..512);
            let x = random_bytes(&mut rng, len);
            assert_eq!(z_len(&c, &x).unwrap(), z_len(&c, &x).unwrap());
        }
    }

    #[test]
    fn deflate_compresses_zeros() {
        let x = vec![0u8; 1_000_000];
        assert!(z_len(&Deflate::best(), &x).unwrap() < x.len() / 100);
    }

    #[test]
    fn identity_ncd_is_one_for_equal_lengths() {
        let x = Item::new(0, b"abcdefgh".to_vec());
        let y = Item::new(1, b"12345678".to_vec());
        assert_eq!(ncd(&Identity, &x, &y).unwrap(), 1.0);
    }

    #[test]
    fn both_empty_is_undefined() {
        let e = Item::new(0, Vec::<u8>::new());
        assert!(matches!(ncd(&Deflate::best(), &e, &e), Err(Error::UndefinedDistance(_))));
    }

    #[test]
    fn one_by_one_matrix() {
        let ds = Dataset::from_byte_strings(vec![b"hello".to_vec()]);
        let m = ncd_matrix(&Deflate::best(), &ds).unwrap();
        assert_eq!(m.n(), 1);
    }

    #[test]
    fn ncd_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Deflate::best();
        for _ in 0..20 {
            let x = Item::new(0, random_bytes(&mut rng, 300));
            let mut yb = x.bytes().to_vec();
            yb.truncate(150);
            yb.extend(random_bytes(&mut rng, 100));
            let y = Item::new(1, yb);
            assert_eq!(ncd(&c, &x, &y).unwrap(), ncd(&c, &y, &x).unwrap());
        }
    }

    #[test]
    fn matrix_matches_pairwise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = Dataset::from_byte_strings((0..3).map(|_| random_bytes(&mut rng, 200)));
        let c = Deflate::best();
        let m = ncd_matrix(&c, &ds).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), ncd(&c, &ds.items()[i], &ds.items()[j]).unwrap());
            }
        }
        assert_eq!(m.entries(), ncd_matrix_uncached(&c, &ds).unwrap().entries());
    }

    #[test]
    fn unknown_compressor_name() {
        assert!(compressor_by_name("lzma-9000").is_err());
        assert_eq!(compressor_by_name("deflate:6").unwrap().name(), "deflate");
    }
}
