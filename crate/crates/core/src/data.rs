//! Items, datasets and point sets, plus IDX and CSV ingestion.
//!
//! A [`Dataset`] is an ordered multiset: two items may carry identical bytes
//! and still be distinct members, told apart by their [`ItemId`].

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable identifier of an item inside a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u64);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An opaque byte string with an identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    id: ItemId,
    bytes: Arc<[u8]>,
}

impl Item {
    pub fn new(id: u64, bytes: impl Into<Arc<[u8]>>) -> Self {
        Item {
            id: ItemId(id),
            bytes: bytes.into(),
        }
    }

    pub fn id(&self) -> ItemId {
        self.id
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    items: Vec<Item>,
}

impl Dataset {
    pub fn new(items: Vec<Item>) -> Self {
        Dataset { items }
    }

    /// Items numbered `0..n` in the given order.
    pub fn from_byte_strings<I, B>(strings: I) -> Self
    where
        I: IntoIterator<Item = B>,
        B: Into<Arc<[u8]>>,
    {
        Dataset {
            items: strings
                .into_iter()
                .enumerate()
                .map(|(i, b)| Item::new(i as u64, b))
                .collect(),
        }
    }

    /// `n` empty items with ids `0..n`; useful with oracles that ignore bytes.
    pub fn anonymous(n: usize) -> Self {
        Dataset::from_byte_strings((0..n).map(|_| Vec::<u8>::new()))
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Item> {
        self.items.iter()
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Item;
    type IntoIter = std::slice::Iter<'a, Item>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// Real vectors of one common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl PointSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(1);
        if dim == 0 {
            return Err(Error::domain("points must have dimension >= 1"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Dimension {
                    line: i + 1,
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("point {i} has a non-finite coordinate")));
            }
        }
        Ok(PointSet { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Per-axis `(min, max)` over all points.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|d| {
                self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[d]), hi.max(p[d]))
                })
            })
            .collect()
    }

    /// A dataset whose item `i` stands for point `i` (ids are indices, bytes
    /// are the little-endian coordinates).
    pub fn to_dataset(&self) -> Dataset {
        Dataset::from_byte_strings(
            self.points
                .iter()
                .map(|p| p.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()),
        )
    }
}

/// How a multiset is serialized into one byte string for compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    /// Self-delimiting `1^{|x|} 0 x` per item, bit-packed.
    Prefix,
    /// Raw concatenation in sequence order.
    #[default]
    Concat,
}

struct BitWriter {
    out: Vec<u8>,
    acc: u8,
    used: u8,
}

impl BitWriter {
    fn with_capacity(bytes: usize) -> Self {
        BitWriter {
            out: Vec::with_capacity(bytes),
            acc: 0,
            used: 0,
        }
    }

    fn push(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | bit as u8;
        self.used += 1;
        if self.used == 8 {
            self.out.push(self.acc);
            self.acc = 0;
            self.used = 0;
        }
    }

    fn push_byte(&mut self, b: u8) {
        if self.used == 0 {
            self.out.push(b);
            return;
        }
        for i in (0..8).rev() {
            self.push((b >> i) & 1 == 1);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.acc <<= 8 - self.used;
            self.out.push(self.acc);
        }
        self.out
    }
}

pub fn encode_multiset<'a, I>(items: I, mode: EncodeMode) -> Vec<u8>
where
    I: IntoIterator<Item = &'a Item>,
{
    match mode {
        EncodeMode::Concat => {
            let mut out = Vec::new();
            for it in items {
                out.extend_from_slice(it.bytes());
            }
            out
        }
        EncodeMode::Prefix => {
            let mut w = BitWriter::with_capacity(64);
            for it in items {
                for _ in 0..it.len() * 8 {
                    w.push(true);
                }
                w.push(false);
                for &b in it.bytes() {
                    w.push_byte(b);
                }
            }
            w.finish()
        }
    }
}

/// Inverse of [`encode_multiset`] in prefix mode.
///
/// The zero padding of the final byte is indistinguishable from trailing
/// empty items, so the caller supplies the item count.
pub fn decode_prefix(bytes: &[u8], count: usize) -> Result<Vec<Vec<u8>>> {
    let total_bits = bytes.len() * 8;
    let bit = |pos: usize| (bytes[pos / 8] >> (7 - pos % 8)) & 1 == 1;
    let mut pos = 0usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ones = 0usize;
        loop {
            if pos >= total_bits {
                return Err(Error::Truncated {
                    what: "prefix code",
                    expected: pos / 8 + 1,
                    actual: bytes.len(),
                });
            }
            let b = bit(pos);
            pos += 1;
            if !b {
                break;
            }
            ones += 1;
        }
        if !ones.is_multiple_of(8) {
            return Err(Error::domain(format!("prefix length {ones} bits is not a whole byte count")));
        }
        let n = ones / 8;
        if pos + ones > total_bits {
            return Err(Error::Truncated {
                what: "prefix code payload",
                expected: (pos + ones).div_ceil(8),
                actual: bytes.len(),
            });
        }
        let mut item = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = 0u8;
            for _ in 0..8 {
                b = (b << 1) | bit(pos) as u8;
                pos += 1;
            }
            item.push(b);
        }
        out.push(item);
    }
    Ok(out)
}

const IDX_U8_1D: u32 = 0x0000_0801;
const IDX_U8_3D: u32 = 0x0000_0803;

/// Parse an in-memory IDX file of unsigned bytes.
///
/// Magic `0x00000803` yields one item per image; `0x00000801` one single-byte
/// item per entry.
pub fn parse_idx(buf: &[u8]) -> Result<Dataset> {
    let be_u32 = |off: usize| -> Result<u32> {
        buf.get(off..off + 4)
            .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
            .ok_or(Error::Truncated {
                what: "IDX header",
                expected: off + 4,
                actual: buf.len(),
            })
    };
    let magic = be_u32(0)?;
    let ndims = match magic {
        IDX_U8_1D => 1,
        IDX_U8_3D => 3,
        observed => return Err(Error::IdxMagic { observed }),
    };
    let dims = (0..ndims)
        .map(|i| be_u32(4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let count = dims[0];
    let item_len: usize = dims[1..].iter().product();
    let expected = count
        .checked_mul(item_len)
        .ok_or_else(|| Error::domain("IDX dimensions overflow"))?;
    let payload = &buf[header..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            what: "IDX payload",
            expected,
            actual: payload.len(),
        });
    }
    Ok(Dataset::from_byte_strings(
        payload[..expected].chunks(item_len.max(1)).take(count).map(|c| c.to_vec()),
    ))
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&buf)
}

/// Serialize images of identical shape as a 3-D IDX tensor.
pub fn encode_idx(images: &[Vec<u8>], rows: u32, cols: u32) -> Result<Vec<u8>> {
    let len = rows as usize * cols as usize;
    let mut out = Vec::with_capacity(16 + images.len() * len);
    out.extend_from_slice(&IDX_U8_3D.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    for (i, img) in images.iter().enumerate() {
        if img.len() != len {
            return Err(Error::domain(format!(
                "image {i} has {} bytes, expected {len}",
                img.len()
            )));
        }
        out.extend_from_slice(img);
    }
    Ok(out)
}

fn is_number(tok: &str) -> bool {
    tok.trim().parse::<f64>().is_ok()
}

/// Parse comma-separated points, one per line, with an optional header.
pub fn parse_points_csv(text: &str) -> Result<PointSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    if let Some((_, first)) = lines.peek() {
        if first.split(',').any(|t| !is_number(t)) {
            lines.next();
        }
    }
    let mut dim = None;
    let mut points = Vec::new();
    for (line, l) in lines {
        let mut row = Vec::new();
        for (col, tok) in l.split(',').enumerate() {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                token: tok.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: col + 1,
                    token: tok.to_string(),
                });
            }
            row.push(v);
        }
        let d = *dim.get_or_insert(row.len());
        if row.len() != d {
            return Err(Error::Dimension {
                line,
                expected: d,
                found: row.len(),
            });
        }
        points.push(row);
    }
    PointSet::new(points)
}

pub fn load_points_csv(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points_csv(&text)
}
