//! Ensemble selection of candidate cell segmentations: appearance scoring,
//! overlap buckets and a non-overlapping subset per bucket.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{fmt_sig9, Tabular};

pub const MAX_EXACT_BUCKET: usize = 20;
const ZERO_GUARD: f64 = 1e-12;

/// Row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::domain(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain(format!("pixel {i} = {} outside [0,1]", pixels[i])));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        assert!((0.0..=1.0).contains(&v), "intensity {v} outside [0,1]");
        self.pixels[y * self.width + x] = v;
    }

    /// Binary PGM (P5), 8- or 16-bit, scaled by maxval.
    pub fn from_pgm(buf: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
                if buf[pos] == b'#' {
                    while pos < buf.len() && buf[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::domain("truncated PGM header"));
            }
            fields.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(Error::domain(format!("not a binary PGM (magic {:?})", fields[0])));
        }
        let num = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::domain(format!("bad PGM {what} {s:?}")))
        };
        let (w, h, maxval) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
        if maxval == 0 || maxval > 65535 {
            return Err(Error::domain(format!("PGM maxval {maxval} out of range")));
        }
        pos += 1;
        let bytes_per = if maxval < 256 { 1 } else { 2 };
        let need = w * h * bytes_per;
        let data = buf.get(pos..).unwrap_or_default();
        if data.len() < need {
            return Err(Error::Truncated {
                what: "PGM raster",
                expected: need,
                actual: data.len(),
            });
        }
        let m = maxval as f64;
        let pixels = (0..w * h)
            .map(|i| {
                let v = if bytes_per == 1 {
                    data[i] as usize
                } else {
                    (data[2 * i] as usize) << 8 | data[2 * i + 1] as usize
                };
                (v as f64 / m).min(1.0)
            })
            .collect();
        GrayImage::new(w, h, pixels)
    }

    /// 8-bit P5.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|v| (v * 255.0).round() as u8));
        out
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        GrayImage::from_pgm(&buf)
    }
}

/// Local mean over a `window x window` neighborhood clipped to the image.
pub fn adaptive_threshold(img: &GrayImage, window: usize) -> Result<GrayImage> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::domain(format!("threshold window must be odd and >= 3, got {window}")));
    }
    let (w, h) = (img.width, img.height);
    // summed-area table with a zero border row and column
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += img.get(x, y);
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let r = window / 2;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] + sat[y0 * (w + 1) + x0];
            let v = s / ((x1 - x0) * (y1 - y0)) as f64;
            out.push(v.clamp(0.0, 1.0));
        }
    }
    GrayImage::new(w, h, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSegment {
    pub source_param: f64,
    /// `(x, y)` pixel coordinates.
    pub pixels: Vec<(usize, usize)>,
}

impl CandidateSegment {
    pub fn new(pixels: Vec<(usize, usize)>, source_param: f64) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::domain("candidate has no pixels"));
        }
        let mut seen = HashSet::with_capacity(pixels.len());
        if let Some(p) = pixels.iter().find(|p| !seen.insert(**p)) {
            return Err(Error::domain(format!("candidate repeats pixel {p:?}")));
        }
        Ok(CandidateSegment { source_param, pixels })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    fn set(&self) -> HashSet<(usize, usize)> {
        self.pixels.iter().copied().collect()
    }

    pub fn overlaps(&self, other: &CandidateSegment) -> bool {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        let s = large.set();
        small.pixels.iter().any(|p| s.contains(p))
    }
}

#[derive(Debug, Deserialize)]
struct RawCandidate {
    #[serde(default)]
    source_param: f64,
    pixels: Vec<[usize; 2]>,
}

/// JSON list of `{source_param, pixels: [[x, y], ...]}`.
pub fn candidates_from_json(text: &str) -> Result<Vec<CandidateSegment>> {
    let raw: Vec<RawCandidate> = serde_json::from_str(text)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            CandidateSegment::new(r.pixels.into_iter().map(|[x, y]| (x, y)).collect(), r.source_param)
                .map_err(|e| Error::domain(format!("candidate {i}: {e}")))
        })
        .collect()
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    candidates_from_json(&text)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull vertices in counter-clockwise order, collinear points dropped.
pub fn convex_hull(points: &[(usize, usize)]) -> Vec<(i64, i64)> {
    let mut p: Vec<(i64, i64)> = points.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    p.sort_unstable();
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Lattice points inside or on the convex hull of the pixel centers.
pub fn hull_lattice_count(points: &[(usize, usize)]) -> usize {
    let hull = convex_hull(points);
    match hull.len() {
        0 => 0,
        1 => 1,
        2 => (gcd(hull[1].0 - hull[0].0, hull[1].1 - hull[0].1) + 1) as usize,
        m => {
            let mut twice_area = 0;
            let mut boundary = 0;
            for i in 0..m {
                let (a, b) = (hull[i], hull[(i + 1) % m]);
                twice_area += a.0 * b.1 - b.0 * a.1;
                boundary += gcd(b.0 - a.0, b.1 - a.1);
            }
            // Pick: A = I + B/2 - 1, so I + B = (2A + B)/2 + 1
            ((twice_area.abs() + boundary) / 2 + 1) as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentScore {
    pub e_convex: f64,
    pub e_boundary: f64,
    pub e_background: f64,
    pub score: f64,
}

/// Image pixels outside every candidate listed in `members`.
pub fn background_mask(img: &GrayImage, candidates: &[CandidateSegment], members: &[usize]) -> Vec<bool> {
    let mut mask = vec![true; img.width * img.height];
    for &m in members {
        for &(x, y) in &candidates[m].pixels {
            if x < img.width && y < img.height {
                mask[y * img.width + x] = false;
            }
        }
    }
    mask
}

/// Scores one candidate against intensities `img`, threshold `t` and the
/// background mask of its bucket.
pub fn score_candidate(c: &CandidateSegment, img: &GrayImage, t: &GrayImage, background: &[bool]) -> Result<SegmentScore> {
    let (w, h) = (img.width, img.height);
    if c.is_empty() {
        return Err(Error::domain("candidate has no pixels"));
    }
    if t.width != w || t.height != h || background.len() != w * h {
        return Err(Error::domain("image, threshold and background sizes differ"));
    }
    if let Some(p) = c.pixels.iter().find(|&&(x, y)| x >= w || y >= h) {
        return Err(Error::domain(format!("pixel {p:?} outside the {w}x{h} image")));
    }
    let inside = c.set();
    let e_convex = c.len() as f64 / hull_lattice_count(&c.pixels) as f64;

    let is_inside = |x: i64, y: i64| x >= 0 && y >= 0 && inside.contains(&(x as usize, y as usize));
    let mut gap_sum = 0.0;
    let mut boundary = 0usize;
    for &(x, y) in &c.pixels {
        let (xi, yi) = (x as i64, y as i64);
        let on_boundary = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| !is_inside(xi + dx, yi + dy));
        if !on_boundary {
            continue;
        }
        let mut surround = f64::NEG_INFINITY;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (xi + dx, yi + dy);
                if (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    surround = surround.max(img.get(nx as usize, ny as usize));
                }
            }
        }
        if surround == f64::NEG_INFINITY {
            surround = img.get(x, y);
        }
        gap_sum += surround - t.get(x, y);
        boundary += 1;
    }
    let e_boundary = 1.0 - gap_sum / boundary as f64;

    let fg = c.pixels.iter().map(|&(x, y)| img.get(x, y) - t.get(x, y)).sum::<f64>() / c.len() as f64;
    let (bg_sum, bg_n) = background
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .fold((0.0, 0usize), |(s, n), (i, _)| (s + img.pixels[i] - t.pixels[i], n + 1));
    if bg_n == 0 {
        return Err(Error::domain("bucket covers the whole image, background is empty"));
    }
    let bg = bg_sum / bg_n as f64;
    if bg.abs() < ZERO_GUARD {
        return Err(Error::Numeric(format!(
            "background contrast {bg:e} is zero, background efficiency undefined"
        )));
    }
    let e_background = fg / bg;
    Ok(SegmentScore {
        e_convex,
        e_boundary,
        e_background,
        score: e_convex + e_boundary + e_background,
    })
}

/// Connected components of the overlap graph, each sorted, ordered by their
/// smallest candidate index.
pub fn make_buckets(candidates: &[CandidateSegment]) -> Vec<Vec<usize>> {
    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, c) in candidates.iter().enumerate() {
        for &p in &c.pixels {
            if let Some(&j) = owner.get(&p) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            } else {
                owner.insert(p, i);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let g = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Greedy,
    Exact,
}

/// Pairwise overlap masks over bucket positions.
fn conflict_masks(members: &[usize], overlaps: &dyn Fn(usize, usize) -> bool) -> Vec<u32> {
    let m = members.len();
    let mut masks = vec![0u32; m];
    for a in 0..m {
        for b in a + 1..m {
            if overlaps(members[a], members[b]) {
                masks[a] |= 1 << b;
                masks[b] |= 1 << a;
            }
        }
    }
    masks
}

fn greedy_positions(scores: &[f64], masks: &[u32]) -> u32 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen = 0u32;
    for i in order {
        if masks[i] & chosen == 0 {
            chosen |= 1 << i;
        }
    }
    chosen
}

fn subset_total(scores: &[f64], set: u32) -> f64 {
    (0..scores.len()).filter(|&i| set >> i & 1 == 1).map(|i| scores[i]).sum()
}

/// Members as a sorted index list, for lexicographic comparison.
fn positions(set: u32, m: usize) -> Vec<usize> {
    (0..m).filter(|&i| set >> i & 1 == 1).collect()
}

/// Non-overlapping subset of `members` (candidate indices with `scores`
/// aligned). Greedy takes the best remaining compatible candidate, ties to
/// the lower index; exact maximizes the total over all subsets, preferring
/// greedy's answer on ties and then the lexicographically smallest set.
pub fn select_indices(
    members: &[usize],
    scores: &[f64],
    overlaps: &dyn Fn(usize, usize) -> bool,
    mode: SelectMode,
) -> Result<Vec<usize>> {
    let m = members.len();
    if scores.len() != m {
        return Err(Error::domain("one score per bucket member required"));
    }
    if m > MAX_EXACT_BUCKET && mode == SelectMode::Exact {
        return Err(Error::SizeLimit {
            what: "exact ensemble bucket",
            got: m,
            max: MAX_EXACT_BUCKET,
        });
    }
    if m > 32 {
        return greedy_large(members, scores, overlaps);
    }
    let masks = conflict_masks(members, overlaps);
    let greedy = greedy_positions(scores, &masks);
    let chosen = match mode {
        SelectMode::Greedy => greedy,
        SelectMode::Exact => {
            let admissible: Vec<u32> = (0u32..(1u32 << m))
                .filter(|&set| (0..m).all(|i| set >> i & 1 == 0 || masks[i] & set == 0))
                .collect();
            let best_total = admissible
                .iter()
                .map(|&set| subset_total(scores, set))
                .fold(f64::NEG_INFINITY, f64::max);
            if subset_total(scores, greedy) == best_total {
                greedy
            } else {
                admissible
                    .into_iter()
                    .filter(|&set| subset_total(scores, set) == best_total)
                    .min_by_key(|&set| positions(set, m))
                    .expect("the empty set is admissible")
            }
        }
    };
    Ok(positions(chosen, m).into_iter().map(|i| members[i]).collect())
}

fn greedy_large(members: &[usize], scores: &[f64], overlaps: &dyn Fn(usize, usize) -> bool) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut taken: Vec<usize> = Vec::new();
    for i in order {
        if taken.iter().all(|&j| !overlaps(members[i], members[j])) {
            taken.push(i);
        }
    }
    taken.sort_unstable();
    Ok(taken.into_iter().map(|i| members[i]).collect())
}

pub fn select_ensemble(
    candidates: &[CandidateSegment],
    bucket: &[usize],
    scores: &[f64],
    mode: SelectMode,
) -> Result<Vec<usize>> {
    let sets: HashMap<usize, HashSet<(usize, usize)>> = bucket.iter().map(|&i| (i, candidates[i].set())).collect();
    let overlaps = |a: usize, b: usize| {
        let (sa, sb) = (&sets[&a], &sets[&b]);
        let (small, large) = if sa.len() <= sb.len() { (sa, sb) } else { (sb, sa) };
        small.iter().any(|p| large.contains(p))
    };
    select_indices(bucket, scores, &overlaps, mode)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoredCandidate {
    pub index: usize,
    pub source_param: f64,
    pub bucket: usize,
    #[serde(flatten)]
    pub score: SegmentScore,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleResult {
    pub window: usize,
    pub mode: SelectMode,
    pub buckets: Vec<Vec<usize>>,
    pub selected: Vec<usize>,
    pub candidates: Vec<ScoredCandidate>,
}

impl Tabular for EnsembleResult {
    fn header(&self) -> Option<String> {
        Some("index,source_param,bucket,e_convex,e_boundary,e_background,score,selected".into())
    }

    fn rows(&self) -> Vec<String> {
        self.candidates
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{},{},{},{}",
                    c.index,
                    fmt_sig9(c.source_param),
                    c.bucket,
                    fmt_sig9(c.score.e_convex),
                    fmt_sig9(c.score.e_boundary),
                    fmt_sig9(c.score.e_background),
                    fmt_sig9(c.score.score),
                    u8::from(c.selected)
                )
            })
            .collect()
    }
}

/// Threshold, bucket, score and select; buckets are processed in parallel.
pub fn run_ensemble(img: &GrayImage, candidates: &[CandidateSegment], window: usize, mode: SelectMode) -> Result<EnsembleResult> {
    let t = adaptive_threshold(img, window)?;
    let buckets = make_buckets(candidates);
    let per_bucket = buckets
        .par_iter()
        .map(|members| {
            let bg = background_mask(img, candidates, members);
            let scores = members
                .iter()
                .map(|&i| {
                    score_candidate(&candidates[i], img, &t, &bg).map_err(|e| Error::domain(format!("candidate {i}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let totals: Vec<f64> = scores.iter().map(|s| s.score).collect();
            let chosen = select_ensemble(candidates, members, &totals, mode)?;
            Ok((scores, chosen))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scored: Vec<Option<ScoredCandidate>> = vec![None; candidates.len()];
    let mut selected = Vec::new();
    for (b, (members, (scores, chosen))) in buckets.iter().zip(per_bucket).enumerate() {
        for (&i, s) in members.iter().zip(scores) {
            scored[i] = Some(ScoredCandidate {
                index: i,
                source_param: candidates[i].source_param,
                bucket: b,
                score: s,
                selected: chosen.contains(&i),
            });
        }
        selected.extend(chosen);
    }
    selected.sort_unstable();
    Ok(EnsembleResult {
        window,
        mode,
        buckets,
        selected,
        candidates: scored.into_iter().map(|c| c.expect("every candidate is in a bucket")).collect(),
    })
}
