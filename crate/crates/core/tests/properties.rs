use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, RngCore};

use csfkit::baselines::gap_statistic;
use csfkit::compression::{ncd_matrix_uncached, Deflate, Identity};
use csfkit::deficiency::{sigma_trim, ComplexityOracle, SetRule, TableOracle};
use csfkit::ensemble::{
    adaptive_threshold, background_mask, hull_lattice_count, score_candidate, select_ensemble, CandidateSegment,
    GrayImage, SelectMode,
};
use csfkit::estimator::{point_csf, sample_value};
use csfkit::exact::criterion;
use csfkit::kmeans::canonical_labels;
use csfkit::metrics::adjusted_rand_index;
use csfkit::seed::rng;
use csfkit::spectral::{spectral_cluster, Affinity};
use csfkit::synthetic::{gen_mixture, run_bench, BenchConfig};
use csfkit::{exact_csf, ncd, ncd_matrix, CriterionKind, CsfConfig, Dataset, Item, ItemId, PointSet};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ncd_matrix_symmetric_and_cache_agrees(items in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..96), 1..7)) {
        let ds = Dataset::from_byte_strings(items);
        let c = Deflate::default();
        let cached = ncd_matrix(&c, &ds).unwrap();
        let plain = ncd_matrix_uncached(&c, &ds).unwrap();
        prop_assert_eq!(cached.entries(), plain.entries());
        let n = ds.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(cached.get(i, j).to_bits(), cached.get(j, i).to_bits());
                prop_assert!(cached.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn ncd_pair_is_order_free(x in prop::collection::vec(any::<u8>(), 0..200), y in prop::collection::vec(any::<u8>(), 1..200)) {
        let (a, b) = (Item::new(0, x), Item::new(1, y));
        for c in [&Deflate::default() as &dyn csfkit::Compressor, &Identity] {
            prop_assert_eq!(ncd(c, &a, &b).unwrap().to_bits(), ncd(c, &b, &a).unwrap().to_bits());
        }
    }

    #[test]
    fn delta_shift_invariance(values in prop::collection::vec(0.0f64..64.0, 2..7), set_k in 0.0f64..100.0, c in -20.0f64..20.0) {
        let n = values.len();
        let ds = Dataset::anonymous(n);
        let part: Vec<&Item> = ds.items().iter().collect();
        let build = |shift: f64| -> ComplexityOracle {
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let mut t = TableOracle::from_item_values(&shifted, SetRule::Strict);
            t.set_multiset((0..n as u64).map(ItemId), set_k + shift);
            t.into()
        };
        let (a, b) = (build(0.0).deficiencies(&part).unwrap(), build(c).deficiencies(&part).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }

    #[test]
    fn sigma_trim_is_nonempty_submultiset(values in prop::collection::vec(0u8..40, 1..12)) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let ds = Dataset::anonymous(values.len());
        let oracle: ComplexityOracle = TableOracle::from_item_values(&values, SetRule::MaxItem).into();
        let part: Vec<&Item> = ds.items().iter().collect();
        let kept = sigma_trim(&oracle, &part).unwrap();
        prop_assert!(!kept.is_empty());
        let mut ids: Vec<u64> = kept.iter().map(|x| x.id().0).collect();
        let before = ids.len();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), before);
        prop_assert!(ids.iter().all(|&i| (i as usize) < values.len()));
    }

    #[test]
    fn exact_witness_attains_value(values in prop::collection::vec(0u8..64, 1..7)) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let ds = Dataset::anonymous(values.len());
        let oracle: ComplexityOracle = TableOracle::from_item_values(&values, SetRule::MaxItem).into();
        for kind in CriterionKind::ALL {
            let curve = exact_csf(&ds, &oracle, kind).unwrap();
            for k in 1..=values.len() {
                let w = curve.witness(k);
                prop_assert_eq!(w.k(), k);
                prop_assert_eq!(criterion(&w, &ds, &oracle, kind).unwrap(), curve.value(k));
            }
        }
    }

    #[test]
    fn sample_value_bounds_and_empty_parts(
        parts in prop::collection::vec(prop::collection::vec(0.0f64..30.0, 0..6), 0..5),
        extra in 0usize..4,
    ) {
        let kmax = parts.len().max(1) + extra;
        let all: Vec<f64> = parts.iter().flatten().copied().collect();
        let spread = if all.is_empty() { 0.0 } else {
            all.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - all.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let v = sample_value(&parts, kmax, false);
        prop_assert!(v >= 0.0 && v <= (spread + 1.0).log2() + 1e-12);
        let mut padded = parts.clone();
        padded.extend(std::iter::repeat_n(Vec::new(), extra));
        prop_assert_eq!(sample_value(&padded, kmax, false), v);
    }

    #[test]
    fn e_convex_in_unit_interval(pixels in prop::collection::hash_set((0usize..12, 0usize..12), 1..40)) {
        let pixels: Vec<(usize, usize)> = pixels.into_iter().collect();
        let hull = hull_lattice_count(&pixels);
        prop_assert!(hull >= pixels.len());
        let mut img = GrayImage::filled(16, 16, 0.0).unwrap();
        for &(x, y) in &pixels {
            img.set(x, y, 1.0);
        }
        img.set(15, 15, 0.5);
        let c = CandidateSegment::new(pixels.clone(), 0.0).unwrap();
        let t = adaptive_threshold(&img, 5).unwrap();
        let bg = background_mask(&img, std::slice::from_ref(&c), &[0]);
        if let Ok(s) = score_candidate(&c, &img, &t, &bg) {
            prop_assert!(s.e_convex > 0.0 && s.e_convex <= 1.0);
            prop_assert_eq!(s.e_convex == 1.0, hull == pixels.len());
        }
    }

    #[test]
    fn scores_are_translation_invariant(
        pixels in prop::collection::hash_set((0usize..8, 0usize..8), 3..30),
        levels in prop::collection::vec(0.2f64..1.0, 64),
        dx in 0usize..6,
        dy in 0usize..6,
    ) {
        // content sits well inside a 40x40 frame so clipped windows only see zeros
        let place = |ox: usize, oy: usize| -> (GrayImage, CandidateSegment) {
            let mut img = GrayImage::filled(40, 40, 0.0).unwrap();
            for y in 0..8 {
                for x in 0..8 {
                    img.set(ox + x, oy + y, levels[y * 8 + x] * 0.3);
                }
            }
            let px: Vec<(usize, usize)> = pixels.iter().map(|&(x, y)| (ox + x, oy + y)).collect();
            for &(x, y) in &px {
                img.set(x, y, 1.0);
            }
            (img, CandidateSegment::new(px, 0.0).unwrap())
        };
        let score = |ox, oy| {
            let (img, c) = place(ox, oy);
            let t = adaptive_threshold(&img, 5).unwrap();
            let bg = background_mask(&img, std::slice::from_ref(&c), &[0]);
            score_candidate(&c, &img, &t, &bg).unwrap()
        };
        let (a, b) = (score(14, 14), score(14 + dx, 14 + dy));
        for (u, v) in [(a.e_convex, b.e_convex), (a.e_boundary, b.e_boundary), (a.e_background, b.e_background)] {
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0), "{} vs {}", u, v);
        }
    }

    #[test]
    fn selections_are_pixel_disjoint(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(1..=10);
        let cands: Vec<CandidateSegment> = (0..m)
            .map(|i| {
                let (x0, y0, w, h) = (r.random_range(0..10), r.random_range(0..10), r.random_range(1..6), r.random_range(1..6));
                let px = (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (x, y))).collect();
                CandidateSegment::new(px, i as f64).unwrap()
            })
            .collect();
        let members: Vec<usize> = (0..m).collect();
        let scores: Vec<f64> = (0..m).map(|_| r.random_range(0.0..5.0)).collect();
        for mode in [SelectMode::Greedy, SelectMode::Exact] {
            let chosen = select_ensemble(&cands, &members, &scores, mode).unwrap();
            for (i, &a) in chosen.iter().enumerate() {
                for &b in &chosen[i + 1..] {
                    prop_assert!(!cands[a].overlaps(&cands[b]));
                }
            }
        }
    }
}

#[test]
fn flipped_byte_is_closer_than_independent() {
    let mut r = rng(133);
    let c = Deflate::default();
    let (mut near, mut far) = (Vec::new(), Vec::new());
    for t in 0..50 {
        let mut a = vec![0u8; 512];
        let mut other = vec![0u8; 512];
        r.fill_bytes(&mut a);
        r.fill_bytes(&mut other);
        let mut b = a.clone();
        let at = r.random_range(0..b.len());
        b[at] ^= 0xFF;
        let (ia, ib, ic) = (Item::new(3 * t, a), Item::new(3 * t + 1, b), Item::new(3 * t + 2, other));
        near.push(ncd(&c, &ia, &ib).unwrap());
        far.push(ncd(&c, &ia, &ic).unwrap());
    }
    assert!(median(near) < median(far));
}

#[test]
fn stepped_complexities_sigma_max() {
    for (m, n) in [(8usize, 4usize), (12, 6)] {
        let step = (m / n) as f64;
        let values: Vec<f64> = (1..=n).map(|i| i as f64 * step).collect();
        let ds = Dataset::anonymous(n);
        let oracle: ComplexityOracle = TableOracle::from_item_values(&values, SetRule::MaxItem).into();
        let curve = exact_csf(&ds, &oracle, CriterionKind::SigmaMax).unwrap();
        let core = curve.core_size.expect("sigma_max reports its core");
        for k in 1..=n {
            let h = curve.value(k);
            if k < core {
                assert!(h >= step, "(m,n)=({m},{n}) k={k}: {h}");
            } else {
                assert_eq!(h, 0.0);
            }
        }
        assert!(curve.values.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn spectral_labels_follow_permutations() {
    let mut r = rng(71);
    let n = 18;
    let group: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mut aff = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = if i == j { 1.0 } else if group[i] == group[j] { r.random_range(0.7..1.0) } else { r.random_range(0.0..0.05) };
            aff[i][j] = v;
            aff[j][i] = v;
        }
    }
    let base = spectral_cluster(&Affinity::from_entries(aff.clone()).unwrap(), 3, 5).unwrap();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, r.random_range(0..=i));
    }
    let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| aff[i][j]).collect()).collect();
    let labels = spectral_cluster(&Affinity::from_entries(permuted).unwrap(), 3, 5).unwrap();
    let pulled: Vec<usize> = perm.iter().map(|&i| base[i]).collect();
    assert_eq!(canonical_labels(&pulled), canonical_labels(&labels));
    assert_eq!(adjusted_rand_index(&group, &base), 1.0);
}

#[test]
fn gap_curve_is_finite_with_nonnegative_spread() {
    for seed in 0..5 {
        let (pts, _) = gen_mixture(4.0, 30, seed).unwrap();
        let (est, curve) = gap_statistic(&pts, 6, 5, seed).unwrap();
        assert!((1..=6).contains(&est.k));
        assert!(curve.s.iter().all(|&s| s >= 0.0 && s.is_finite()));
        assert!(curve.gap.iter().all(|g| g.is_finite()));
        let (again, _) = gap_statistic(&pts, 6, 5, seed).unwrap();
        assert_eq!(again.k, est.k);
    }
    let two = PointSet::new(vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let (_, curve) = gap_statistic(&two, 3, 4, 9).unwrap();
    assert!(curve.gap.iter().all(|g| g.is_finite()));
}

#[test]
fn zero_spacing_stacks_components() {
    let (pts, labels) = gen_mixture(0.0, 400, 12).unwrap();
    let mut sums = [[0.0f64; 2]; 3];
    for (p, &l) in pts.points().iter().zip(&labels) {
        sums[l][0] += p[0] / 400.0;
        sums[l][1] += p[1] / 400.0;
    }
    for s in sums {
        assert!(s[0].abs() < 0.2 && s[1].abs() < 0.2, "{s:?}");
    }
}

#[test]
fn point_curve_is_deterministic() {
    let (pts, _) = gen_mixture(3.0, 20, 4).unwrap();
    let pts = Arc::new(pts);
    let cfg = CsfConfig {
        kmax: 5,
        nsamples: 30,
        seed: 8,
        ..Default::default()
    };
    let (a, b) = (point_csf(&pts, &cfg).unwrap(), point_csf(&pts, &cfg).unwrap());
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.std, b.std);
}

#[test]
fn bench_is_thread_count_independent() {
    let cfg = BenchConfig {
        spacings: vec![1.0, 3.0],
        points_per_cluster: 20,
        trials: 3,
        kmax: 4,
        csf_samples: 10,
        gap_refs: 2,
        bootstrap: 50,
        ..BenchConfig::desk()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_bench(&cfg).unwrap())
    };
    let (one, many) = (run(1), run(3));
    assert_eq!(one.rows, many.rows);
    assert_eq!(one.selections, many.selections);
}
