use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csfkit::data::encode_idx;
use csfkit::ensemble::GrayImage;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_csfkit"));
    c.env_remove("CSFKIT_COMPRESSOR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn csfkit")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(
        o.status.success(),
        "csfkit {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn image_idx(dir: &Path, n: usize) -> PathBuf {
    // three pattern families of 8x8 images with a little per-image variation
    let images: Vec<Vec<u8>> = (0..n)
        .map(|i| {
            (0..64)
                .map(|p| {
                    let (x, y) = (p % 8, p / 8);
                    let on = match i % 3 {
                        0 => x == 3 || x == 4,
                        1 => y == 3 || y == 4,
                        _ => x == y,
                    };
                    if on {
                        200 + (i * 7 % 50) as u8
                    } else {
                        (i * 13 % 9) as u8
                    }
                })
                .collect()
        })
        .collect();
    let path = dir.join("s.idx");
    std::fs::write(&path, encode_idx(&images, 8, 8).unwrap()).unwrap();
    path
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let o = run(&["csf", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", s(dir.path()), "ncd", "--input", "/nonexistent/x.idx"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn estimate_k_one_std_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("c.csv");
    std::fs::write(&curve, "K,mean,std\n1,5,0.5\n2,5,0.5\n3,2,0.1\n4,2,0.1\n").unwrap();
    let o = ok(&["--out", s(dir.path()), "estimate-k", "--curve", s(&curve), "--rule", "one-std"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "K=3");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("estimate.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["estimate"]["k"], 3);
    assert_eq!(json["manifest"]["subcommand"], "estimate-k");
}

#[test]
fn estimate_k_log_ratio_file_reference() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = (dir.path().join("s.csv"), dir.path().join("r.csv"));
    std::fs::write(&c, "K,mean,std\n1,4,0\n2,1,0\n3,1,0\n").unwrap();
    std::fs::write(&r, "K,mean,std\n1,4,0\n2,4,0\n3,4,0\n").unwrap();
    let o = ok(&[
        "--out",
        s(dir.path()),
        "estimate-k",
        "--curve",
        s(&c),
        "--rule",
        "log-ratio",
        "--reference",
        s(&r),
    ]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "K=2");
}

#[test]
fn csf_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = image_idx(dir.path(), 24);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "--out", s(out), "csf", "--input", s(&input), "--kmax", "4", "--samples", "20", "--seed", "7",
        ]);
    }
    let ca = std::fs::read(a.join("curve.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("curve.csv")).unwrap());
    assert!(String::from_utf8_lossy(&ca).starts_with("K,mean,std\n"));
    let features = std::fs::read_to_string(a.join("features.csv")).unwrap();
    assert_eq!(features.trim().split(',').count(), 8);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = image_idx(dir.path(), 15);
    let (a, b) = (dir.path().join("one"), dir.path().join("many"));
    ok(&["--out", s(&a), "--threads", "1", "csf", "--input", s(&input), "--kmax", "3", "--samples", "10", "--seed", "3"]);
    ok(&["--out", s(&b), "--threads", "4", "csf", "--input", s(&input), "--kmax", "3", "--samples", "10", "--seed", "3"]);
    assert_eq!(std::fs::read(a.join("curve.csv")).unwrap(), std::fs::read(b.join("curve.csv")).unwrap());
}

#[test]
fn entropy_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("p.csv");
    let body: String = (0..30).map(|i| format!("{},{}\n", i % 3 * 10, i % 7)).collect();
    std::fs::write(&pts, format!("x,y\n{body}")).unwrap();
    ok(&["--out", s(dir.path()), "csf", "--input", s(&pts), "--kmax", "3", "--samples", "5"]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("curve.json")).unwrap()).unwrap();
    assert_eq!(json["manifest"]["seed_source"], "entropy");
    let seed = json["manifest"]["seed"].as_u64().unwrap();
    assert_eq!(json["manifest"]["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    // replaying the recorded seed reproduces the curve
    let replay = dir.path().join("replay");
    let seed = seed.to_string();
    ok(&["--out", s(&replay), "--seed", &seed, "csf", "--input", s(&pts), "--kmax", "3", "--samples", "5"]);
    assert_eq!(
        std::fs::read(dir.path().join("curve.csv")).unwrap(),
        std::fs::read(replay.join("curve.csv")).unwrap()
    );
}

#[test]
fn ncd_then_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let input = image_idx(dir.path(), 9);
    ok(&["--out", s(dir.path()), "ncd", "--input", s(&input)]);
    let csv = std::fs::read_to_string(dir.path().join("ncd.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ncd.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["n"], 9);
    assert_eq!(json["result"]["compressor"], "deflate");
    let m = dir.path().join("ncd.json");
    ok(&["--out", s(dir.path()), "--seed", "1", "cluster", "--matrix", s(&m), "--k", "3"]);
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().next(), Some("index,label"));
    assert_eq!(labels.lines().count(), 10);
}

#[test]
fn compressor_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let input = image_idx(dir.path(), 4);
    let o = bin()
        .env("CSFKIT_COMPRESSOR", "identity")
        .args(["--out", s(dir.path()), "ncd", "--input", s(&input)])
        .output()
        .unwrap();
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ncd.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["compressor"], "identity");
    let o = bin()
        .env("CSFKIT_COMPRESSOR", "no-such-codec")
        .args(["--out", s(dir.path()), "ncd", "--input", s(&input)])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exact_csf_from_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.json");
    std::fs::write(&table, r#"{"items": {"0": 2, "1": 4, "2": 6, "3": 8}, "sets": [], "set_rule": "max_item"}"#).unwrap();
    ok(&["--out", s(dir.path()), "exact-csf", "--table", s(&table), "--criterion", "all"]);
    let csv = std::fs::read_to_string(dir.path().join("exact_bandwidth_sum.csv")).unwrap();
    assert!(csv.starts_with("k,H,witness\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with("4,0,"));
}

#[test]
fn bench_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["--out", s(dir.path()), "bench-synth", "--spacing", "1.5", "--trials", "5", "--seed", "1"]);
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,spacing,accuracy,ci_lo,ci_hi");
    assert_eq!(lines.len(), 5);
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["csf", "gap", "aic", "bic"]);
    assert!(dir.path().join("bench_hist.csv").exists());
}

#[test]
fn ensemble_selection_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = GrayImage::filled(20, 20, 0.0).unwrap();
    for y in 4..9 {
        for x in 4..9 {
            img.set(x, y, 1.0);
        }
    }
    img.set(15, 15, 0.6);
    let image = dir.path().join("img.pgm");
    std::fs::write(&image, img.to_pgm()).unwrap();
    let square = |x0: usize, w: usize| -> String {
        let px: Vec<String> = (x0..x0 + w).flat_map(|y| (x0..x0 + w).map(move |x| format!("[{x},{y}]"))).collect();
        format!("{{\"source_param\": {w}, \"pixels\": [{}]}}", px.join(","))
    };
    let cands = dir.path().join("c.json");
    std::fs::write(&cands, format!("[{},{},{}]", square(4, 5), square(3, 7), square(14, 2))).unwrap();
    ok(&["--out", s(dir.path()), "ensemble", "--image", s(&image), "--candidates", s(&cands)]);
    let sel: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["result"]["buckets"], serde_json::json!([[0, 1], [2]]));
    assert_eq!(sel["result"]["selected"], serde_json::json!([1, 2]));
    // every score here is negative, so the exact optimum is the empty selection
    let exact = dir.path().join("exact");
    ok(&["--out", s(&exact), "ensemble", "--image", s(&image), "--candidates", s(&cands), "--mode", "exact"]);
    let sel: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(exact.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["result"]["selected"], serde_json::json!([]));
    let scores = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 4);
    assert!(scores.starts_with("index,source_param,bucket,e_convex,e_boundary,e_background,score,selected\n"));
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let curve = dir.path().join("c.csv");
    std::fs::write(&curve, "K,mean,std\n1,1,0\n2,1,0\n").unwrap();
    let o = run(&["--out", s(&blocker), "estimate-k", "--curve", s(&curve)]);
    assert_eq!(o.status.code(), Some(1));
}
