use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use csfkit::compression::{compressor_by_name, ncd_matrix, Compressor, NcdMatrix, DEFAULT_COMPRESSOR};
use csfkit::data::{parse_idx, parse_points_csv, Dataset, EncodeMode, Item, PointSet};
use csfkit::deficiency::{CentroidOracle, ComplexityOracle, CompressorOracle, LengthUnit, TableOracle};
use csfkit::ensemble::{candidates_from_json, run_ensemble, GrayImage, SelectMode};
use csfkit::estimator::{
    point_csf, select_k_logratio, select_k_one_std, subsampled_csf, uniform_reference, ClusterSource, CsfConfig,
    CsfCurve, KEstimate,
};
use csfkit::exact::{exact_csf, CriterionKind};
use csfkit::report::{to_json_with_manifest, write_file, Tabular};
use csfkit::spectral::{affinity_from_ncd, spectral_cluster, KernelScale};
use csfkit::synthetic::{run_bench, BenchConfig};
use csfkit::{seed, Error, Result};

const COMPRESSOR_ENV: &str = "CSFKIT_COMPRESSOR";

#[derive(Parser, Debug)]
#[command(name = "csfkit", version, about = "Cluster structure functions over compressors and point sets")]
struct Cli {
    /// Directory all output files are written to.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Base seed; a fresh seed is drawn and recorded when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pairwise NCD matrix of an IDX dataset.
    Ncd {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        compressor: Option<String>,
    },
    /// Spectral clustering of an NCD matrix (CSV or JSON).
    Cluster {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Subsampled CSF curve.
    Csf {
        /// IDX dataset or CSV point set (by `.csv` extension).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        kmax: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// compressor | centroid | table:FILE
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long)]
        compressor: Option<String>,
        /// One-sigma trim each part before its bandwidth.
        #[arg(long)]
        trim: bool,
        #[arg(long, value_enum, default_value_t = Encoding::Concat)]
        encoding: Encoding,
    },
    /// Select K from a curve.
    EstimateK {
        /// Curve CSV (K,mean,std).
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Rule::OneStd)]
        rule: Rule,
        /// Reference curve CSV, or `auto` to build it from `--input`.
        #[arg(long, default_value = "auto")]
        reference: String,
        /// CSV point set for computing curves.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        kmax: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        trim: bool,
    },
    /// Exact CSF of a small dataset under a table oracle.
    ExactCsf {
        /// Table oracle JSON; its item ids form the dataset.
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "bandwidth-sum")]
        criterion: String,
    },
    /// Synthetic three-cluster benchmark.
    BenchSynth {
        #[arg(long, value_delimiter = ',')]
        spacing: Vec<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        gap_refs: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long, value_enum, default_value_t = Rule::OneStd)]
        rule: Rule,
        /// Full-scale defaults (10000 points per cluster, 100 trials).
        #[arg(long)]
        full: bool,
    },
    /// Score candidate segmentations and select a non-overlapping ensemble.
    Ensemble {
        /// Binary PGM (P5) image.
        #[arg(long)]
        image: PathBuf,
        /// JSON list of {source_param, pixels: [[x, y], ...]}.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value_t = 9)]
        window: usize,
        #[arg(long, value_enum, default_value_t = Mode::Greedy)]
        mode: Mode,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Encoding {
    Concat,
    Prefix,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Rule {
    OneStd,
    LogRatio,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Greedy,
    Exact,
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: String,
    args: Vec<String>,
    seed: u64,
    seed_source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    compressor: Option<String>,
    inputs: Vec<InputDigest>,
}

struct Ctx {
    out: PathBuf,
    manifest: RunManifest,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.manifest.seed
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let digest = Sha256::digest(&bytes);
        self.manifest.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(bytes)
    }

    fn text(&mut self, path: &Path) -> Result<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|_| Error::Domain(format!("{} is not UTF-8 text", path.display())))
    }

    fn compressor(&mut self, flag: Option<&str>) -> Result<Arc<dyn Compressor>> {
        let env = std::env::var(COMPRESSOR_ENV).ok().filter(|s| !s.is_empty());
        let name = flag.map(str::to_string).or(env).unwrap_or_else(|| DEFAULT_COMPRESSOR.to_string());
        let c = compressor_by_name(&name)?;
        self.manifest.compressor = Some(c.name().to_string());
        Ok(c)
    }

    fn write(&self, name: &str, body: &str) -> Result<()> {
        write_file(&self.out.join(name), body.as_bytes())
    }

    fn write_json<T: Serialize>(&self, name: &str, result: &T) -> Result<()> {
        self.write(name, &to_json_with_manifest(result, Some(&self.manifest))?)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn points_from(ctx: &mut Ctx, path: &Path) -> Result<PointSet> {
    let text = ctx.text(path)?;
    parse_points_csv(&text)
}

fn idx_from(ctx: &mut Ctx, path: &Path) -> Result<Dataset> {
    let bytes = ctx.read(path)?;
    parse_idx(&bytes)
}

fn curve_from(ctx: &mut Ctx, path: &Path) -> Result<CsfCurve> {
    let text = ctx.text(path)?;
    CsfCurve::from_csv(&text)
}

#[derive(Serialize)]
struct Labels {
    k: usize,
    labels: Vec<usize>,
}

impl Tabular for Labels {
    fn header(&self) -> Option<String> {
        Some("index,label".into())
    }

    fn rows(&self) -> Vec<String> {
        self.labels.iter().enumerate().map(|(i, l)| format!("{i},{l}")).collect()
    }
}

fn cmd_ncd(ctx: &mut Ctx, input: &Path, compressor: Option<&str>) -> Result<()> {
    let ds = idx_from(ctx, input)?;
    let c = ctx.compressor(compressor)?;
    let m = ncd_matrix(c.as_ref(), &ds)?;
    ctx.write("ncd.csv", &m.to_csv())?;
    ctx.write_json("ncd.json", &m)
}

fn load_matrix(ctx: &mut Ctx, path: &Path) -> Result<NcdMatrix> {
    let text = ctx.text(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        // accept both a bare matrix and a {manifest, result} envelope
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let inner = v.get("result").cloned().unwrap_or(v);
        NcdMatrix::from_json(&inner.to_string())
    } else {
        NcdMatrix::from_csv(&text)
    }
}

fn cmd_cluster(ctx: &mut Ctx, matrix: &Path, k: usize) -> Result<()> {
    let m = load_matrix(ctx, matrix)?;
    let labels = spectral_cluster(&affinity_from_ncd(&m, KernelScale::Auto), k, ctx.seed())?;
    let out = Labels { k, labels };
    ctx.write("labels.csv", &out.to_csv())?;
    ctx.write_json("labels.json", &out)
}

struct CsfArgs<'a> {
    input: &'a Path,
    kmax: usize,
    samples: usize,
    oracle: Option<&'a str>,
    compressor: Option<&'a str>,
    trim: bool,
    encoding: Encoding,
}

fn cmd_csf(ctx: &mut Ctx, a: CsfArgs<'_>) -> Result<()> {
    let cfg = CsfConfig {
        kmax: a.kmax,
        nsamples: a.samples,
        seed: ctx.seed(),
        trim_parts: a.trim,
        ..CsfConfig::default()
    };
    let csv = is_csv(a.input);
    let oracle_spec = a.oracle.unwrap_or(if csv { "centroid" } else { "compressor" });
    let curve = if csv {
        let pts = Arc::new(points_from(ctx, a.input)?);
        let oracle = match oracle_spec {
            "centroid" => ComplexityOracle::Centroid(CentroidOracle::new(pts.clone())),
            s if s.starts_with("table:") => table_oracle(ctx, &s["table:".len()..])?,
            other => return Err(Error::Domain(format!("oracle {other:?} needs an IDX input"))),
        };
        subsampled_csf(&pts.to_dataset(), ClusterSource::Points(&pts), &oracle, &cfg)?
    } else {
        let ds = idx_from(ctx, a.input)?;
        let c = ctx.compressor(a.compressor)?;
        let m = ncd_matrix(c.as_ref(), &ds)?;
        let oracle = match oracle_spec {
            "compressor" => {
                let mode = match a.encoding {
                    Encoding::Concat => EncodeMode::Concat,
                    Encoding::Prefix => EncodeMode::Prefix,
                };
                ComplexityOracle::Compressor(CompressorOracle::new(c, mode, LengthUnit::Bits))
            }
            s if s.starts_with("table:") => table_oracle(ctx, &s["table:".len()..])?,
            other => return Err(Error::Domain(format!("oracle {other:?} needs a CSV point set"))),
        };
        subsampled_csf(&ds, ClusterSource::Ncd(&m), &oracle, &cfg)?
    };
    ctx.write("curve.csv", &curve.to_csv())?;
    ctx.write("features.csv", &curve.feature_csv())?;
    ctx.write_json("curve.json", &curve)
}

fn table_oracle(ctx: &mut Ctx, path: &str) -> Result<ComplexityOracle> {
    let text = ctx.text(Path::new(path))?;
    Ok(ComplexityOracle::Table(TableOracle::from_json(&text)?))
}

struct EstimateArgs<'a> {
    curve: Option<&'a Path>,
    rule: Rule,
    reference: &'a str,
    input: Option<&'a Path>,
    cfg: CsfConfig,
}

#[derive(Serialize)]
struct EstimateOut {
    estimate: KEstimate,
    curve: CsfCurve,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<CsfCurve>,
}

fn cmd_estimate(ctx: &mut Ctx, a: EstimateArgs<'_>) -> Result<()> {
    let points = match a.input {
        Some(p) => Some(Arc::new(points_from(ctx, p)?)),
        None => None,
    };
    let curve = match (a.curve, &points) {
        (Some(c), _) => curve_from(ctx, c)?,
        (None, Some(p)) => point_csf(p, &a.cfg)?,
        (None, None) => return Err(Error::Domain("estimate-k needs --curve or --input".into())),
    };
    let out = match a.rule {
        Rule::OneStd => EstimateOut {
            estimate: select_k_one_std(&curve),
            curve,
            reference: None,
        },
        Rule::LogRatio => {
            let reference = if a.reference == "auto" {
                let p = points
                    .as_ref()
                    .ok_or_else(|| Error::Domain("--reference auto needs --input points".into()))?;
                let r = Arc::new(uniform_reference(p, seed::derive(a.cfg.seed, 0x4EF))?);
                point_csf(&r, &a.cfg)?
            } else {
                curve_from(ctx, Path::new(a.reference))?
            };
            EstimateOut {
                estimate: select_k_logratio(&curve, &reference)?,
                curve,
                reference: Some(reference),
            }
        }
    };
    println!("K={}", out.estimate.k);
    ctx.write_json("estimate.json", &out)
}

fn cmd_exact(ctx: &mut Ctx, table: &Path, criterion: &str) -> Result<()> {
    let text = ctx.text(table)?;
    let oracle = TableOracle::from_json(&text)?;
    let ds = Dataset::new(oracle.item_ids().into_iter().map(|id| Item::new(id.0, Vec::new())).collect());
    let oracle = ComplexityOracle::Table(oracle);
    let kinds: Vec<CriterionKind> = if criterion == "all" {
        CriterionKind::ALL.to_vec()
    } else {
        vec![criterion.parse()?]
    };
    let mut curves = Vec::new();
    for kind in kinds {
        let curve = exact_csf(&ds, &oracle, kind)?;
        ctx.write(&format!("exact_{}.csv", kind.name()), &curve.to_csv())?;
        curves.push(curve);
    }
    ctx.write_json("exact.json", &curves)
}

struct BenchArgs {
    spacing: Vec<f64>,
    trials: Option<usize>,
    points: Option<usize>,
    kmax: Option<usize>,
    samples: Option<usize>,
    gap_refs: Option<usize>,
    bootstrap: Option<usize>,
    rule: Rule,
    full: bool,
}

fn cmd_bench(ctx: &mut Ctx, a: BenchArgs) -> Result<()> {
    let mut cfg = if a.full { BenchConfig::full() } else { BenchConfig::desk() };
    if !a.spacing.is_empty() {
        cfg.spacings = a.spacing;
    }
    cfg.trials = a.trials.unwrap_or(cfg.trials);
    cfg.points_per_cluster = a.points.unwrap_or(cfg.points_per_cluster);
    cfg.kmax = a.kmax.unwrap_or(cfg.kmax);
    cfg.csf_samples = a.samples.unwrap_or(cfg.csf_samples);
    cfg.gap_refs = a.gap_refs.unwrap_or(cfg.gap_refs);
    cfg.bootstrap = a.bootstrap.unwrap_or(cfg.bootstrap);
    cfg.seed = ctx.seed();
    if a.rule == Rule::LogRatio {
        cfg.csf_rule = csfkit::estimator::SelectionRule::LogRatio;
    }
    let report = run_bench(&cfg)?;
    #[derive(Serialize)]
    struct Out<'a> {
        config: &'a BenchConfig,
        report: &'a csfkit::synthetic::BenchReport,
    }
    ctx.write("bench.csv", &report.to_csv())?;
    ctx.write("bench_hist.csv", &report.histogram_csv())?;
    ctx.write_json(
        "bench.json",
        &Out {
            config: &cfg,
            report: &report,
        },
    )
}

fn cmd_ensemble(ctx: &mut Ctx, image: &Path, candidates: &Path, window: usize, mode: Mode) -> Result<()> {
    let img = GrayImage::from_pgm(&ctx.read(image)?)?;
    let text = ctx.text(candidates)?;
    let cands = candidates_from_json(&text)?;
    let mode = match mode {
        Mode::Greedy => SelectMode::Greedy,
        Mode::Exact => SelectMode::Exact,
    };
    let result = run_ensemble(&img, &cands, window, mode)?;
    ctx.write("scores.csv", &result.to_csv())?;
    ctx.write_json("selection.json", &result)
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    }
    if !cli.out.is_dir() {
        std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
            path: cli.out.clone(),
            source: e,
        })?;
    }
    let (seed, seed_source) = match cli.seed {
        Some(s) => (s, "flag"),
        None => (rand::random::<u64>(), "entropy"),
    };
    let name = match &cli.command {
        Command::Ncd { .. } => "ncd",
        Command::Cluster { .. } => "cluster",
        Command::Csf { .. } => "csf",
        Command::EstimateK { .. } => "estimate-k",
        Command::ExactCsf { .. } => "exact-csf",
        Command::BenchSynth { .. } => "bench-synth",
        Command::Ensemble { .. } => "ensemble",
    };
    let mut ctx = Ctx {
        out: cli.out,
        manifest: RunManifest {
            tool: "csfkit",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: name.to_string(),
            args,
            seed,
            seed_source,
            compressor: None,
            inputs: Vec::new(),
        },
    };
    match cli.command {
        Command::Ncd { input, compressor } => cmd_ncd(&mut ctx, &input, compressor.as_deref()),
        Command::Cluster { matrix, k } => cmd_cluster(&mut ctx, &matrix, k),
        Command::Csf {
            input,
            kmax,
            samples,
            oracle,
            compressor,
            trim,
            encoding,
        } => cmd_csf(
            &mut ctx,
            CsfArgs {
                input: &input,
                kmax,
                samples,
                oracle: oracle.as_deref(),
                compressor: compressor.as_deref(),
                trim,
                encoding,
            },
        ),
        Command::EstimateK {
            curve,
            rule,
            reference,
            input,
            kmax,
            samples,
            trim,
        } => {
            let cfg = CsfConfig {
                kmax,
                nsamples: samples,
                seed,
                trim_parts: trim,
                ..CsfConfig::default()
            };
            cmd_estimate(
                &mut ctx,
                EstimateArgs {
                    curve: curve.as_deref(),
                    rule,
                    reference: &reference,
                    input: input.as_deref(),
                    cfg,
                },
            )
        }
        Command::ExactCsf { table, criterion } => cmd_exact(&mut ctx, &table, &criterion),
        Command::BenchSynth {
            spacing,
            trials,
            points,
            kmax,
            samples,
            gap_refs,
            bootstrap,
            rule,
            full,
        } => cmd_bench(
            &mut ctx,
            BenchArgs {
                spacing,
                trials,
                points,
                kmax,
                samples,
                gap_refs,
                bootstrap,
                rule,
                full,
            },
        ),
        Command::Ensemble {
            image,
            candidates,
            window,
            mode,
        } => cmd_ensemble(&mut ctx, &image, &candidates, window, mode),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csfkit: {e}");
            ExitCode::from(1)
        }
    }
}
