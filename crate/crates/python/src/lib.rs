//! Python bindings for the `csfkit` core crate.

use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use csfkit::baselines::{gap_statistic, xic_select, InfoCriterion};
use csfkit::deficiency::{CompressorOracle, ComplexityOracle, LengthUnit, SetRule, TableOracle};
use csfkit::ensemble::{CandidateSegment, GrayImage, SelectMode};
use csfkit::report::Tabular;
use csfkit::spectral::{affinity_from_ncd, spectral_cluster, KernelScale};

fn py_err(e: csfkit::Error) -> PyErr {
    match e {
        csfkit::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn point_set(points: Vec<Vec<f64>>) -> PyResult<Arc<csfkit::PointSet>> {
    csfkit::PointSet::new(points).map(Arc::new).map_err(py_err)
}

fn config(kmax: usize, samples: usize, seed: u64, trim: bool) -> csfkit::CsfConfig {
    csfkit::CsfConfig {
        kmax,
        nsamples: samples,
        seed,
        trim_parts: trim,
        ..Default::default()
    }
}

/// Mean and standard deviation of the subsampled structure function, K = 1..kmax.
#[pyclass(name = "CsfCurve", frozen)]
struct PyCsfCurve {
    inner: csfkit::CsfCurve,
}

#[pymethods]
impl PyCsfCurve {
    #[new]
    fn new(mean: Vec<f64>, std: Vec<f64>) -> PyResult<Self> {
        csfkit::CsfCurve::from_stats(mean, std)
            .map(|inner| PyCsfCurve { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        csfkit::CsfCurve::from_csv(text)
            .map(|inner| PyCsfCurve { inner })
            .map_err(py_err)
    }

    #[getter]
    fn kmax(&self) -> usize {
        self.inner.kmax
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean.clone()
    }

    #[getter]
    fn std(&self) -> Vec<f64> {
        self.inner.std.clone()
    }

    /// `[mean_1..mean_kmax, std_1..std_kmax]`
    fn feature_vector(&self) -> Vec<f64> {
        self.inner.feature_vector()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// K from the one-standard-deviation drop rule.
    fn select_one_std(&self) -> usize {
        csfkit::select_k_one_std(&self.inner).k
    }

    /// K maximizing the log ratio against a reference curve.
    fn select_log_ratio(&self, reference: &PyCsfCurve) -> PyResult<usize> {
        csfkit::select_k_logratio(&self.inner, &reference.inner)
            .map(|e| e.k)
            .map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.kmax
    }

    fn __repr__(&self) -> String {
        format!("CsfCurve(kmax={}, nsamples={})", self.inner.kmax, self.inner.nsamples)
    }
}

/// Normalized compression distance between two byte strings.
#[pyfunction]
#[pyo3(signature = (x, y, compressor = "deflate"))]
fn ncd(x: &[u8], y: &[u8], compressor: &str) -> PyResult<f64> {
    let c = csfkit::compressor_by_name(compressor).map_err(py_err)?;
    csfkit::ncd(c.as_ref(), &csfkit::Item::new(0, x.to_vec()), &csfkit::Item::new(1, y.to_vec())).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (items, compressor = "deflate"))]
fn ncd_matrix(items: Vec<Vec<u8>>, compressor: &str) -> PyResult<Vec<Vec<f64>>> {
    let c = csfkit::compressor_by_name(compressor).map_err(py_err)?;
    let m = csfkit::ncd_matrix(c.as_ref(), &csfkit::Dataset::from_byte_strings(items)).map_err(py_err)?;
    Ok(m.entries().to_vec())
}

/// Spectral clustering of a symmetric distance matrix into `k` groups.
#[pyfunction]
#[pyo3(signature = (distances, k, seed = 0))]
fn cluster(distances: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let m = csfkit::NcdMatrix::from_entries(distances, "external").map_err(py_err)?;
    spectral_cluster(&affinity_from_ncd(&m, KernelScale::Auto), k, seed).map_err(py_err)
}

/// Subsampled curve over byte strings: NCD, spectral clusters and the compressor oracle.
#[pyfunction]
#[pyo3(signature = (items, kmax = 10, samples = 1000, seed = 0, compressor = "deflate", trim = false))]
fn byte_csf(
    items: Vec<Vec<u8>>,
    kmax: usize,
    samples: usize,
    seed: u64,
    compressor: &str,
    trim: bool,
) -> PyResult<PyCsfCurve> {
    let c = csfkit::compressor_by_name(compressor).map_err(py_err)?;
    let ds = csfkit::Dataset::from_byte_strings(items);
    let m = csfkit::ncd_matrix(c.as_ref(), &ds).map_err(py_err)?;
    let oracle = ComplexityOracle::Compressor(CompressorOracle::new(c, csfkit::EncodeMode::Concat, LengthUnit::Bits));
    csfkit::subsampled_csf(&ds, csfkit::ClusterSource::Ncd(&m), &oracle, &config(kmax, samples, seed, trim))
        .map(|inner| PyCsfCurve { inner })
        .map_err(py_err)
}

/// Subsampled curve over points: k-means clusters and the centroid oracle.
#[pyfunction]
#[pyo3(signature = (points, kmax = 10, samples = 1000, seed = 0, trim = false))]
fn point_csf(points: Vec<Vec<f64>>, kmax: usize, samples: usize, seed: u64, trim: bool) -> PyResult<PyCsfCurve> {
    let pts = point_set(points)?;
    csfkit::estimator::point_csf(&pts, &config(kmax, samples, seed, trim))
        .map(|inner| PyCsfCurve { inner })
        .map_err(py_err)
}

/// Exact structure function for items with known complexities; multisets use the max-item rule.
#[pyfunction]
#[pyo3(signature = (complexities, criterion = "bandwidth_sum"))]
fn exact_csf(complexities: Vec<f64>, criterion: &str) -> PyResult<Vec<f64>> {
    let kind: csfkit::CriterionKind = criterion.parse().map_err(py_err)?;
    let oracle = ComplexityOracle::Table(TableOracle::from_item_values(&complexities, SetRule::MaxItem));
    let ds = csfkit::Dataset::anonymous(complexities.len());
    csfkit::exact_csf(&ds, &oracle, kind).map(|c| c.values).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (points, kmax = 10, refs = 10, seed = 0))]
fn gap_k(points: Vec<Vec<f64>>, kmax: usize, refs: usize, seed: u64) -> PyResult<usize> {
    let pts = point_set(points)?;
    gap_statistic(&pts, kmax, refs, seed).map(|(e, _)| e.k).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (points, criterion = "bic", kmax = 10, seed = 0))]
fn mixture_k(points: Vec<Vec<f64>>, criterion: &str, kmax: usize, seed: u64) -> PyResult<usize> {
    let kind = match criterion {
        "aic" => InfoCriterion::Aic,
        "bic" => InfoCriterion::Bic,
        other => return Err(PyValueError::new_err(format!("unknown criterion {other:?}"))),
    };
    let pts = point_set(points)?;
    xic_select(&pts, kmax, kind, seed).map(|e| e.k).map_err(py_err)
}

/// Three isotropic Gaussian clusters; returns `(points, labels)`.
#[pyfunction]
#[pyo3(signature = (spacing, per_cluster, seed = 0))]
fn gen_mixture(spacing: f64, per_cluster: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let (pts, labels) = csfkit::synthetic::gen_mixture(spacing, per_cluster, seed).map_err(py_err)?;
    Ok((pts.points().to_vec(), labels))
}

/// Score candidate segments of a grayscale image and pick a disjoint subset.
///
/// `image` is a list of rows; each candidate is a list of `(x, y)` pixels.
/// Returns `(selected_indices, scores)`.
#[pyfunction]
#[pyo3(signature = (image, candidates, window = 9, mode = "greedy"))]
fn ensemble(
    image: Vec<Vec<f64>>,
    candidates: Vec<Vec<(usize, usize)>>,
    window: usize,
    mode: &str,
) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let mode = match mode {
        "greedy" => SelectMode::Greedy,
        "exact" => SelectMode::Exact,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let height = image.len();
    let width = image.first().map_or(0, Vec::len);
    if image.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("image rows differ in length"));
    }
    let img = GrayImage::new(width, height, image.concat()).map_err(py_err)?;
    let cands = candidates
        .into_iter()
        .enumerate()
        .map(|(i, px)| CandidateSegment::new(px, i as f64))
        .collect::<csfkit::Result<Vec<_>>>()
        .map_err(py_err)?;
    let r = csfkit::ensemble::run_ensemble(&img, &cands, window, mode).map_err(py_err)?;
    Ok((r.selected, r.candidates.iter().map(|c| c.score.score).collect()))
}

#[pymodule]
#[pyo3(name = "csfkit")]
fn csfkit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCsfCurve>()?;
    m.add_function(wrap_pyfunction!(ncd, m)?)?;
    m.add_function(wrap_pyfunction!(ncd_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(byte_csf, m)?)?;
    m.add_function(wrap_pyfunction!(point_csf, m)?)?;
    m.add_function(wrap_pyfunction!(exact_csf, m)?)?;
    m.add_function(wrap_pyfunction!(gap_k, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_k, m)?)?;
    m.add_function(wrap_pyfunction!(gen_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
