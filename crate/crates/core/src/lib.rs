//! Cluster structure functions: deficiency of clusters relative to a
//! complexity oracle, exact and subsampled structure-function curves, K
//! selection and the supporting NCD, spectral and baseline machinery.

pub mod baselines;
pub mod compression;
pub mod data;
pub mod deficiency;
pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod report;
pub mod seed;
pub mod spectral;
pub mod synthetic;

pub use compression::{compressor_by_name, ncd, ncd_matrix, Compressor, Deflate, Identity, NcdMatrix};
pub use data::{Dataset, EncodeMode, Item, ItemId, PointSet};
pub use deficiency::{delta, deficiency_stats, sigma_trim, CentroidOracle, ComplexityOracle, CompressorOracle, TableOracle};
pub use error::{Error, Result};
pub use estimator::{select_k_logratio, select_k_one_std, subsampled_csf, ClusterSource, CsfConfig, CsfCurve, KEstimate};
pub use exact::{exact_csf, partitions, CriterionKind, ExactCsfCurve, Partition};
