//! Targeted subset selection (TSS) with submodular mutual information.
//!
//! The crate selects a budget of points from an unlabeled pool that are
//! relevant to a small target set. It provides:
//!
//! - [`datastore`]: CSV ingestion of feature, label and probability files.
//! - [`kernel`]: cosine / dot similarity kernels with nonnegativity transforms.
//! - [`objectives`]: GCMI, FL1MI, FL2MI, LogDetMI and plain submodular
//!   functions with incremental marginal gains.
//! - [`optimizer`]: naive, lazy and exhaustive cardinality-constrained maximizers.
//! - [`baselines`]: random, entropy uncertainty, targeted uncertainty and
//!   k-means++ (BADGE-style) selection.
//! - [`pipeline`]: the `tss select` run manifest and JSON report.
//! - [`harness`]: a synthetic class-imbalance experiment built around a
//!   softmax-regression model and its last-layer gradient embeddings.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix it to `f64`, which the CLI and the experiment harness
//! use; the `*32` aliases fix it to `f32`.

pub mod baselines;
pub mod datastore;
mod error;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod objectives;
pub mod optimizer;
pub mod pipeline;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use baselines::{badge_select, random_select, targeted_uncertainty_select, uncertainty_select};
pub use datastore::{load_features, load_labels, load_probabilities, FeatureMatrix, LabelVector, ProbabilityMatrix};
pub use kernel::{build_gram, build_kernel, regularize_psd, KernelConfig, Metric, SimilarityKernel, Transform};
pub use objectives::{Kernels, Objective, ObjectiveKind, ObjectiveParams, ObjectiveState};
pub use optimizer::{exhaustive_maximize, greedy_maximize, Algorithm, SelectionConfig, SelectionResult};

pub type Features = FeatureMatrix<f64>;
pub type Probabilities = ProbabilityMatrix<f64>;
pub type Kernel = SimilarityKernel<f64>;
pub type Objective64 = Objective<f64>;
pub type Selection = SelectionResult<f64>;

pub type Features32 = FeatureMatrix<f32>;
pub type Kernel32 = SimilarityKernel<f32>;
pub type Objective32 = Objective<f32>;
