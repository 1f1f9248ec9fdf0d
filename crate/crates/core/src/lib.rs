//! Dataset dictionary learning in Wasserstein space.
//!
//! Datasets are uniform point clouds with (soft) labels. A dictionary of
//! learnable labeled atoms, mixed by barycentric coordinates, reconstructs
//! every source dataset and an unlabeled target; the reconstruction of the
//! target then serves multi-source domain adaptation, either by training a
//! classifier on it or by ensembling per-atom classifiers.
//!
//! * [`ot`]: exact optimal transport, barycentric projection, simplex projection.
//! * [`barycenter`]: free-support barycenters of labeled and unlabeled clouds.
//! * [`dictionary`]: atom/weight learning, barycentric regression, diagnostics.
//! * [`classify`]: softmax classifiers and the two adaptation strategies.

pub mod barycenter;
pub mod classify;
pub mod cloud;
pub mod dictionary;
pub mod error;
pub mod ot;

pub use cloud::{LabeledPointCloud, PointCloud};
pub use error::{Error, Result};
