//! Dataset dictionary learning.
//!
//! A [`Dictionary`] holds `K` labeled atoms (features plus label logits) and
//! one row of barycentric coordinates per dataset, the target's row last.
//! [`fit`] learns both by mini-batch projected gradient descent, with
//! gradients taken through the transport plans captured at the end of each
//! forward pass ([`envelope_gradients`]).

mod archive;
mod metrics;
mod objective;
mod sampling;
mod train;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::barycenter::BarycenterConfig;
use crate::cloud::{LabeledPointCloud, PointCloud};
use crate::error::{Error, Result};
use crate::ot::{project_simplex, SimplexVector, SIMPLEX_TOL};

pub use archive::FORMAT_VERSION;
pub use metrics::{density_score, sparsity_score, update_magnitudes, DEFAULT_SPARSITY_EPS};
pub use objective::{batch_loss, envelope_gradients, DomainBatch, Gradients, MiniBatch, Reconstruction};
pub use sampling::{sample_atom_indices, sample_source_batch, sample_unlabeled_batch};
pub use train::{fit, resolve_beta, wbr_fit, TrainTrace};

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// A learnable labeled point cloud; labels are `softmax(logits)` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
}

impl Atom {
    pub fn new(features: Array2<f64>, logits: Array2<f64>) -> Result<Self> {
        if features.nrows() != logits.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} logit rows",
                features.nrows(),
                logits.nrows()
            )));
        }
        if features.iter().chain(logits.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("atom"));
        }
        Ok(Self { features, logits })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn labels(&self) -> Array2<f64> {
        softmax_rows(self.logits.view())
    }

    pub fn cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.features.clone())
    }

    pub fn labeled_cloud(&self) -> Result<LabeledPointCloud> {
        LabeledPointCloud::new(self.cloud()?, self.labels())
    }
}

/// Atoms plus an `N x K` matrix of barycentric coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Vec<Atom>,
    weights: Array2<f64>,
    beta: f64,
}

impl Dictionary {
    pub fn new(atoms: Vec<Atom>, weights: Array2<f64>, beta: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("dictionary atoms"));
        }
        let (n, d, c) = (atoms[0].len(), atoms[0].features.ncols(), atoms[0].logits.ncols());
        if n == 0 || c < 2 {
            return Err(Error::InvalidArgument("atoms need points and >= 2 classes".into()));
        }
        for a in &atoms {
            if a.len() != n || a.features.ncols() != d || a.logits.ncols() != c {
                return Err(Error::DimensionMismatch("atoms must share size, dim and classes".into()));
            }
        }
        if weights.ncols() != atoms.len() || weights.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "weights {:?} for {} atoms",
                weights.dim(),
                atoms.len()
            )));
        }
        for (l, row) in weights.outer_iter().enumerate() {
            if row.iter().any(|&w| !(w >= 0.0)) || (row.sum() - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidArgument(format!("weight row {l} is off the simplex")));
            }
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta {beta}")));
        }
        Ok(Self { atoms, weights, beta })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom_size(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.atoms[0].logits.ncols()
    }

    pub fn n_domains(&self) -> usize {
        self.weights.nrows()
    }

    /// Label-cost weight the dictionary was trained with.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn domain_weights(&self, domain: usize) -> Result<SimplexVector> {
        if domain >= self.n_domains() {
            return Err(Error::InvalidArgument(format!("domain {domain} out of range")));
        }
        SimplexVector::new(self.weights.row(domain).to_owned())
    }

    /// Coordinates of the target, stored as the last row.
    pub fn target_weights(&self) -> SimplexVector {
        self.domain_weights(self.n_domains() - 1).expect("validated rows")
    }

    pub fn labeled_atoms(&self) -> Result<Vec<LabeledPointCloud>> {
        self.atoms.iter().map(Atom::labeled_cloud).collect()
    }

    /// Copy with the target row replaced, e.g. for interpolation studies.
    pub fn with_target_weights(&self, alpha: &SimplexVector) -> Result<Self> {
        if alpha.len() != self.n_atoms() {
            return Err(Error::DimensionMismatch("alpha length".into()));
        }
        let mut out = self.clone();
        let last = out.n_domains() - 1;
        out.weights.row_mut(last).assign(alpha.weights());
        Ok(out)
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    pub(crate) fn set_weight_row(&mut self, l: usize, row: ArrayView1<'_, f64>) {
        self.weights.row_mut(l).assign(&row);
    }

    pub(crate) fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }
}

/// Configuration of the learning loop.
#[derive(Debug, Clone, PartialEq)]
pub struct DadilConfig {
    /// Epochs over the data.
    pub n_iter: usize,
    /// Batches per epoch; `None` uses `floor(min domain size / batch_size)`.
    pub n_batches: Option<usize>,
    pub batch_size: usize,
    pub n_atoms: usize,
    pub atom_size: usize,
    /// Step size for atom features and logits.
    pub lr: f64,
    /// Step size for the barycentric coordinates.
    pub lr_weights: f64,
    /// Both step sizes are divided by `1 + lr_decay * epoch`; 0 keeps them
    /// constant.
    pub lr_decay: f64,
    /// Absolute label weight; `None` derives it from the first batch.
    pub beta: Option<f64>,
    /// Multiplier for the derived label weight.
    pub beta_scale: f64,
    /// Inner barycenter settings; `n_support` is overridden by `batch_size`.
    pub barycenter: BarycenterConfig,
    pub seed: u64,
    /// Reconstruct the domains of a batch on the rayon pool.
    pub parallel: bool,
}

impl Default for DadilConfig {
    fn default() -> Self {
        Self {
            n_iter: 80,
            n_batches: None,
            batch_size: 40,
            n_atoms: 3,
            atom_size: 120,
            lr: 30.0,
            lr_weights: 0.05,
            lr_decay: 0.02,
            beta: None,
            beta_scale: 3.0,
            barycenter: BarycenterConfig { max_iter: 10, tol: 1e-6, ..Default::default() },
            seed: 0,
            parallel: false,
        }
    }
}

impl DadilConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let positive = [
            ("n_iter", self.n_iter),
            ("batch_size", self.batch_size),
            ("n_atoms", self.n_atoms),
            ("atom_size", self.atom_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.n_batches == Some(0) {
            return Err(Error::InvalidConfig("n_batches must be >= 1".into()));
        }
        if n_classes > 0 && (self.batch_size < n_classes || self.batch_size % n_classes != 0) {
            return Err(Error::InvalidConfig(format!(
                "batch_size {} must be a positive multiple of {n_classes} classes",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0) || !(self.lr_weights > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be > 0".into()));
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::InvalidConfig("beta must be finite and >= 0".into()));
            }
        }
        if !(self.lr_decay >= 0.0) || !self.lr_decay.is_finite() {
            return Err(Error::InvalidConfig("lr_decay must be finite and >= 0".into()));
        }
        if !(self.beta_scale >= 0.0) {
            return Err(Error::InvalidConfig("beta_scale must be >= 0".into()));
        }
        let mut b = self.barycenter.clone();
        b.n_support = self.batch_size;
        b.validate()
    }
}

/// Shapes of the datasets a dictionary is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetsMeta {
    pub n_domains: usize,
    pub dim: usize,
    pub n_classes: usize,
}

/// Standard normal atom features and logits; each weight row is the simplex
/// projection of a standard normal draw. Deterministic in `rng`.
pub fn init_dictionary<R: Rng>(cfg: &DadilConfig, meta: DatasetsMeta, rng: &mut R) -> Result<Dictionary> {
    if meta.n_domains == 0 || meta.dim == 0 || meta.n_classes < 2 {
        return Err(Error::InvalidArgument(format!("bad dataset shapes {meta:?}")));
    }
    let mut normal = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.sample(StandardNormal));
    let atoms = (0..cfg.n_atoms)
        .map(|_| {
            let f = normal(cfg.atom_size, meta.dim);
            let l = normal(cfg.atom_size, meta.n_classes);
            Atom::new(f, l)
        })
        .collect::<Result<Vec<_>>>()?;
    let draws = normal(meta.n_domains, cfg.n_atoms);
    let mut weights = Array2::zeros((meta.n_domains, cfg.n_atoms));
    for (l, row) in draws.outer_iter().enumerate() {
        let p = project_simplex(row.as_slice().expect("row-major"))?;
        weights.row_mut(l).assign(p.weights());
    }
    Dictionary::new(atoms, weights, cfg.beta.unwrap_or(0.0))
}
