//! Free-support Wasserstein barycenters by fixed-point iteration.
//!
//! Each sweep solves one plan per atom (atom rows, barycenter columns),
//! records `J = sum_k alpha_k <C_k, pi_k>`, then moves every barycenter point
//! to the alpha-weighted mix of its transposed barycentric projections onto
//! the atoms. Labels, when present, follow the same mix. Because the returned
//! support is produced by the last sweep's plans, it is the linear map
//! `X_B = sum_k alpha_k n_B pi_k^T X_k` of those plans, which is what the
//! dictionary gradients rely on.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cloud::{LabeledPointCloud, PointCloud};
use crate::error::{Error, Result};
use crate::ot::{feature_cost, labeled_cost, solve_ot, transport_cost, SimplexVector, TransportPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterConfig {
    /// Number of support points of the barycenter.
    pub n_support: usize,
    /// Stop once consecutive objectives differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the label term in the ground cost.
    pub beta: f64,
    pub seed: u64,
    /// Fraction of the previous support kept at each sweep; 0 is the plain
    /// fixed-point update.
    pub relaxation: f64,
    /// Solve the per-atom plans of a sweep on the rayon pool.
    pub parallel: bool,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            n_support: 100,
            tol: 1e-6,
            max_iter: 100,
            beta: 1.0,
            seed: 0,
            relaxation: 0.0,
            parallel: false,
        }
    }
}

impl BarycenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_support == 0 {
            return Err(Error::InvalidConfig("n_support must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig("beta must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.relaxation) {
            return Err(Error::InvalidConfig("relaxation must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Output of a barycenter computation.
#[derive(Debug, Clone)]
pub struct BarycenterResult {
    pub features: Array2<f64>,
    /// Label rows; `None` for the unlabeled variant.
    pub labels: Option<Array2<f64>>,
    /// Plans of the last sweep, one per atom, atom rows x barycenter columns.
    pub plans: Vec<TransportPlan>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl BarycenterResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("at least one sweep")
    }

    pub fn cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.features.clone())
    }

    pub fn labeled_cloud(&self) -> Result<LabeledPointCloud> {
        let labels = self
            .labels
            .clone()
            .ok_or_else(|| Error::InvalidArgument("barycenter has no labels".into()))?;
        LabeledPointCloud::new(self.cloud()?, labels)
    }
}

/// Random starting support: standard normal features, then uniformly random
/// one-hot labels. Features are drawn first so labeled and unlabeled runs
/// with the same seed start from the same points.
pub fn init_barycenter(n_support: usize, dim: usize, n_classes: usize, seed: u64) -> LabeledPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Array2::from_shape_simple_fn((n_support, dim), || rng.sample(StandardNormal));
    let mut labels = Array2::zeros((n_support, n_classes.max(2)));
    for mut row in labels.outer_iter_mut() {
        row[rng.random_range(0..n_classes.max(1))] = 1.0;
    }
    LabeledPointCloud::new(PointCloud::new(features).expect("finite normal draws"), labels)
        .expect("one-hot rows")
}

fn check_weights(k: usize, alpha: &SimplexVector) -> Result<()> {
    if k == 0 {
        return Err(Error::Empty("atom list"));
    }
    if alpha.len() != k {
        return Err(Error::DimensionMismatch(format!("{k} atoms but {} weights", alpha.len())));
    }
    Ok(())
}

/// `n_B * plan^T * rows`, i.e. each barycenter point pulled onto one atom.
fn pull_back(plan: &TransportPlan, rows: ArrayView2<'_, f64>) -> Array2<f64> {
    let n_b = plan.shape().1 as f64;
    plan.entries().t().dot(&rows) * n_b
}

/// Alpha-weighted mix of per-atom terms, summed in atom order.
fn mix(alpha: &SimplexVector, parts: impl Iterator<Item = Array2<f64>>) -> Array2<f64> {
    let mut out: Option<Array2<f64>> = None;
    for (w, part) in alpha.as_slice().iter().zip(parts) {
        match out.as_mut() {
            None => out = Some(part * *w),
            Some(acc) => acc.scaled_add(*w, &part),
        }
    }
    out.expect("non-empty atoms")
}

fn solve_all<F>(k: usize, parallel: bool, f: F) -> Result<Vec<(f64, TransportPlan)>>
where
    F: Fn(usize) -> Result<(f64, TransportPlan)> + Sync,
{
    if parallel {
        (0..k).into_par_iter().map(&f).collect()
    } else {
        (0..k).map(f).collect()
    }
}

/// Barycenter of labeled atoms under the label-augmented ground cost.
pub fn labeled_barycenter(
    atoms: &[LabeledPointCloud],
    alpha: &SimplexVector,
    cfg: &BarycenterConfig,
) -> Result<BarycenterResult> {
    check_weights(atoms.len(), alpha)?;
    cfg.validate()?;
    let (d, n_c) = (atoms[0].dim(), atoms[0].n_classes());
    for a in atoms {
        if a.dim() != d || a.n_classes() != n_c {
            return Err(Error::DimensionMismatch(format!(
                "atom shapes ({}, {}) vs ({d}, {n_c})",
                a.dim(),
                a.n_classes()
            )));
        }
    }

    let mut current = init_barycenter(cfg.n_support, d, n_c, cfg.seed);
    let mut trace = Vec::new();
    let mut plans = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let solved = solve_all(atoms.len(), cfg.parallel, |k| {
            let c = labeled_cost(&atoms[k], &current, cfg.beta)?;
            let plan = solve_ot(&c)?;
            Ok((transport_cost(&c, &plan)?, plan))
        })?;
        let j: f64 = solved.iter().zip(alpha.as_slice()).map(|((w, _), a)| a * w).sum();
        plans = solved.into_iter().map(|(_, p)| p).collect();

        let mut x = mix(alpha, plans.iter().zip(atoms).map(|(p, a)| pull_back(p, a.features())));
        let mut y = mix(alpha, plans.iter().zip(atoms).map(|(p, a)| pull_back(p, a.labels())));
        if cfg.relaxation > 0.0 {
            x = x * (1.0 - cfg.relaxation) + &current.features() * cfg.relaxation;
            y = y * (1.0 - cfg.relaxation) + &current.labels() * cfg.relaxation;
        }
        normalize_rows(&mut y);
        current = LabeledPointCloud::new(PointCloud::new(x)?, y)?;

        let done = trace.last().is_some_and(|prev: &f64| (j - prev).abs() < cfg.tol);
        trace.push(j);
        if done {
            break;
        }
    }

    let (cloud, labels) = current.into_parts();
    Ok(BarycenterResult {
        features: cloud.into_support(),
        labels: Some(labels),
        plans,
        objective_trace: trace,
        iterations,
    })
}

/// Barycenter of unlabeled atoms under the squared Euclidean cost.
pub fn unlabeled_barycenter(
    atoms: &[PointCloud],
    alpha: &SimplexVector,
    cfg: &BarycenterConfig,
) -> Result<BarycenterResult> {
    check_weights(atoms.len(), alpha)?;
    cfg.validate()?;
    let d = atoms[0].dim();
    if let Some(a) = atoms.iter().find(|a| a.dim() != d) {
        return Err(Error::DimensionMismatch(format!("atom dims {} vs {d}", a.dim())));
    }

    let mut current = init_barycenter(cfg.n_support, d, 2, cfg.seed).cloud().clone();
    let mut trace = Vec::new();
    let mut plans = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let solved = solve_all(atoms.len(), cfg.parallel, |k| {
            let c = feature_cost(&atoms[k], &current)?;
            let plan = solve_ot(&c)?;
            Ok((transport_cost(&c, &plan)?, plan))
        })?;
        let j: f64 = solved.iter().zip(alpha.as_slice()).map(|((w, _), a)| a * w).sum();
        plans = solved.into_iter().map(|(_, p)| p).collect();

        let mut x = mix(alpha, plans.iter().zip(atoms).map(|(p, a)| pull_back(p, a.support())));
        if cfg.relaxation > 0.0 {
            x = x * (1.0 - cfg.relaxation) + &current.support() * cfg.relaxation;
        }
        current = PointCloud::new(x)?;

        let done = trace.last().is_some_and(|prev: &f64| (j - prev).abs() < cfg.tol);
        trace.push(j);
        if done {
            break;
        }
    }

    Ok(BarycenterResult {
        features: current.into_support(),
        labels: None,
        plans,
        objective_trace: trace,
        iterations,
    })
}

fn normalize_rows(y: &mut Array2<f64>) {
    for mut row in y.outer_iter_mut() {
        row.mapv_inplace(|v| v.max(0.0));
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
}
