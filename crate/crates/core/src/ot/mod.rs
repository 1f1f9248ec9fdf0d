//! Exact discrete optimal transport between uniform point clouds.
//!
//! Costs are squared Euclidean distances, optionally augmented with a
//! `beta`-weighted squared distance between label rows. Plans are computed
//! with an exact network simplex solver and always carry uniform marginals.

mod network_simplex;
pub mod simplex;

use ndarray::{Array2, ArrayView2, Axis};

use crate::cloud::{LabeledPointCloud, PointCloud};
use crate::error::{Error, Result};

pub use simplex::{project_simplex, SimplexVector, SIMPLEX_TOL};

/// Marginal residual allowed on a returned plan.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Non-negative ground-cost matrix between the points of two clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("cost matrix"));
        }
        if entries.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        if entries.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidArgument("cost matrix has negative entries".into()));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Coupling with row sums `1/n_p` and column sums `1/n_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan(Array2<f64>);

impl TransportPlan {
    /// Wraps a coupling after checking it is non-negative with uniform marginals.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("transport plan"));
        }
        if entries.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidArgument("plan entries must be finite and non-negative".into()));
        }
        let residual = marginal_residual(entries.view());
        if residual > MARGINAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "plan marginals off by {residual:e}"
            )));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// The same coupling seen from the column side.
    pub fn transposed(&self) -> Self {
        Self(self.0.t().to_owned())
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Largest deviation of a plan's row and column sums from `1/n_p`, `1/n_q`.
pub fn marginal_residual(plan: ArrayView2<'_, f64>) -> f64 {
    let (n_p, n_q) = plan.dim();
    let row = 1.0 / n_p as f64;
    let col = 1.0 / n_q as f64;
    let r = plan
        .sum_axis(Axis(1))
        .iter()
        .fold(0.0f64, |m, s| m.max((s - row).abs()));
    let c = plan
        .sum_axis(Axis(0))
        .iter()
        .fold(0.0f64, |m, s| m.max((s - col).abs()));
    r.max(c)
}

fn squared_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, x) in a.outer_iter().enumerate() {
        for (j, y) in b.outer_iter().enumerate() {
            out[[i, j]] = x.iter().zip(y.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
        }
    }
    out
}

/// Squared Euclidean cost between the supports of `p` and `q`.
pub fn feature_cost(p: &PointCloud, q: &PointCloud) -> Result<CostMatrix> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature dims {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    CostMatrix::new(squared_distances(p.support(), q.support()))
}

/// Feature cost plus `beta` times the squared distance between label rows.
pub fn labeled_cost(p: &LabeledPointCloud, q: &LabeledPointCloud, beta: f64) -> Result<CostMatrix> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
    }
    if p.n_classes() != q.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "label dims {} and {}",
            p.n_classes(),
            q.n_classes()
        )));
    }
    let mut c = feature_cost(p.cloud(), q.cloud())?.into_inner();
    if beta > 0.0 {
        c.scaled_add(beta, &squared_distances(p.labels(), q.labels()));
    }
    CostMatrix::new(c)
}

/// Exact optimal plan between uniform marginals implied by the cost shape.
pub fn solve_ot(cost: &CostMatrix) -> Result<TransportPlan> {
    let plan = network_simplex::solve_uniform(cost.entries())?;
    let residual = marginal_residual(plan.view());
    if residual > MARGINAL_TOL {
        return Err(Error::Solver(format!(
            "plan violates marginals by {residual:e}"
        )));
    }
    Ok(TransportPlan(plan))
}

/// Frobenius inner product `<C, plan>`.
pub fn transport_cost(cost: &CostMatrix, plan: &TransportPlan) -> Result<f64> {
    if cost.shape() != plan.shape() {
        return Err(Error::DimensionMismatch(format!(
            "cost {:?} vs plan {:?}",
            cost.shape(),
            plan.shape()
        )));
    }
    Ok(cost
        .0
        .iter()
        .zip(plan.0.iter())
        .map(|(c, p)| c * p)
        .sum::<f64>()
        .max(0.0))
}

/// Solves the plan and returns it with its cost.
pub fn wasserstein(cost: &CostMatrix) -> Result<(f64, TransportPlan)> {
    let plan = solve_ot(cost)?;
    let w = transport_cost(cost, &plan)?;
    Ok((w, plan))
}

fn project_rows(plan: &TransportPlan, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n_p, n_q) = plan.shape();
    if n_q != rows.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {n_q} columns but target has {} rows",
            rows.nrows()
        )));
    }
    Ok(plan.0.dot(&rows) * n_p as f64)
}

/// Maps every row point of the plan to `n_p * sum_j plan[i][j] * q_j`.
pub fn barycentric_projection(plan: &TransportPlan, q: &PointCloud) -> Result<PointCloud> {
    PointCloud::new(project_rows(plan, q.support())?)
}

/// Transfers label rows through the plan the same way as
/// [`barycentric_projection`]; outputs are probability rows.
pub fn label_propagation(plan: &TransportPlan, labels: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = project_rows(plan, labels)?;
    // Rows of n_p * plan sum to one up to rounding; renormalise that away.
    for mut row in out.outer_iter_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    Ok(out)
}
