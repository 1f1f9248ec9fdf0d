use ndarray::Array1;

use crate::error::{Error, Result};

/// Tolerance on the sum of a simplex vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point of the probability simplex: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Array1<f64>);

impl SimplexVector {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("simplex vector"));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidArgument(
                "simplex weights must be finite and non-negative".into(),
            ));
        }
        let s = weights.sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("simplex weights sum to {s}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("simplex vector"));
        }
        Ok(Self(Array1::from_elem(k, 1.0 / k as f64)))
    }

    /// The `k`-th vertex of the `len`-simplex.
    pub fn vertex(len: usize, k: usize) -> Result<Self> {
        if k >= len {
            return Err(Error::InvalidArgument(format!("vertex {k} of a {len}-simplex")));
        }
        let mut w = Array1::zeros(len);
        w[k] = 1.0;
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }
}

/// Euclidean projection onto the probability simplex, by sorting.
///
/// With `u` the entries sorted in decreasing order, `rho` is the largest
/// index with `u_rho > (sum_{i<=rho} u_i - 1) / rho`, and the projection is
/// `max(v - theta, 0)` for `theta = (sum_{i<=rho} u_i - 1) / rho`.
pub fn project_simplex(v: &[f64]) -> Result<SimplexVector> {
    if v.is_empty() {
        return Err(Error::Empty("vector to project"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("vector to project"));
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Array1<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Remove the rounding left in the sum; support entries absorb it evenly.
    let s = w.sum();
    if s > 0.0 && s != 1.0 {
        w /= s;
    }
    Ok(SimplexVector(w))
}
