//! Empirical distributions as uniform point clouds, optionally carrying
//! per-point label probabilities.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Row-sum tolerance for label probability rows.
pub const LABEL_TOL: f64 = 1e-9;

/// Uniform empirical distribution over the rows of `support` (mass `1/n` each).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    support: Array2<f64>,
}

impl PointCloud {
    pub fn new(support: Array2<f64>) -> Result<Self> {
        if support.nrows() == 0 || support.ncols() == 0 {
            return Err(Error::Empty("point cloud support"));
        }
        if support.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud support"));
        }
        Ok(Self { support })
    }

    pub fn len(&self) -> usize {
        self.support.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.support.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn support(&self) -> ArrayView2<'_, f64> {
        self.support.view()
    }

    pub fn into_support(self) -> Array2<f64> {
        self.support
    }

    /// Rows selected by `indices`, in that order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.support.select(Axis(0), indices))
    }
}

/// A point cloud whose points carry probability vectors over `n_classes` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    cloud: PointCloud,
    labels: Array2<f64>,
}

impl LabeledPointCloud {
    pub fn new(cloud: PointCloud, labels: Array2<f64>) -> Result<Self> {
        if labels.nrows() != cloud.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} label rows",
                cloud.len(),
                labels.nrows()
            )));
        }
        if labels.ncols() < 2 {
            return Err(Error::InvalidLabels(format!(
                "need at least 2 classes, got {}",
                labels.ncols()
            )));
        }
        for (i, row) in labels.outer_iter().enumerate() {
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::InvalidLabels(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > LABEL_TOL {
                return Err(Error::InvalidLabels(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { cloud, labels })
    }

    /// Builds one-hot labels from class indices.
    pub fn from_classes(support: Array2<f64>, classes: &[usize], n_classes: usize) -> Result<Self> {
        let cloud = PointCloud::new(support)?;
        if classes.len() != cloud.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} class indices",
                cloud.len(),
                classes.len()
            )));
        }
        let mut labels = Array2::zeros((classes.len(), n_classes));
        for (i, &c) in classes.iter().enumerate() {
            if c >= n_classes {
                return Err(Error::InvalidLabels(format!(
                    "class {c} out of range for {n_classes} classes"
                )));
            }
            labels[[i, c]] = 1.0;
        }
        Self::new(cloud, labels)
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.cloud.support()
    }

    pub fn labels(&self) -> ArrayView2<'_, f64> {
        self.labels.view()
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.ncols()
    }

    /// Argmax class of each label row, lowest index on ties.
    pub fn hard_classes(&self) -> Vec<usize> {
        argmax_rows(self.labels.view())
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            cloud: self.cloud.select(indices)?,
            labels: self.labels.select(Axis(0), indices),
        })
    }

    pub fn into_parts(self) -> (PointCloud, Array2<f64>) {
        (self.cloud, self.labels)
    }
}

/// Index of the largest entry in each row; the lowest index wins ties.
pub fn argmax_rows(m: ArrayView2<'_, f64>) -> Vec<usize> {
    m.outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
