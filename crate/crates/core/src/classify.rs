//! Linear softmax classifiers and the two ways of turning a trained
//! dictionary into a target-domain predictor.
//!
//! * [`dadil_r`] reconstructs the target as a labeled barycenter of the atoms
//!   and trains one classifier on that reconstruction.
//! * [`dadil_e`] trains one classifier per atom and averages their
//!   probabilities with the target's barycentric coordinates.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycenter::{labeled_barycenter, BarycenterConfig};
use crate::cloud::{argmax_rows, LabeledPointCloud, PointCloud};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::ot::{feature_cost, wasserstein, SimplexVector};

/// Mini-batch SGD settings for [`train_classifier`]; `lr` is the first
/// epoch's step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 0.5, batch_size: 32, seed: 0 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("classifier epochs and batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig("classifier lr must be > 0".into()));
        }
        Ok(())
    }
}

/// Affine map followed by softmax. `weights` is `(d + 1) x n_c`; the last row
/// is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClassifier {
    weights: Vec<Vec<f64>>,
}

fn softmax_inplace(z: &mut Array2<f64>) {
    for mut row in z.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

impl SoftmaxClassifier {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.nrows() < 2 || weights.ncols() < 2 {
            return Err(Error::InvalidArgument(format!("classifier weights {:?}", weights.dim())));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier weights"));
        }
        Ok(Self { weights: weights.outer_iter().map(|r| r.to_vec()).collect() })
    }

    /// Zero weights: uniform predictions.
    pub fn zeros(dim: usize, n_classes: usize) -> Self {
        Self::new(Array2::zeros((dim + 1, n_classes))).expect("valid shape")
    }

    pub fn weights(&self) -> Array2<f64> {
        let c = self.weights[0].len();
        Array2::from_shape_fn((self.weights.len(), c), |(i, j)| self.weights[i][j])
    }

    pub fn dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn n_classes(&self) -> usize {
        self.weights[0].len()
    }

    fn logits(w: &Array2<f64>, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let d = w.nrows() - 1;
        let mut z = x.dot(&w.slice(s![..d, ..]));
        z += &w.row(d);
        z
    }

    fn check_dim(&self, x: &PointCloud) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!("input dim {} vs classifier {}", x.dim(), self.dim())));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &PointCloud) -> Result<Array2<f64>> {
        self.check_dim(x)?;
        let mut z = Self::logits(&self.weights(), x.support());
        softmax_inplace(&mut z);
        Ok(z)
    }

    /// Arg-max class per row, lowest index on ties.
    pub fn predict(&self, x: &PointCloud) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.predict_proba(x)?.view()))
    }

    /// Mean cross-entropy of the predictions against probability rows.
    pub fn cross_entropy(&self, data: &LabeledPointCloud) -> Result<f64> {
        let p = self.predict_proba(data.cloud())?;
        Ok(cross_entropy(p.view(), data.labels()))
    }
}

fn cross_entropy(p: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> f64 {
    let total: f64 = p
        .iter()
        .zip(y.iter())
        .filter(|(_, &t)| t > 0.0)
        .map(|(&q, &t)| -t * q.max(f64::MIN_POSITIVE).ln())
        .sum();
    total / p.nrows() as f64
}

/// Minimises the mean cross-entropy against the (possibly soft) label rows
/// by mini-batch SGD from zero weights, with step `lr / sqrt(1 + epoch)`.
/// Batches are reshuffled every epoch.
///
/// SGD runs on standardised features (per-column mean and standard
/// deviation of `data`); the scaling is folded back into the returned
/// affine weights, so the model is still `softmax(x W + b)` on raw inputs.
pub fn train_classifier(data: &LabeledPointCloud, cfg: &ClassifierConfig) -> Result<SoftmaxClassifier> {
    cfg.validate()?;
    let (n, d, c) = (data.len(), data.dim(), data.n_classes());
    let mean = data.features().mean_axis(Axis(0)).expect("non-empty");
    let scale = data.features().std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let x = (&data.features() - &mean) / &scale;
    let y = data.labels();
    let mut w = Array2::<f64>::zeros((d + 1, c));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        // Decaying steps let the iterates settle instead of rattling around
        // the optimum, which keeps the result insensitive to row order.
        let lr = cfg.lr / (1.0 + epoch as f64).sqrt();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let mut p = SoftmaxClassifier::logits(&w, xb.view());
            softmax_inplace(&mut p);
            let residual = (p - &yb) / chunk.len() as f64;
            let gw = xb.t().dot(&residual);
            let gb: Array1<f64> = residual.sum_axis(Axis(0));
            w.slice_mut(s![..d, ..]).scaled_add(-lr, &gw);
            let mut bias = w.row_mut(d);
            bias.scaled_add(-lr, &gb);
        }
    }
    // (x - m) / s . W + b  =  x . (W / s) + (b - (m / s) . W)
    let mut raw = w.clone();
    for j in 0..d {
        raw.row_mut(j).mapv_inplace(|v| v / scale[j]);
    }
    let shift = (&mean / &scale).dot(&w.slice(s![..d, ..]));
    raw.row_mut(d).scaled_add(-1.0, &shift);
    SoftmaxClassifier::new(raw)
}

/// Percentage of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Labeled barycenter of the atoms at `alpha`, with the dictionary's label
/// weight and the support size of `bary_cfg`.
pub fn reconstruct(dict: &Dictionary, alpha: &SimplexVector, bary_cfg: &BarycenterConfig) -> Result<LabeledPointCloud> {
    let cfg = BarycenterConfig { beta: dict.beta(), ..bary_cfg.clone() };
    labeled_barycenter(&dict.labeled_atoms()?, alpha, &cfg)?.labeled_cloud()
}

/// Classifier trained on the reconstruction of the target from its
/// coordinates. Callers usually set `bary_cfg.n_support` to the atom size.
pub fn dadil_r(dict: &Dictionary, bary_cfg: &BarycenterConfig, clf_cfg: &ClassifierConfig) -> Result<SoftmaxClassifier> {
    dadil_r_at(dict, &dict.target_weights(), bary_cfg, clf_cfg)
}

/// [`dadil_r`] at arbitrary coordinates.
pub fn dadil_r_at(
    dict: &Dictionary,
    alpha: &SimplexVector,
    bary_cfg: &BarycenterConfig,
    clf_cfg: &ClassifierConfig,
) -> Result<SoftmaxClassifier> {
    train_classifier(&reconstruct(dict, alpha, bary_cfg)?, clf_cfg)
}

/// Weighted average of member classifiers' probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    members: Vec<SoftmaxClassifier>,
    weights: Vec<f64>,
}

impl Ensemble {
    pub fn new(members: Vec<SoftmaxClassifier>, weights: &SimplexVector) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("ensemble members"));
        }
        if members.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} members, {} weights",
                members.len(),
                weights.len()
            )));
        }
        let (d, c) = (members[0].dim(), members[0].n_classes());
        if members.iter().any(|m| m.dim() != d || m.n_classes() != c) {
            return Err(Error::DimensionMismatch("ensemble members disagree in shape".into()));
        }
        Ok(Self { members, weights: weights.as_slice().to_vec() })
    }

    pub fn members(&self) -> &[SoftmaxClassifier] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same members, new weights.
    pub fn reweighted(&self, weights: &SimplexVector) -> Result<Self> {
        Self::new(self.members.clone(), weights)
    }

    pub fn predict_proba(&self, x: &PointCloud) -> Result<Array2<f64>> {
        let mut out: Option<Array2<f64>> = None;
        for (m, &w) in self.members.iter().zip(&self.weights) {
            let p = m.predict_proba(x)?;
            match out.as_mut() {
                None => out = Some(p * w),
                Some(acc) => acc.scaled_add(w, &p),
            }
        }
        Ok(out.expect("non-empty members"))
    }

    pub fn predict(&self, x: &PointCloud) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.predict_proba(x)?.view()))
    }
}

/// One classifier per atom (trained on its features and softmax labels),
/// combined with the target's coordinates. Members train on the rayon pool;
/// each training is deterministic, so the result does not depend on it.
pub fn dadil_e(dict: &Dictionary, clf_cfg: &ClassifierConfig) -> Result<Ensemble> {
    let atoms = dict.labeled_atoms()?;
    let members = atoms
        .par_iter()
        .map(|a| train_classifier(a, clf_cfg))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members, &dict.target_weights())
}

/// The two computable terms of the target risk bound at `alpha = alpha_T`:
/// the transport cost between the target's reconstruction `B` and the
/// target, and `gamma = sum_k alpha_k W(P_k, B)`. Both use the squared
/// Euclidean feature cost and are squared 2-Wasserstein values, the same
/// quantity the barycenter minimises over `B`.
pub fn bound_terms(dict: &Dictionary, target: &PointCloud, bary_cfg: &BarycenterConfig) -> Result<(f64, f64)> {
    bound_terms_at(dict, &dict.target_weights(), target, bary_cfg)
}

/// [`bound_terms`] at arbitrary coordinates.
pub fn bound_terms_at(
    dict: &Dictionary,
    alpha: &SimplexVector,
    target: &PointCloud,
    bary_cfg: &BarycenterConfig,
) -> Result<(f64, f64)> {
    let b = reconstruct(dict, alpha, bary_cfg)?;
    let recon = wasserstein(&feature_cost(target, b.cloud())?)?.0;
    Ok((recon, gamma(dict, alpha, b.cloud())?))
}

/// `sum_k alpha_k W(P_k, b)` with the squared Euclidean feature cost.
pub fn gamma(dict: &Dictionary, alpha: &SimplexVector, b: &PointCloud) -> Result<f64> {
    let mut g = 0.0;
    for (atom, &w) in dict.atoms().iter().zip(alpha.as_slice()) {
        if w > 0.0 {
            g += w * wasserstein(&feature_cost(&atom.cloud()?, b)?)?.0;
        }
    }
    Ok(g)
}
