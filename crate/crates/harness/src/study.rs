//! Simplex-grid interpolation study and the dictionary-size sparsity sweep.

use dadil_core::barycenter::BarycenterConfig;
use dadil_core::classify::{accuracy, dadil_e, dadil_r_at, reconstruct, ClassifierConfig};
use dadil_core::dictionary::{fit, sparsity_score, Dictionary, DEFAULT_SPARSITY_EPS};
use dadil_core::ot::{feature_cost, wasserstein, SimplexVector};
use dadil_core::{LabeledPointCloud, PointCloud};
use ndarray::Array1;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{dadil_config, prepare_seed};

/// All points `(i_1/r, ..., i_k/r)` with non-negative integers summing to
/// `r`, in lexicographic order of `(i_1, ..., i_k)` descending.
pub fn simplex_grid(k: usize, resolution: usize) -> Result<Vec<SimplexVector>> {
    if k < 2 || resolution < 1 {
        return Err(HarnessError::Config(format!("simplex grid needs k >= 2 and resolution >= 1 (got {k}, {resolution})")));
    }
    fn rec(k: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for i in (0..=left).rev() {
            prefix.push(i);
            rec(k, left - i, prefix, out);
            prefix.pop();
        }
    }
    let mut counts = Vec::new();
    rec(k, resolution, &mut Vec::with_capacity(k), &mut counts);
    let r = resolution as f64;
    counts
        .into_iter()
        .map(|c| Ok(SimplexVector::new(Array1::from_iter(c.into_iter().map(|i| i as f64 / r)))?))
        .collect()
}

/// Sample Pearson correlation; `None` when either side is constant or the
/// lengths differ.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// One grid point of the interpolation study.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationRow {
    pub alpha: Vec<f64>,
    /// Transport cost between the reconstruction at `alpha` and the target.
    pub w2: f64,
    /// Accuracy of a classifier trained on the reconstruction at `alpha`.
    pub acc_r: f64,
    /// Accuracy of the atom-classifier ensemble weighted by `alpha`.
    pub acc_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationTable {
    pub rows: Vec<InterpolationRow>,
    pub corr_r: Option<f64>,
    pub corr_e: Option<f64>,
}

impl InterpolationTable {
    fn from_rows(rows: Vec<InterpolationRow>) -> Self {
        let w: Vec<f64> = rows.iter().map(|r| r.w2).collect();
        let r: Vec<f64> = rows.iter().map(|r| r.acc_r).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.acc_e).collect();
        Self { corr_r: pearson(&w, &r), corr_e: pearson(&w, &e), rows }
    }

    /// Correlations over the rows of several tables taken together.
    pub fn pooled(tables: &[InterpolationTable]) -> InterpolationTable {
        Self::from_rows(tables.iter().flat_map(|t| t.rows.iter().cloned()).collect())
    }
}

/// Reconstructs the target at every point of the `resolution` grid over the
/// dictionary's simplex and scores both adaptation strategies there.
/// `target` is the unlabeled cloud the dictionary was fitted to; `eval`
/// holds the labels used for scoring only.
pub fn interpolation_study(
    dict: &Dictionary,
    target: &PointCloud,
    eval: &LabeledPointCloud,
    resolution: usize,
    bary_cfg: &BarycenterConfig,
    clf_cfg: &ClassifierConfig,
    parallel: bool,
) -> Result<InterpolationTable> {
    let grid = simplex_grid(dict.n_atoms(), resolution)?;
    let truth = eval.hard_classes();
    let ensemble = dadil_e(dict, clf_cfg)?;
    let point = |alpha: &SimplexVector| -> Result<InterpolationRow> {
        let rec = reconstruct(dict, alpha, bary_cfg)?;
        let w2 = wasserstein(&feature_cost(target, rec.cloud())?)?.0;
        let acc_r = accuracy(&dadil_r_at(dict, alpha, bary_cfg, clf_cfg)?.predict(eval.cloud())?, &truth)?;
        let acc_e = accuracy(&ensemble.reweighted(alpha)?.predict(eval.cloud())?, &truth)?;
        Ok(InterpolationRow { alpha: alpha.as_slice().to_vec(), w2, acc_r, acc_e })
    };
    let rows: Vec<InterpolationRow> = if parallel {
        grid.par_iter().map(point).collect::<Result<_>>()?
    } else {
        grid.iter().map(point).collect::<Result<_>>()?
    };
    Ok(InterpolationTable::from_rows(rows))
}

/// Mean sparsity of the target coordinates for one dictionary size.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityRow {
    pub n_atoms: usize,
    pub mean_sparsity: f64,
    /// Per-seed scores, in seed order.
    pub per_seed: Vec<f64>,
    /// Per-seed target coordinates, in seed order.
    pub target_weights: Vec<Vec<f64>>,
}

/// Fits one dictionary per (size, seed) and records the sparsity score of
/// the target's coordinates.
pub fn sparsity_sweep(cfg: &ExperimentConfig) -> Result<Vec<SparsityRow>> {
    cfg.validate()?;
    let data: Vec<_> = cfg.seeds.iter().map(|&s| prepare_seed(cfg, s)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> =
        cfg.sparsity_ks.iter().flat_map(|&k| (0..cfg.seeds.len()).map(move |i| (k, i))).collect();
    let one = |&(k, i): &(usize, usize)| -> Result<SimplexVector> {
        let d = &data[i];
        let mut dcfg = dadil_config(cfg, cfg.seeds[i]);
        dcfg.n_atoms = k;
        let (dict, _) = fit(&d.sources, &d.target_train, &dcfg)?;
        Ok(dict.target_weights())
    };
    let weights: Vec<SimplexVector> =
        if cfg.parallel { jobs.par_iter().map(one).collect::<Result<_>>()? } else { jobs.iter().map(one).collect::<Result<_>>()? };
    Ok(cfg
        .sparsity_ks
        .iter()
        .zip(weights.chunks(cfg.seeds.len()))
        .map(|(&k, w)| {
            let per_seed: Vec<f64> = w.iter().map(|a| sparsity_score(a, DEFAULT_SPARSITY_EPS)).collect();
            SparsityRow {
                n_atoms: k,
                mean_sparsity: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
                per_seed,
                target_weights: w.iter().map(|a| a.as_slice().to_vec()).collect(),
            }
        })
        .collect())
}

/// Number of adjacent pairs where the sweep decreases, and the largest drop.
pub fn monotonicity_violations(rows: &[SparsityRow]) -> (usize, f64) {
    rows.windows(2).fold((0, 0.0), |(n, worst), w| {
        let drop = w[0].mean_sparsity - w[1].mean_sparsity;
        if drop > 0.0 {
            (n + 1, f64::max(worst, drop))
        } else {
            (n, worst)
        }
    })
}
