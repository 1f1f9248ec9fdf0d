//! Mini-batch reconstruction loss and its envelope-theorem gradients.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::barycenter::{labeled_barycenter, BarycenterConfig, BarycenterResult};
use crate::cloud::{LabeledPointCloud, PointCloud};
use crate::error::{Error, Result};
use crate::ot::{feature_cost, labeled_cost, wasserstein, TransportPlan};

use super::{softmax_rows, DadilConfig, Dictionary};

/// One domain's mini-batch. Indices point into the full dataset.
#[derive(Debug, Clone)]
pub enum DomainBatch {
    Labeled { data: LabeledPointCloud, indices: Vec<usize> },
    Unlabeled { data: PointCloud, indices: Vec<usize> },
}

impl DomainBatch {
    pub fn features(&self) -> ArrayView2<'_, f64> {
        match self {
            DomainBatch::Labeled { data, .. } => data.features(),
            DomainBatch::Unlabeled { data, .. } => data.support(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        match self {
            DomainBatch::Labeled { indices, .. } | DomainBatch::Unlabeled { indices, .. } => indices,
        }
    }
}

/// Everything a single optimisation step consumes: one batch per domain, the
/// rows drawn from every atom, and the seed of each domain's barycenter.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub domains: Vec<DomainBatch>,
    pub atom_indices: Vec<Vec<usize>>,
    pub barycenter_seeds: Vec<u64>,
}

impl MiniBatch {
    pub fn describe(&self) -> String {
        let doms: Vec<String> = self
            .domains
            .iter()
            .enumerate()
            .map(|(l, d)| format!("domain {l}: {:?}", d.indices()))
            .collect();
        let atoms: Vec<String> = self
            .atom_indices
            .iter()
            .enumerate()
            .map(|(k, i)| format!("atom {k}: {i:?}"))
            .collect();
        format!("{}; {}", doms.join("; "), atoms.join("; "))
    }
}

/// Forward-pass state for one domain, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub barycenter: BarycenterResult,
    /// Plan from the domain batch (rows) to the barycenter (columns).
    pub outer_plan: TransportPlan,
    pub loss: f64,
}

/// Gradients of the batch loss with every transport plan held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Per atom, full `atom_size x dim` (rows outside the batch are zero).
    pub features: Vec<Array2<f64>>,
    pub logits: Vec<Array2<f64>>,
    /// `n_domains x n_atoms`.
    pub weights: Array2<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.features
            .iter()
            .chain(&self.logits)
            .chain(std::iter::once(&self.weights))
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn atom_batches(dict: &Dictionary, batch: &MiniBatch) -> Result<Vec<LabeledPointCloud>> {
    if batch.atom_indices.len() != dict.n_atoms() {
        return Err(Error::DimensionMismatch(format!(
            "{} atom index sets for {} atoms",
            batch.atom_indices.len(),
            dict.n_atoms()
        )));
    }
    dict.atoms()
        .iter()
        .zip(&batch.atom_indices)
        .map(|(a, idx)| {
            if idx.iter().any(|&i| i >= a.len()) {
                return Err(Error::InvalidArgument("atom index out of range".into()));
            }
            let x = a.features.select(Axis(0), idx);
            let y = softmax_rows(a.logits.select(Axis(0), idx).view());
            LabeledPointCloud::new(PointCloud::new(x)?, y)
        })
        .collect()
}

fn reconstruct(
    atoms: &[LabeledPointCloud],
    dict: &Dictionary,
    domain: &DomainBatch,
    l: usize,
    seed: u64,
    cfg: &DadilConfig,
) -> Result<Reconstruction> {
    let bcfg = BarycenterConfig {
        n_support: cfg.batch_size,
        beta: dict.beta(),
        seed,
        parallel: false,
        ..cfg.barycenter.clone()
    };
    let alpha = dict.domain_weights(l)?;
    let barycenter = labeled_barycenter(atoms, &alpha, &bcfg)?;
    let cost = match domain {
        DomainBatch::Labeled { data, .. } => labeled_cost(data, &barycenter.labeled_cloud()?, dict.beta())?,
        DomainBatch::Unlabeled { data, .. } => feature_cost(data, &barycenter.cloud()?)?,
    };
    let (loss, outer_plan) = wasserstein(&cost)?;
    Ok(Reconstruction { barycenter, outer_plan, loss })
}

/// Mean over domains of the transport cost between each domain batch and its
/// barycentric reconstruction from the atom batches: label-augmented cost for
/// labeled domains, plain squared Euclidean for the unlabeled target.
pub fn batch_loss(dict: &Dictionary, batch: &MiniBatch, cfg: &DadilConfig) -> Result<(f64, Vec<Reconstruction>)> {
    let n = dict.n_domains();
    if batch.domains.len() != n || batch.barycenter_seeds.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "batch has {} domains / {} seeds, dictionary has {n}",
            batch.domains.len(),
            batch.barycenter_seeds.len()
        )));
    }
    let atoms = atom_batches(dict, batch)?;
    let run = |l: usize| reconstruct(&atoms, dict, &batch.domains[l], l, batch.barycenter_seeds[l], cfg);
    let recs: Vec<Reconstruction> = if cfg.parallel {
        (0..n).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..n).map(run).collect::<Result<_>>()?
    };
    let loss = recs.iter().map(|r| r.loss).sum::<f64>() / n as f64;
    Ok((loss, recs))
}

/// `d/dZ_B <C, pi>` for `C_ij = w ||a_i - z_j||^2` with `pi` fixed:
/// `2 w (colsum_j z_j - (pi^T A)_j)`.
pub(crate) fn cost_grad(plan: ArrayView2<'_, f64>, data: ArrayView2<'_, f64>, bary: ArrayView2<'_, f64>, w: f64) -> Array2<f64> {
    let col = plan.sum_axis(Axis(0));
    let mut g = bary.to_owned();
    for (mut row, c) in g.outer_iter_mut().zip(col.iter()) {
        row *= *c;
    }
    g -= &plan.t().dot(&data);
    g * (2.0 * w)
}

/// Backward pass through the captured plans.
///
/// With plans fixed, each reconstruction is the linear map
/// `X_B = sum_k alpha_k n_B pi_k^T X_k` (labels likewise), and the outer cost
/// is a quadratic in `X_B`, so the chain rule is exact for the frozen-plan
/// surrogate and matches the true loss wherever the optimal plans are locally
/// constant.
pub fn envelope_gradients(dict: &Dictionary, batch: &MiniBatch, recs: &[Reconstruction]) -> Result<Gradients> {
    let n_dom = dict.n_domains();
    let k_atoms = dict.n_atoms();
    if recs.len() != n_dom {
        return Err(Error::MissingPlans(format!("{} reconstructions for {n_dom} domains", recs.len())));
    }
    let atoms = atom_batches(dict, batch)?;
    let beta = dict.beta();
    let scale = 1.0 / n_dom as f64;

    let mut g_atom_x: Vec<Array2<f64>> = atoms.iter().map(|a| Array2::zeros(a.features().dim())).collect();
    let mut g_atom_y: Vec<Array2<f64>> = atoms.iter().map(|a| Array2::zeros(a.labels().dim())).collect();
    let mut g_w = Array2::zeros((n_dom, k_atoms));

    for (l, (rec, dom)) in recs.iter().zip(&batch.domains).enumerate() {
        let bary = &rec.barycenter;
        if bary.plans.len() != k_atoms {
            return Err(Error::MissingPlans(format!(
                "domain {l}: {} barycenter plans for {k_atoms} atoms",
                bary.plans.len()
            )));
        }
        let outer = rec.outer_plan.entries();
        let gx = cost_grad(outer, dom.features(), bary.features.view(), scale);
        let gy = match dom {
            DomainBatch::Labeled { data, .. } => {
                let yb = bary
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::MissingPlans(format!("domain {l}: barycenter labels")))?;
                Some(cost_grad(outer, data.labels(), yb.view(), beta * scale))
            }
            DomainBatch::Unlabeled { .. } => None,
        };

        let alpha = dict.weights().row(l).to_owned();
        for (k, (plan, atom)) in bary.plans.iter().zip(&atoms).enumerate() {
            let pi = plan.entries();
            if pi.nrows() != atom.len() || pi.ncols() != gx.nrows() {
                return Err(Error::MissingPlans(format!("domain {l}, atom {k}: plan shape {:?}", pi.dim())));
            }
            let n_b = pi.ncols() as f64;
            // d X_B / d X_k = alpha_k n_B pi_k^T  =>  grad_k = alpha_k n_B pi_k G.
            g_atom_x[k].scaled_add(alpha[k] * n_b, &pi.dot(&gx));
            let pulled_x = pi.t().dot(&atom.features()) * n_b;
            let mut ga = (&gx * &pulled_x).sum();
            if let Some(gy) = &gy {
                g_atom_y[k].scaled_add(alpha[k] * n_b, &pi.dot(gy));
                let pulled_y = pi.t().dot(&atom.labels()) * n_b;
                ga += (gy * &pulled_y).sum();
            }
            g_w[[l, k]] = ga;
        }
    }

    // Back through softmax and scatter into full atoms.
    let mut features = Vec::with_capacity(k_atoms);
    let mut logits = Vec::with_capacity(k_atoms);
    for (k, atom) in atoms.iter().enumerate() {
        let full = &dict.atoms()[k];
        let mut fx = Array2::zeros(full.features.dim());
        let mut fl = Array2::zeros(full.logits.dim());
        let y = atom.labels();
        for (r, &i) in batch.atom_indices[k].iter().enumerate() {
            let mut row = fx.row_mut(i);
            row += &g_atom_x[k].row(r);
            let g = g_atom_y[k].row(r);
            let yr = y.row(r);
            let dot: f64 = g.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
            let mut lrow = fl.row_mut(i);
            for c in 0..yr.len() {
                lrow[c] += yr[c] * (g[c] - dot);
            }
        }
        features.push(fx);
        logits.push(fl);
    }
    Ok(Gradients { features, logits, weights: g_w })
}
