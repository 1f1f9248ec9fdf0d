//! The learning loop, and barycentric regression over fixed source atoms.

use ndarray::Array1;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::barycenter::{unlabeled_barycenter, BarycenterConfig};
use crate::cloud::{LabeledPointCloud, PointCloud};
use crate::error::{Error, Result};
use crate::ot::{feature_cost, project_simplex, wasserstein, SimplexVector};

use super::metrics::update_magnitudes;
use super::objective::{batch_loss, cost_grad, envelope_gradients, DomainBatch, Gradients, MiniBatch};
use super::sampling::{sample_atom_indices, sample_source_batch, sample_unlabeled_batch};
use super::{init_dictionary, DadilConfig, DatasetsMeta, Dictionary};

/// Per-batch losses and per-epoch update magnitudes of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    /// `loss[epoch][batch]`.
    pub loss: Vec<Vec<f64>>,
    pub delta_x: Vec<f64>,
    pub delta_y: Vec<f64>,
    pub delta_a: Vec<f64>,
    /// Label weight used for the run.
    pub beta: f64,
}

impl TrainTrace {
    pub fn epoch_loss(&self, epoch: usize) -> f64 {
        let l = &self.loss[epoch];
        l.iter().sum::<f64>() / l.len() as f64
    }

    pub fn first_epoch_loss(&self) -> f64 {
        self.epoch_loss(0)
    }

    pub fn final_epoch_loss(&self) -> f64 {
        self.epoch_loss(self.loss.len() - 1)
    }
}

/// `scale` times the mean pairwise squared distance within `batch`.
pub fn resolve_beta(batch: &LabeledPointCloud, scale: f64) -> Result<f64> {
    let c = feature_cost(batch.cloud(), batch.cloud())?;
    Ok(scale * c.entries().mean().unwrap_or(0.0))
}

fn check_datasets(sources: &[LabeledPointCloud], target: &PointCloud) -> Result<(usize, usize)> {
    let first = sources.first().ok_or(Error::Empty("source datasets"))?;
    let (d, n_c) = (first.dim(), first.n_classes());
    for s in sources {
        if s.dim() != d || s.n_classes() != n_c {
            return Err(Error::DimensionMismatch("sources disagree on dim or classes".into()));
        }
    }
    if target.dim() != d {
        return Err(Error::DimensionMismatch(format!("target dim {} vs {d}", target.dim())));
    }
    Ok((d, n_c))
}

fn batches_per_epoch(cfg: &DadilConfig, sizes: impl Iterator<Item = usize>) -> usize {
    cfg.n_batches
        .unwrap_or_else(|| (sizes.min().unwrap_or(0) / cfg.batch_size).max(1))
}

fn draw_batch<R: Rng>(
    sources: &[LabeledPointCloud],
    target: &PointCloud,
    atom_size: usize,
    n_atoms: usize,
    cfg: &DadilConfig,
    rng: &mut R,
) -> Result<MiniBatch> {
    let mut domains = Vec::with_capacity(sources.len() + 1);
    for s in sources {
        let (data, indices) = sample_source_batch(s, cfg.batch_size, rng)?;
        domains.push(DomainBatch::Labeled { data, indices });
    }
    let (data, indices) = sample_unlabeled_batch(target, cfg.batch_size, rng)?;
    domains.push(DomainBatch::Unlabeled { data, indices });
    let atom_indices = (0..n_atoms).map(|_| sample_atom_indices(atom_size, cfg.batch_size, rng)).collect();
    let barycenter_seeds = (0..domains.len()).map(|_| rng.next_u64()).collect();
    Ok(MiniBatch { domains, atom_indices, barycenter_seeds })
}

/// Step-size multiplier for `epoch`.
fn decay(cfg: &DadilConfig, epoch: usize) -> f64 {
    1.0 / (1.0 + cfg.lr_decay * epoch as f64)
}

fn apply(dict: &mut Dictionary, g: &Gradients, cfg: &DadilConfig, epoch: usize) -> Result<()> {
    let (lr, lr_w) = (cfg.lr * decay(cfg, epoch), cfg.lr_weights * decay(cfg, epoch));
    for (k, atom) in dict.atoms_mut().iter_mut().enumerate() {
        atom.features.scaled_add(-lr, &g.features[k]);
        atom.logits.scaled_add(-lr, &g.logits[k]);
    }
    for l in 0..dict.n_domains() {
        let step: Array1<f64> = &dict.weights().row(l) - &(&g.weights.row(l) * lr_w);
        let p = project_simplex(step.as_slice().expect("contiguous"))?;
        dict.set_weight_row(l, p.weights().view());
    }
    Ok(())
}

/// Learns atoms and barycentric coordinates for `sources` (labeled) plus an
/// unlabeled `target`, whose coordinates end up in the last weight row.
///
/// Every batch draws class-balanced source batches, a uniform target batch
/// and one row subset per atom, reconstructs each domain as a labeled
/// barycenter of the atom subsets, and takes one plain gradient step on
/// features and logits plus one projected step on every weight row. Step
/// sizes shrink as `1 / (1 + lr_decay * epoch)`.
pub fn fit(sources: &[LabeledPointCloud], target: &PointCloud, cfg: &DadilConfig) -> Result<(Dictionary, TrainTrace)> {
    let (dim, n_classes) = check_datasets(sources, target)?;
    cfg.validate(n_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let meta = DatasetsMeta { n_domains: sources.len() + 1, dim, n_classes };
    let mut dict = init_dictionary(cfg, meta, &mut rng)?;
    let m = batches_per_epoch(cfg, sources.iter().map(|s| s.len()).chain([target.len()]));

    let mut trace = TrainTrace::default();
    let mut beta = cfg.beta;
    for epoch in 0..cfg.n_iter {
        let prev = dict.clone();
        let mut losses = Vec::with_capacity(m);
        for b in 0..m {
            let batch = draw_batch(sources, target, cfg.atom_size, cfg.n_atoms, cfg, &mut rng)?;
            if beta.is_none() {
                let DomainBatch::Labeled { data, .. } = &batch.domains[0] else {
                    unreachable!("sources come first")
                };
                beta = Some(resolve_beta(data, cfg.beta_scale)?);
            }
            dict.set_beta(beta.expect("resolved above"));

            let (loss, recs) = batch_loss(&dict, &batch, cfg)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, detail: batch.describe() });
            }
            let g = envelope_gradients(&dict, &batch, &recs)?;
            if !g.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("non-finite gradient; {}", batch.describe()),
                });
            }
            apply(&mut dict, &g, cfg, epoch)?;
            losses.push(loss);
        }
        let (dx, dy, da) = update_magnitudes(&prev, &dict)?;
        trace.loss.push(losses);
        trace.delta_x.push(dx);
        trace.delta_y.push(dy);
        trace.delta_a.push(da);
    }
    trace.beta = dict.beta();
    Ok((dict, trace))
}

/// Barycentric coordinates of `target` over the fixed source datasets, found
/// by projected gradient descent on the mini-batch transport cost between the
/// target and the sources' barycenter. Starts from uniform weights; the
/// sources are never modified.
pub fn wbr_fit(sources: &[LabeledPointCloud], target: &PointCloud, cfg: &DadilConfig) -> Result<SimplexVector> {
    let (_, n_classes) = check_datasets(sources, target)?;
    cfg.validate(n_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut alpha = SimplexVector::uniform(sources.len())?;
    let m = batches_per_epoch(cfg, sources.iter().map(|s| s.len()).chain([target.len()]));

    for epoch in 0..cfg.n_iter {
        let lr_w = cfg.lr_weights * decay(cfg, epoch);
        for _ in 0..m {
            let mut atoms = Vec::with_capacity(sources.len());
            for s in sources {
                let (b, _) = sample_source_batch(s, cfg.batch_size, &mut rng)?;
                atoms.push(b.cloud().clone());
            }
            let (tb, _) = sample_unlabeled_batch(target, cfg.batch_size, &mut rng)?;
            let bcfg = BarycenterConfig {
                n_support: cfg.batch_size,
                seed: rng.next_u64(),
                parallel: false,
                ..cfg.barycenter.clone()
            };
            let bary = unlabeled_barycenter(&atoms, &alpha, &bcfg)?;
            let cost = feature_cost(&tb, &bary.cloud()?)?;
            let (_, outer) = wasserstein(&cost)?;
            let gx = cost_grad(outer.entries(), tb.support(), bary.features.view(), 1.0);
            let grad: Vec<f64> = bary
                .plans
                .iter()
                .zip(&atoms)
                .map(|(p, a)| {
                    let n_b = p.shape().1 as f64;
                    (&gx * &(p.entries().t().dot(&a.support()) * n_b)).sum()
                })
                .collect();
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite("barycentric regression gradient"));
            }
            let step: Vec<f64> = alpha.as_slice().iter().zip(&grad).map(|(a, g)| a - lr_w * g).collect();
            alpha = project_simplex(&step)?;
        }
    }
    Ok(alpha)
}
