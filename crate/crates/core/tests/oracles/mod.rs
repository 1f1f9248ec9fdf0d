//! Independent brute-force oracles shared by the integration tests and the
//! acceptance suite. Nothing here calls into the solver or the gradient code
//! it is used to check.
#![allow(dead_code)]

use dadil_core::dictionary::{Atom, DadilConfig, Dictionary, DomainBatch, MiniBatch, Reconstruction};
use dadil_core::barycenter::BarycenterConfig;
use dadil_core::ot::project_simplex;
use dadil_core::{LabeledPointCloud, PointCloud};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0))
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Array2<f64> {
    let mut y = Array2::from_shape_fn((n, c), |_| rng.random_range(0.0..1.0));
    for mut row in y.outer_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    y
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn assignment_oracle(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / n as f64
}

/// Multiscale lattice search over the simplex: exhaustive at step 1/20, then
/// repeated local searches with halving steps down to ~1e-3.
pub fn grid_projection_oracle(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let obj = |w: &[f64]| w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let mut best: Vec<f64> = vec![1.0 / k as f64; k];
    let mut best_val = obj(&best);

    let r = 20usize;
    let mut counts = vec![0usize; k];
    fn enumerate(pos: usize, left: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            enumerate(pos + 1, left - c, counts, f);
        }
    }
    enumerate(0, r, &mut counts, &mut |c| {
        let w: Vec<f64> = c.iter().map(|&x| x as f64 / r as f64).collect();
        let val = obj(&w);
        if val < best_val {
            best_val = val;
            best = w;
        }
    });

    let mut h = 1.0 / r as f64;
    while h > 1e-3 {
        h /= 2.0;
        loop {
            let mut improved = false;
            let center = best.clone();
            let mut offs = vec![-2i32; k - 1];
            loop {
                let mut w = center.clone();
                let mut shift = 0.0;
                for (i, &o) in offs.iter().enumerate() {
                    w[i] += o as f64 * h;
                    shift += o as f64 * h;
                }
                w[k - 1] -= shift;
                if w.iter().all(|&x| x >= -1e-15) {
                    let val = obj(&w);
                    if val < best_val - 1e-15 {
                        best_val = val;
                        best = w;
                        improved = true;
                    }
                }
                let mut i = 0;
                while i < k - 1 {
                    offs[i] += 1;
                    if offs[i] <= 2 {
                        break;
                    }
                    offs[i] = -2;
                    i += 1;
                }
                if i == k - 1 {
                    break;
                }
            }
            if !improved || k == 1 {
                break;
            }
        }
    }
    best
}

/// Small random dictionary-learning problem: one labeled source and one
/// unlabeled target batch of `n_b` points in `d` dimensions, `k` atoms of
/// `n_b + 4` points of which `n_b` are drawn for the batch.
pub struct GradInstance {
    pub dict: Dictionary,
    pub batch: MiniBatch,
    pub cfg: DadilConfig,
}

pub fn grad_instance(seed: u64, d: usize, n_b: usize, k: usize) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_c = 2;
    let atom_size = n_b + 4;
    let mut normal = |r: usize, c: usize, s: f64| Array2::from_shape_simple_fn((r, c), || s * rng.sample::<f64, _>(StandardNormal));
    let atoms: Vec<Atom> = (0..k).map(|_| Atom::new(normal(atom_size, d, 1.0), normal(atom_size, n_c, 1.0)).unwrap()).collect();
    let src_x = normal(n_b, d, 1.0);
    let tgt_x = normal(n_b, d, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut weights = Array2::zeros((2, k));
    for l in 0..2 {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for j in 0..k {
            weights[[l, j]] = raw[j] / s;
        }
    }
    let classes: Vec<usize> = (0..n_b).map(|i| i % n_c).collect();
    let source = LabeledPointCloud::from_classes(src_x, &classes, n_c).unwrap();
    let target = PointCloud::new(tgt_x).unwrap();
    let atom_indices = (0..k)
        .map(|_| rand::seq::index::sample(&mut rng, atom_size, n_b).into_vec())
        .collect();
    let batch = MiniBatch {
        domains: vec![
            DomainBatch::Labeled { data: source, indices: (0..n_b).collect() },
            DomainBatch::Unlabeled { data: target, indices: (0..n_b).collect() },
        ],
        atom_indices,
        barycenter_seeds: vec![rng.random(), rng.random()],
    };
    let cfg = DadilConfig {
        batch_size: n_b,
        n_atoms: k,
        atom_size,
        beta: Some(0.7),
        barycenter: BarycenterConfig { max_iter: 10, tol: 1e-9, ..Default::default() },
        ..Default::default()
    };
    let dict = Dictionary::new(atoms, weights, 0.7).unwrap();
    GradInstance { dict, batch, cfg }
}

/// Raw parameters of a dictionary, perturbed freely by finite differences.
#[derive(Clone)]
pub struct Params {
    pub features: Vec<Array2<f64>>,
    pub logits: Vec<Array2<f64>>,
    pub weights: Array2<f64>,
}

impl Params {
    pub fn of(dict: &Dictionary) -> Self {
        Self {
            features: dict.atoms().iter().map(|a| a.features.clone()).collect(),
            logits: dict.atoms().iter().map(|a| a.logits.clone()).collect(),
            weights: dict.weights().to_owned(),
        }
    }

    pub fn to_dictionary(&self, beta: f64) -> Dictionary {
        let atoms = self
            .features
            .iter()
            .zip(&self.logits)
            .map(|(f, l)| Atom::new(f.clone(), l.clone()).unwrap())
            .collect();
        Dictionary::new(atoms, self.weights.clone(), beta).unwrap()
    }
}

fn softmax_row(l: &[f64]) -> Vec<f64> {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// The batch loss with every plan taken from `recs` and held fixed, written
/// out with explicit loops.
pub fn surrogate_loss(p: &Params, beta: f64, batch: &MiniBatch, recs: &[Reconstruction]) -> f64 {
    let k_atoms = p.features.len();
    let mut total = 0.0;
    for (l, (dom, rec)) in batch.domains.iter().zip(recs).enumerate() {
        let outer = rec.outer_plan.entries();
        let n_bary = outer.ncols();
        let d = p.features[0].ncols();
        let c = p.logits[0].ncols();
        let mut xb = vec![vec![0.0; d]; n_bary];
        let mut yb = vec![vec![0.0; c]; n_bary];
        for k in 0..k_atoms {
            let pi = rec.barycenter.plans[k].entries();
            let a = p.weights[[l, k]];
            for (i, &row) in batch.atom_indices[k].iter().enumerate() {
                let y = softmax_row(p.logits[k].row(row).as_slice().unwrap());
                for j in 0..n_bary {
                    let w = a * n_bary as f64 * pi[[i, j]];
                    for t in 0..d {
                        xb[j][t] += w * p.features[k][[row, t]];
                    }
                    for t in 0..c {
                        yb[j][t] += w * y[t];
                    }
                }
            }
        }
        let x = dom.features();
        for i in 0..outer.nrows() {
            for j in 0..n_bary {
                let mut cost = 0.0;
                for t in 0..d {
                    cost += (x[[i, t]] - xb[j][t]).powi(2);
                }
                if let DomainBatch::Labeled { data, .. } = dom {
                    for t in 0..c {
                        cost += beta * (data.labels()[[i, t]] - yb[j][t]).powi(2);
                    }
                }
                total += outer[[i, j]] * cost;
            }
        }
    }
    total / batch.domains.len() as f64
}

/// Central differences of `f` along every raw parameter entry.
pub fn finite_differences(p: &Params, h: f64, mut f: impl FnMut(&Params) -> f64) -> Params {
    let mut g = Params {
        features: p.features.iter().map(|a| Array2::zeros(a.dim())).collect(),
        logits: p.logits.iter().map(|a| Array2::zeros(a.dim())).collect(),
        weights: Array2::zeros(p.weights.dim()),
    };
    for k in 0..p.features.len() {
        for idx in ndarray::indices(p.features[k].dim()) {
            let mut q = p.clone();
            q.features[k][idx] += h;
            let up = f(&q);
            q.features[k][idx] -= 2.0 * h;
            g.features[k][idx] = (up - f(&q)) / (2.0 * h);
        }
        for idx in ndarray::indices(p.logits[k].dim()) {
            let mut q = p.clone();
            q.logits[k][idx] += h;
            let up = f(&q);
            q.logits[k][idx] -= 2.0 * h;
            g.logits[k][idx] = (up - f(&q)) / (2.0 * h);
        }
    }
    for idx in ndarray::indices(p.weights.dim()) {
        let mut q = p.clone();
        q.weights[idx] += h;
        let up = f(&q);
        q.weights[idx] -= 2.0 * h;
        g.weights[idx] = (up - f(&q)) / (2.0 * h);
    }
    g
}

/// `||a - b|| / ||b||` over a list of blocks.
pub fn relative_error<'a>(a: impl IntoIterator<Item = &'a Array2<f64>>, b: impl IntoIterator<Item = &'a Array2<f64>>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.into_iter().zip(b) {
        num += x.iter().zip(y.iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
        den += y.iter().map(|v| v * v).sum::<f64>();
    }
    num.sqrt() / den.sqrt().max(1e-300)
}

/// Support pattern of every plan in a forward pass, plus sweep counts.
pub fn plan_signature(recs: &[Reconstruction]) -> Vec<Vec<bool>> {
    let mut sig = Vec::new();
    for r in recs {
        sig.push(r.outer_plan.entries().iter().map(|&v| v > 1e-12).collect());
        for p in &r.barycenter.plans {
            sig.push(p.entries().iter().map(|&v| v > 1e-12).collect());
        }
        sig.push(vec![false; r.barycenter.iterations]);
    }
    sig
}

/// Projected Gaussian draws, used to compare coordinates against random
/// alternatives.
pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> dadil_core::ot::SimplexVector {
    let v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    project_simplex(&v).unwrap()
}
