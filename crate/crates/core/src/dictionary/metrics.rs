use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::ot::SimplexVector;

use super::{softmax_rows, Dictionary};

/// Entries at or below this magnitude count as zero in [`sparsity_score`].
pub const DEFAULT_SPARSITY_EPS: f64 = 1e-4;

/// Percentage of (numerically) zero coordinates: `100 * (1 - ||alpha||_0 / K)`.
pub fn sparsity_score(alpha: &SimplexVector, eps: f64) -> f64 {
    let k = alpha.len();
    let nonzero = alpha.as_slice().iter().filter(|w| w.abs() > eps).count();
    100.0 * (1.0 - nonzero as f64 / k as f64)
}

/// Mean squared distance from each atom point to its 5 nearest neighbours
/// within the same atom (the point itself excluded).
pub fn density_score(atoms: &[PointCloud]) -> Result<f64> {
    const NEIGHBOURS: usize = 5;
    if atoms.is_empty() {
        return Err(Error::Empty("atom list"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for atom in atoms {
        let n = atom.len();
        if n <= NEIGHBOURS {
            return Err(Error::InvalidArgument(format!(
                "density needs at least {} points per atom, got {n}",
                NEIGHBOURS + 1
            )));
        }
        let x = atom.support();
        let mut dists = Vec::with_capacity(n - 1);
        for i in 0..n {
            dists.clear();
            for j in (0..n).filter(|&j| j != i) {
                let d: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                dists.push(d);
            }
            dists.select_nth_unstable_by(NEIGHBOURS - 1, f64::total_cmp);
            total += dists[..NEIGHBOURS].iter().sum::<f64>();
        }
        count += n;
    }
    Ok(total / (NEIGHBOURS * count) as f64)
}

/// Squared Frobenius magnitudes of one update: features and softmax labels
/// averaged over atoms, weights summed.
pub fn update_magnitudes(prev: &Dictionary, next: &Dictionary) -> Result<(f64, f64, f64)> {
    if prev.n_atoms() != next.n_atoms()
        || prev.atom_size() != next.atom_size()
        || prev.dim() != next.dim()
        || prev.n_classes() != next.n_classes()
        || prev.n_domains() != next.n_domains()
    {
        return Err(Error::DimensionMismatch("dictionaries differ in shape".into()));
    }
    let sq = |a: f64, b: f64| (a - b) * (a - b);
    let k = prev.n_atoms() as f64;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in prev.atoms().iter().zip(next.atoms()) {
        dx += a.features.iter().zip(b.features.iter()).map(|(u, v)| sq(*u, *v)).sum::<f64>();
        let (ya, yb) = (softmax_rows(a.logits.view()), softmax_rows(b.logits.view()));
        dy += ya.iter().zip(yb.iter()).map(|(u, v)| sq(*u, *v)).sum::<f64>();
    }
    let da = prev.weights().iter().zip(next.weights().iter()).map(|(u, v)| sq(*u, *v)).sum();
    Ok((dx / k, dy / k, da))
}
