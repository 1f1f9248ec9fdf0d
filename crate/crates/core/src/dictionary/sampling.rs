use rand::seq::index;
use rand::Rng;

use crate::cloud::{LabeledPointCloud, PointCloud};
use crate::error::{Error, Result};

/// `n_b` distinct indices below `n` when possible, otherwise drawn with
/// replacement.
pub fn sample_atom_indices<R: Rng>(n: usize, n_b: usize, rng: &mut R) -> Vec<usize> {
    if n_b <= n {
        index::sample(rng, n, n_b).into_vec()
    } else {
        (0..n_b).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Class-balanced batch: exactly `n_b / n_c` points of every class (hard
/// labels by argmax), uniform within class. A class smaller than its quota is
/// sampled with replacement; an empty class is an error.
pub fn sample_source_batch<R: Rng>(
    dataset: &LabeledPointCloud,
    n_b: usize,
    rng: &mut R,
) -> Result<(LabeledPointCloud, Vec<usize>)> {
    let n_c = dataset.n_classes();
    if n_b == 0 || n_b % n_c != 0 {
        return Err(Error::InvalidArgument(format!(
            "batch size {n_b} is not a positive multiple of {n_c} classes"
        )));
    }
    let per = n_b / n_c;
    let mut members = vec![Vec::new(); n_c];
    for (i, c) in dataset.hard_classes().into_iter().enumerate() {
        members[c].push(i);
    }
    let mut picked = Vec::with_capacity(n_b);
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::InvalidArgument(format!("class {c} has no samples")));
        }
        picked.extend(sample_atom_indices(m.len(), per, rng).into_iter().map(|i| m[i]));
    }
    Ok((dataset.select(&picked)?, picked))
}

/// Uniform batch without replacement when `n_b` fits, else with replacement.
pub fn sample_unlabeled_batch<R: Rng>(
    dataset: &PointCloud,
    n_b: usize,
    rng: &mut R,
) -> Result<(PointCloud, Vec<usize>)> {
    if n_b == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let picked = sample_atom_indices(dataset.len(), n_b, rng);
    Ok((dataset.select(&picked)?, picked))
}
