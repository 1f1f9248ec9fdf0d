//! Synthetic shifted domains, feature CSV files and stratified splits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dadil_core::cloud::argmax_rows;
use dadil_core::{LabeledPointCloud, PointCloud};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HarnessError, Result};

/// Per-domain transformation applied to the base sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainShift {
    /// Counter-clockwise rotation about the origin, degrees.
    pub rotation_deg: f64,
    /// Added after rotation; empty means no translation.
    pub translation: Vec<f64>,
    /// Standard deviation of isotropic Gaussian noise added per point.
    pub noise: f64,
}

impl DomainShift {
    pub fn rotation(deg: f64, noise: f64) -> Self {
        Self { rotation_deg: deg, translation: Vec::new(), noise }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Two interleaving half circles in 2-D, two classes.
    Moons,
    /// Isotropic Gaussian classes with centers on a circle of `spread`.
    GaussianBlobs { dim: usize, spread: f64 },
    /// Feature CSV files, one per domain, in domain order.
    Files(Vec<PathBuf>),
}

/// A list of domains; by convention the last one is the target.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub shifts: Vec<DomainShift>,
    pub samples_per_domain: usize,
    pub n_classes: usize,
    pub seed: u64,
}

impl DatasetSpec {
    /// Two moons rotated by each of `angles` (degrees), last angle the target.
    pub fn rotated_moons(angles: &[f64], samples_per_domain: usize, noise: f64, seed: u64) -> Self {
        Self {
            generator: Generator::Moons,
            shifts: angles.iter().map(|&a| DomainShift::rotation(a, noise)).collect(),
            samples_per_domain,
            n_classes: 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_domains = match &self.generator {
            Generator::Files(paths) => paths.len(),
            _ => self.shifts.len(),
        };
        if n_domains < 2 {
            return Err(HarnessError::Config("need at least one source and one target domain".into()));
        }
        if let Some(s) = self.shifts.iter().find(|s| !s.rotation_deg.is_finite() || !(s.noise >= 0.0)) {
            return Err(HarnessError::Config(format!("invalid shift {s:?}")));
        }
        if !matches!(self.generator, Generator::Files(_)) {
            if self.n_classes < 2 {
                return Err(HarnessError::Config("need at least two classes".into()));
            }
            if self.samples_per_domain < self.n_classes {
                return Err(HarnessError::Config("fewer samples than classes".into()));
            }
        }
        if matches!(self.generator, Generator::Moons) && self.n_classes != 2 {
            return Err(HarnessError::Config("moons have exactly two classes".into()));
        }
        Ok(())
    }
}

/// Points per class: `n / n_c`, the remainder spread over the first classes.
fn class_counts(n: usize, n_c: usize) -> Vec<usize> {
    (0..n_c).map(|c| n / n_c + usize::from(c < n % n_c)).collect()
}

fn moons<R: Rng>(n: usize, rng: &mut R) -> (Array2<f64>, Vec<usize>) {
    let counts = class_counts(n, 2);
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    let mut i = 0;
    for (c, &m) in counts.iter().enumerate() {
        for _ in 0..m {
            let t = rng.random_range(0.0..std::f64::consts::PI);
            let (px, py) = if c == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
            x[[i, 0]] = px;
            x[[i, 1]] = py;
            y.push(c);
            i += 1;
        }
    }
    (x, y)
}

fn blobs<R: Rng>(n: usize, n_c: usize, dim: usize, spread: f64, rng: &mut R) -> (Array2<f64>, Vec<usize>) {
    let counts = class_counts(n, n_c);
    let mut x = Array2::zeros((n, dim));
    let mut y = Vec::with_capacity(n);
    let mut i = 0;
    for (c, &m) in counts.iter().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / n_c as f64;
        for _ in 0..m {
            for j in 0..dim {
                let center = match j {
                    0 => spread * angle.cos(),
                    1 => spread * angle.sin(),
                    _ => 0.0,
                };
                x[[i, j]] = center + rng.sample::<f64, _>(StandardNormal) * 0.5;
            }
            y.push(c);
            i += 1;
        }
    }
    (x, y)
}

/// Rotates the first two coordinates, translates, then adds noise.
pub fn apply_shift<R: Rng>(x: &mut Array2<f64>, shift: &DomainShift, rng: &mut R) -> Result<()> {
    let d = x.ncols();
    if !shift.translation.is_empty() && shift.translation.len() != d {
        return Err(HarnessError::Config(format!(
            "translation has {} entries for {d}-D data",
            shift.translation.len()
        )));
    }
    if shift.rotation_deg != 0.0 {
        if d < 2 {
            return Err(HarnessError::Config("rotation needs at least two features".into()));
        }
        let (s, c) = shift.rotation_deg.to_radians().sin_cos();
        for mut row in x.outer_iter_mut() {
            let (a, b) = (row[0], row[1]);
            row[0] = c * a - s * b;
            row[1] = s * a + c * b;
        }
    }
    for mut row in x.outer_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            if let Some(t) = shift.translation.get(j) {
                *v += t;
            }
            if shift.noise > 0.0 {
                *v += shift.noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(())
}

/// Generates (or loads) every domain. Domain `l` of a synthetic spec is an
/// independent draw from the base generator, seeded by `(seed, l)`, with the
/// `l`-th shift applied; class counts are identical across domains.
pub fn generate_domains(spec: &DatasetSpec) -> Result<Vec<LabeledPointCloud>> {
    spec.validate()?;
    if let Generator::Files(paths) = &spec.generator {
        return paths
            .iter()
            .map(|p| {
                load_feature_csv(p)?
                    .into_labeled()
                    .ok_or_else(|| HarnessError::Parse(format!("{}: label column required", p.display())))
            })
            .collect();
    }
    spec.shifts
        .iter()
        .enumerate()
        .map(|(l, shift)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1_000_003).wrapping_add(l as u64));
            let n = spec.samples_per_domain;
            let (mut x, y) = match spec.generator {
                Generator::Moons => moons(n, &mut rng),
                Generator::GaussianBlobs { dim, spread } => blobs(n, spec.n_classes, dim, spread, &mut rng),
                Generator::Files(_) => unreachable!("handled above"),
            };
            apply_shift(&mut x, shift, &mut rng)?;
            Ok(LabeledPointCloud::from_classes(x, &y, spec.n_classes)?)
        })
        .collect()
}

/// Contents of a feature CSV: features plus optional hard labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl FeatureFile {
    /// One-hot labeled cloud with `max label + 1` classes (at least two).
    pub fn into_labeled(self) -> Option<LabeledPointCloud> {
        let labels = self.labels?;
        let n_c = labels.iter().max().map_or(2, |m| (m + 1).max(2));
        LabeledPointCloud::from_classes(self.features, &labels, n_c).ok()
    }

    pub fn cloud(&self) -> Result<PointCloud> {
        Ok(PointCloud::new(self.features.clone())?)
    }
}

/// Reads a `f0,...,f{d-1}[,label]` file. Errors name the offending line.
pub fn load_feature_csv(path: &Path) -> Result<FeatureFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
    let where_ = |line: u64| format!("{}:{line}", path.display());
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::Parse(format!("{}: {e}", where_(1))))?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let has_label = names.last() == Some(&"label");
    let d = names.len() - usize::from(has_label);
    if d == 0 || names[..d].iter().enumerate().any(|(j, h)| *h != format!("f{j}")) {
        return Err(HarnessError::Parse(format!(
            "{}: header must be f0,...,f{{d-1}}[,label], got {:?}",
            where_(1),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(HarnessError::Parse(format!(
                "{}: expected {} fields, found {}",
                where_(line),
                names.len(),
                rec.len()
            )));
        }
        for (j, cell) in rec.iter().take(d).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| HarnessError::Parse(format!("{}: column f{j}: not a number: {cell:?}", where_(line))))?;
            if !v.is_finite() {
                return Err(HarnessError::Parse(format!("{}: column f{j}: non-finite value", where_(line))));
            }
            flat.push(v);
        }
        if has_label {
            let cell = rec[d].trim();
            let c: usize = cell
                .parse()
                .map_err(|_| HarnessError::Parse(format!("{}: label is not a class index: {cell:?}", where_(line))))?;
            labels.push(c);
        }
    }
    let n = flat.len() / d;
    if n == 0 {
        return Err(HarnessError::Parse(format!("{}: no data rows", path.display())));
    }
    let features = Array2::from_shape_vec((n, d), flat).expect("rows checked");
    Ok(FeatureFile { features, labels: has_label.then_some(labels) })
}

/// Writes features (and hard labels, if given) in the format read by
/// [`load_feature_csv`]. Floats use the shortest exact representation.
pub fn write_feature_csv(path: &Path, features: &Array2<f64>, labels: Option<&[usize]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..features.ncols()).map(|j| format!("f{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in features.outer_iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a labeled cloud with arg-max labels.
pub fn write_labeled_csv(path: &Path, data: &LabeledPointCloud) -> Result<()> {
    write_feature_csv(path, &data.features().to_owned(), Some(&data.hard_classes()))
}

/// Seeded split keeping `train_fraction` of every class in the train part.
/// Returns `(train_indices, test_indices)`, each sorted.
pub fn stratified_split(classes: &[usize], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_c = classes.iter().max().map_or(0, |m| m + 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_c {
        let mut idx: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Train/test halves of a labeled domain.
pub fn split_domain(data: &LabeledPointCloud, train_fraction: f64, seed: u64) -> Result<(LabeledPointCloud, LabeledPointCloud)> {
    let (tr, te) = stratified_split(&data.hard_classes(), train_fraction, seed);
    Ok((data.select(&tr)?, data.select(&te)?))
}

/// Hard classes of a label matrix.
pub fn hard_labels(labels: &Array2<f64>) -> Vec<usize> {
    argmax_rows(labels.view())
}

/// Concatenation of labeled clouds.
pub fn pool(domains: &[LabeledPointCloud]) -> Result<LabeledPointCloud> {
    let x = ndarray::concatenate(Axis(0), &domains.iter().map(|d| d.features()).collect::<Vec<_>>())
        .map_err(|e| HarnessError::Config(format!("pooling domains: {e}")))?;
    let y = ndarray::concatenate(Axis(0), &domains.iter().map(|d| d.labels()).collect::<Vec<_>>())
        .map_err(|e| HarnessError::Config(format!("pooling domains: {e}")))?;
    Ok(LabeledPointCloud::new(PointCloud::new(x)?, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts_are_balanced() {
        assert_eq!(class_counts(10, 3), vec![4, 3, 3]);
        assert_eq!(class_counts(600, 2), vec![300, 300]);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (x, _) = moons(20, &mut rng);
        let mut y = x.clone();
        apply_shift(&mut y, &DomainShift::rotation(0.0, 0.0), &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn split_is_stratified() {
        let classes: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let (tr, te) = stratified_split(&classes, 0.8, 3);
        assert_eq!(tr.len(), 80);
        assert_eq!(te.len(), 20);
        assert_eq!(tr.iter().filter(|&&i| classes[i] == 0).count(), 40);
    }
}
