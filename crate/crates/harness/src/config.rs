//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! generator   = moons          # moons | blobs | files
//! angles      = 0, 10, 20, 30  # one rotation per domain, target last
//! translations = 0 0; 0 0; 0 0; 0.5 0   # optional, one vector per domain
//! noise       = 0.1
//! samples     = 600
//! classes     = 2
//! blob_dim    = 2
//! blob_spread = 2.0
//! files       = a.csv, b.csv, t.csv      # generator = files, target last
//! seeds       = 0, 1, 2, 3, 4
//! methods     = baseline, wb, wbr_r, wbr_e, dadil_r, dadil_e
//! n_iter      = 80
//! n_batches   = 12             # default: smallest domain / batch_size
//! batch_size  = 40
//! n_atoms     = 3
//! atom_size   = 120
//! lr          = 30
//! lr_weights  = 0.05
//! lr_decay    = 0.02
//! beta        = 0.5            # default: beta_scale x mean batch cost
//! beta_scale  = 3
//! bary_max_iter = 10
//! bary_tol    = 1e-6
//! clf_epochs  = 100
//! clf_lr      = 0.5
//! clf_batch_size = 32
//! interpolation = true
//! grid_resolution = 10
//! sparsity_ks = 3, 4, 5, 6, 7, 8
//! sparsity = false   # run the dictionary-size sweep during eval
//! output_dir = results
//! parallel = false
//! timing = true      # false writes wall_time_s = 0 (byte-identical reruns)
//! ```
//!
//! One assignment per line. Later assignments (including command-line
//! overrides applied through [`ExperimentConfig::set`]) replace earlier ones.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dadil_core::classify::ClassifierConfig;
use dadil_core::dictionary::DadilConfig;

use crate::data::{DatasetSpec, DomainShift, Generator};
use crate::error::{HarnessError, Result};

/// Adaptation methods compared by the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Classifier trained on the pooled sources.
    Baseline,
    /// Classifier trained on the uniform-weight barycenter of the sources.
    Wb,
    /// Barycentric regression on the sources, then reconstruction.
    WbrR,
    /// Barycentric regression on the sources, then source-classifier ensemble.
    WbrE,
    DadilR,
    DadilE,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Baseline, Method::Wb, Method::WbrR, Method::WbrE, Method::DadilR, Method::DadilE];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Wb => "wb",
            Method::WbrR => "wbr_r",
            Method::WbrE => "wbr_e",
            Method::DadilR => "dadil_r",
            Method::DadilE => "dadil_e",
        }
    }

    pub fn needs_dictionary(self) -> bool {
        matches!(self, Method::DadilR | Method::DadilE)
    }

    pub fn needs_regression(self) -> bool {
        matches!(self, Method::WbrR | Method::WbrE)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationConfig {
    pub enabled: bool,
    pub grid_resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub dadil: DadilConfig,
    pub classifier: ClassifierConfig,
    pub methods: Vec<Method>,
    pub interpolation: InterpolationConfig,
    /// Dictionary sizes for the sparsity sweep.
    pub sparsity_ks: Vec<usize>,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Run the seed x method job matrix on the rayon pool.
    pub parallel: bool,
    /// Record wall-clock times; when off, `wall_time_s` is written as 0 so
    /// that repeated runs produce identical result files.
    pub timing: bool,
    /// Run the dictionary-size sweep during `eval`.
    pub sparsity: bool,
}

impl Default for ExperimentConfig {
    /// The reference benchmark: two moons rotated by 0/10/20 degrees
    /// (sources) and 30 degrees (target), 600 points per domain, noise 0.1.
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::rotated_moons(&[0.0, 10.0, 20.0, 30.0], 600, 0.1, 0),
            dadil: DadilConfig::default(),
            classifier: ClassifierConfig::default(),
            methods: Method::ALL.to_vec(),
            interpolation: InterpolationConfig { enabled: false, grid_resolution: 10 },
            sparsity_ks: vec![3, 4, 5, 6, 7, 8],
            output_dir: PathBuf::from("results"),
            seeds: vec![0, 1, 2, 3, 4],
            parallel: false,
            timing: true,
            sparsity: false,
        }
    }
}

/// Every key accepted by [`ExperimentConfig::set`], with a short help text.
pub const KEYS: &[(&str, &str)] = &[
    ("generator", "moons | blobs | files"),
    ("angles", "comma-separated rotation per domain (degrees), target last"),
    ("translations", "one space-separated vector per domain, separated by ';'"),
    ("noise", "Gaussian noise standard deviation"),
    ("samples", "points per synthetic domain"),
    ("classes", "number of classes"),
    ("blob_dim", "dimension of the blobs generator"),
    ("blob_spread", "radius of the blob centres"),
    ("files", "comma-separated feature CSVs, target last"),
    ("seeds", "comma-separated seeds"),
    ("methods", "comma-separated subset of baseline, wb, wbr_r, wbr_e, dadil_r, dadil_e"),
    ("n_iter", "dictionary learning epochs"),
    ("n_batches", "batches per epoch"),
    ("batch_size", "points per domain batch"),
    ("n_atoms", "dictionary size"),
    ("atom_size", "points per atom"),
    ("lr", "step size for atom points and labels"),
    ("lr_weights", "step size for barycentric coordinates"),
    ("lr_decay", "step sizes are divided by 1 + lr_decay x epoch"),
    ("beta", "label weight in the ground cost"),
    ("beta_scale", "multiplier of the derived label weight"),
    ("bary_max_iter", "barycenter sweeps"),
    ("bary_tol", "barycenter stopping tolerance"),
    ("clf_epochs", "classifier epochs"),
    ("clf_lr", "classifier step size"),
    ("clf_batch_size", "classifier batch size"),
    ("interpolation", "run the simplex-grid study (true/false)"),
    ("grid_resolution", "simplex-grid resolution"),
    ("sparsity_ks", "dictionary sizes for the sparsity sweep"),
    ("sparsity", "run the sparsity sweep during eval (true/false)"),
    ("output_dir", "output directory"),
    ("parallel", "run jobs on the thread pool (true/false)"),
    ("timing", "record wall-clock times (true/false)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(HarnessError::Config(format!("{key}: expected a boolean, got {other:?}"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let d = &mut self.dadil;
        match key {
            "generator" => {
                self.dataset.generator = match value.trim() {
                    "moons" => Generator::Moons,
                    "blobs" | "gaussian_blobs" => {
                        let dim = match self.dataset.generator {
                            Generator::GaussianBlobs { dim, .. } => dim,
                            _ => 2,
                        };
                        Generator::GaussianBlobs { dim, spread: 2.0 }
                    }
                    "files" | "file" => Generator::Files(Vec::new()),
                    other => return Err(HarnessError::Config(format!("unknown generator {other:?}"))),
                }
            }
            "angles" => {
                let angles: Vec<f64> = parse_list(key, value)?;
                let noise = self.dataset.shifts.first().map_or(0.1, |s| s.noise);
                let old = std::mem::take(&mut self.dataset.shifts);
                self.dataset.shifts = angles
                    .iter()
                    .enumerate()
                    .map(|(l, &a)| DomainShift {
                        rotation_deg: a,
                        translation: old.get(l).map(|s| s.translation.clone()).unwrap_or_default(),
                        noise,
                    })
                    .collect();
            }
            "translations" => {
                let vectors: Vec<Vec<f64>> = value
                    .split(';')
                    .map(|v| v.split_whitespace().map(|x| parse(key, x)).collect::<Result<Vec<f64>>>())
                    .collect::<Result<_>>()?;
                if vectors.len() != self.dataset.shifts.len() {
                    return Err(HarnessError::Config(format!(
                        "translations: {} vectors for {} domains (set angles first)",
                        vectors.len(),
                        self.dataset.shifts.len()
                    )));
                }
                for (s, t) in self.dataset.shifts.iter_mut().zip(vectors) {
                    s.translation = t;
                }
            }
            "noise" => {
                let n: f64 = parse(key, value)?;
                self.dataset.shifts.iter_mut().for_each(|s| s.noise = n);
            }
            "samples" => self.dataset.samples_per_domain = parse(key, value)?,
            "classes" => self.dataset.n_classes = parse(key, value)?,
            "blob_dim" | "blob_spread" => {
                let (mut dim, mut spread) = match self.dataset.generator {
                    Generator::GaussianBlobs { dim, spread } => (dim, spread),
                    _ => return Err(HarnessError::Config(format!("{key} requires generator = blobs"))),
                };
                if key == "blob_dim" {
                    dim = parse(key, value)?;
                } else {
                    spread = parse(key, value)?;
                }
                self.dataset.generator = Generator::GaussianBlobs { dim, spread };
            }
            "files" => {
                self.dataset.generator =
                    Generator::Files(value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect())
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "n_iter" => d.n_iter = parse(key, value)?,
            "n_batches" => d.n_batches = Some(parse(key, value)?),
            "batch_size" => d.batch_size = parse(key, value)?,
            "n_atoms" => d.n_atoms = parse(key, value)?,
            "atom_size" => d.atom_size = parse(key, value)?,
            "lr" => d.lr = parse(key, value)?,
            "lr_weights" => d.lr_weights = parse(key, value)?,
            "lr_decay" => d.lr_decay = parse(key, value)?,
            "beta" => d.beta = Some(parse(key, value)?),
            "beta_scale" => d.beta_scale = parse(key, value)?,
            "bary_max_iter" => d.barycenter.max_iter = parse(key, value)?,
            "bary_tol" => d.barycenter.tol = parse(key, value)?,
            "clf_epochs" => self.classifier.epochs = parse(key, value)?,
            "clf_lr" => self.classifier.lr = parse(key, value)?,
            "clf_batch_size" => self.classifier.batch_size = parse(key, value)?,
            "interpolation" => self.interpolation.enabled = parse_bool(key, value)?,
            "grid_resolution" => self.interpolation.grid_resolution = parse(key, value)?,
            "sparsity_ks" => self.sparsity_ks = parse_list(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "parallel" => self.parallel = parse_bool(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "sparsity" => self.sparsity = parse_bool(key, value)?,
            other => return Err(HarnessError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment of a config file's text on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("{origin}:{}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| HarnessError::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Defaults overridden by the file at `path`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.methods.is_empty() {
            return Err(HarnessError::Config("no methods requested".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds given".into()));
        }
        if self.interpolation.enabled && self.interpolation.grid_resolution < 2 {
            return Err(HarnessError::Config("grid_resolution must be >= 2".into()));
        }
        if self.sparsity_ks.iter().any(|&k| k == 0) {
            return Err(HarnessError::Config("sparsity_ks must be >= 1".into()));
        }
        let n_c = match self.dataset.generator {
            Generator::Files(_) => 0,
            _ => self.dataset.n_classes,
        };
        self.dadil.validate(n_c).map_err(|e| HarnessError::Config(e.to_string()))?;
        self.classifier.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
