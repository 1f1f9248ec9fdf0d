//! The seed x method job matrix.
//!
//! For every seed the domains are generated (or loaded), the last one is the
//! target, and the target is split 80/20 by class. Fitting paths only ever
//! see the unlabeled 80% part; accuracies are measured on the 20% part.
//! Artifacts shared by several methods (the dictionary, the regression
//! weights, per-source classifiers) are fitted once per seed; a method whose
//! artifact failed fails on its own without aborting the others.

use std::time::Instant;

use dadil_core::barycenter::{labeled_barycenter, BarycenterConfig};
use dadil_core::classify::{accuracy, bound_terms, dadil_e, dadil_r, train_classifier, Ensemble, SoftmaxClassifier};
use dadil_core::dictionary::{fit, resolve_beta, wbr_fit, DadilConfig, Dictionary, TrainTrace};
use dadil_core::ot::SimplexVector;
use dadil_core::{LabeledPointCloud, PointCloud};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Method};
use crate::data::{generate_domains, pool, split_domain, Generator};
use crate::error::{HarnessError, Result};

/// Share of each target class used (unlabeled) for fitting.
pub const TRAIN_FRACTION: f64 = 0.8;

/// One evaluated (method, seed) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub target: String,
    pub seed: u64,
    /// Percentage of correctly classified held-out target points.
    pub accuracy: f64,
    /// Transport cost between the target's reconstruction and the target
    /// (dictionary methods only).
    pub recon_w2: Option<f64>,
    /// Weighted transport cost from the atoms to the reconstruction
    /// (dictionary methods only).
    pub gamma: Option<f64>,
    /// Time spent on this method, including the shared artifacts it used.
    pub wall_time_s: f64,
}

/// The data of one seed, with the target split already applied.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub sources: Vec<LabeledPointCloud>,
    /// Unlabeled training part of the target.
    pub target_train: PointCloud,
    /// Held-out labeled part of the target, for evaluation only.
    pub target_test: LabeledPointCloud,
}

/// Name of the target domain as written to result files.
pub fn target_name(cfg: &ExperimentConfig) -> String {
    match &cfg.dataset.generator {
        Generator::Files(paths) => paths
            .last()
            .and_then(|p| p.file_stem())
            .map_or_else(|| "target".to_string(), |s| s.to_string_lossy().into_owned()),
        g => {
            let base = if matches!(g, Generator::Moons) { "moons" } else { "blobs" };
            let angle = cfg.dataset.shifts.last().map_or(0.0, |s| s.rotation_deg);
            format!("{base}_{angle}deg")
        }
    }
}

/// Generates the domains for `seed` and splits the target.
pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let mut spec = cfg.dataset.clone();
    spec.seed = seed;
    let mut domains = generate_domains(&spec)?;
    let target = domains.pop().expect("validated: at least two domains");
    let (train, test) = split_domain(&target, TRAIN_FRACTION, seed)?;
    let (target_train, _labels_dropped) = train.into_parts();
    Ok(SeedData { sources: domains, target_train, target_test: test })
}

/// The dictionary configuration used for `seed`.
pub fn dadil_config(cfg: &ExperimentConfig, seed: u64) -> DadilConfig {
    DadilConfig { seed, ..cfg.dadil.clone() }
}

/// Barycenter settings for reconstructing from a trained dictionary.
pub fn reconstruction_config(dict: &Dictionary, cfg: &DadilConfig) -> BarycenterConfig {
    BarycenterConfig { n_support: dict.atom_size(), beta: dict.beta(), seed: cfg.seed, ..cfg.barycenter.clone() }
}

/// Label weight for the methods that mix the sources directly: the
/// configured one, else the same rule the dictionary uses, applied to the
/// whole first source.
pub fn source_beta(cfg: &DadilConfig, sources: &[LabeledPointCloud]) -> Result<f64> {
    match cfg.beta {
        Some(b) => Ok(b),
        None => Ok(resolve_beta(&sources[0], cfg.beta_scale)?),
    }
}

/// Classifier trained on the labeled barycenter of the sources at `alpha`,
/// with as many points as the smallest source.
pub fn barycenter_classifier(
    sources: &[LabeledPointCloud],
    alpha: &SimplexVector,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<SoftmaxClassifier> {
    let d = dadil_config(cfg, seed);
    let bcfg = BarycenterConfig {
        n_support: sources.iter().map(|s| s.len()).min().unwrap_or(1),
        beta: source_beta(&d, sources)?,
        seed,
        ..d.barycenter.clone()
    };
    let b = labeled_barycenter(sources, alpha, &bcfg)?.labeled_cloud()?;
    Ok(train_classifier(&b, &cfg.classifier)?)
}

/// A fitted dictionary with its training trace.
#[derive(Debug, Clone)]
pub struct FittedDictionary {
    pub seed: u64,
    pub dictionary: Dictionary,
    pub trace: TrainTrace,
    pub wall_time_s: f64,
}

struct Timed<T> {
    value: std::result::Result<T, String>,
    secs: f64,
}

impl<T> Timed<T> {
    fn run(f: impl FnOnce() -> Result<T>) -> Self {
        let t0 = Instant::now();
        let value = f().map_err(|e| e.to_string());
        Self { value, secs: t0.elapsed().as_secs_f64() }
    }

    fn get(&self, what: &'static str) -> Result<&T> {
        self.value.as_ref().map_err(|m| HarnessError::Artifact { what, message: m.clone() })
    }
}

struct SeedArtifacts {
    seed: u64,
    data: std::result::Result<SeedData, String>,
    dictionary: Option<Timed<(Dictionary, TrainTrace)>>,
    regression: Option<Timed<SimplexVector>>,
    source_classifiers: Option<Timed<Vec<SoftmaxClassifier>>>,
}

fn fit_artifacts(cfg: &ExperimentConfig, seed: u64) -> SeedArtifacts {
    let data = match prepare_seed(cfg, seed) {
        Ok(d) => d,
        Err(e) => {
            return SeedArtifacts {
                seed,
                data: Err(e.to_string()),
                dictionary: None,
                regression: None,
                source_classifiers: None,
            }
        }
    };
    let wants = |f: fn(Method) -> bool| cfg.methods.iter().any(|&m| f(m));
    let dcfg = dadil_config(cfg, seed);
    let dictionary = wants(Method::needs_dictionary)
        .then(|| Timed::run(|| Ok(fit(&data.sources, &data.target_train, &dcfg)?)));
    let regression =
        wants(Method::needs_regression).then(|| Timed::run(|| Ok(wbr_fit(&data.sources, &data.target_train, &dcfg)?)));
    let source_classifiers = cfg.methods.contains(&Method::WbrE).then(|| {
        Timed::run(|| {
            data.sources
                .iter()
                .map(|s| Ok(train_classifier(s, &cfg.classifier)?))
                .collect::<Result<Vec<_>>>()
        })
    });
    SeedArtifacts { seed, data: Ok(data), dictionary, regression, source_classifiers }
}

fn evaluate(cfg: &ExperimentConfig, art: &SeedArtifacts, method: Method) -> Result<ResultRow> {
    let t0 = Instant::now();
    let data = art
        .data
        .as_ref()
        .map_err(|m| HarnessError::Artifact { what: "seed data", message: m.clone() })?;
    let score = |pred: Vec<usize>| accuracy(&pred, &data.target_test.hard_classes());
    let x_test = data.target_test.cloud();
    let mut shared = 0.0;
    let mut recon_w2 = None;
    let mut gamma = None;
    let acc = match method {
        Method::Baseline => score(train_classifier(&pool(&data.sources)?, &cfg.classifier)?.predict(x_test)?)?,
        Method::Wb => {
            let uniform = SimplexVector::uniform(data.sources.len())?;
            score(barycenter_classifier(&data.sources, &uniform, cfg, art.seed)?.predict(x_test)?)?
        }
        Method::WbrR | Method::WbrE => {
            let t = art.regression.as_ref().expect("fitted when requested");
            shared += t.secs;
            let alpha = t.get("regression weights")?;
            if method == Method::WbrR {
                score(barycenter_classifier(&data.sources, alpha, cfg, art.seed)?.predict(x_test)?)?
            } else {
                let c = art.source_classifiers.as_ref().expect("fitted when requested");
                shared += c.secs;
                let ens = Ensemble::new(c.get("source classifiers")?.clone(), alpha)?;
                score(ens.predict(x_test)?)?
            }
        }
        Method::DadilR | Method::DadilE => {
            let t = art.dictionary.as_ref().expect("fitted when requested");
            shared += t.secs;
            let (dict, _) = t.get("dictionary")?;
            let bcfg = reconstruction_config(dict, &dadil_config(cfg, art.seed));
            let (r, g) = bound_terms(dict, &data.target_train, &bcfg)?;
            recon_w2 = Some(r);
            gamma = Some(g);
            if method == Method::DadilR {
                score(dadil_r(dict, &bcfg, &cfg.classifier)?.predict(x_test)?)?
            } else {
                score(dadil_e(dict, &cfg.classifier)?.predict(x_test)?)?
            }
        }
    };
    Ok(ResultRow {
        method,
        target: target_name(cfg),
        seed: art.seed,
        accuracy: acc,
        recon_w2,
        gamma,
        wall_time_s: if cfg.timing { t0.elapsed().as_secs_f64() + shared } else { 0.0 },
    })
}

/// Everything a run produces.
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    /// Successful rows, sorted by (method, seed).
    pub rows: Vec<ResultRow>,
    /// Failed jobs, each wrapped with its method and seed.
    pub failures: Vec<HarnessError>,
    /// Dictionaries fitted along the way, by seed.
    pub dictionaries: Vec<FittedDictionary>,
}

/// Runs every requested method for every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let artifacts: Vec<SeedArtifacts> = if cfg.parallel {
        cfg.seeds.par_iter().map(|&s| fit_artifacts(cfg, s)).collect()
    } else {
        cfg.seeds.iter().map(|&s| fit_artifacts(cfg, s)).collect()
    };
    let jobs: Vec<(&SeedArtifacts, Method)> =
        artifacts.iter().flat_map(|a| cfg.methods.iter().map(move |&m| (a, m))).collect();
    let run = |&(a, m): &(&SeedArtifacts, Method)| {
        evaluate(cfg, a, m).map_err(|e| HarnessError::Method { method: m.to_string(), seed: a.seed, source: Box::new(e) })
    };
    let results: Vec<Result<ResultRow>> =
        if cfg.parallel { jobs.par_iter().map(run).collect() } else { jobs.iter().map(run).collect() };

    let mut out = ExperimentOutput::default();
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(e) => out.failures.push(e),
        }
    }
    out.rows.sort_by(|a, b| (a.method, a.seed).cmp(&(b.method, b.seed)));
    for a in artifacts {
        if let Some(Timed { value: Ok((dictionary, trace)), secs }) = a.dictionary {
            out.dictionaries.push(FittedDictionary { seed: a.seed, dictionary, trace, wall_time_s: secs });
        }
    }
    Ok(out)
}

/// Fits one dictionary per seed (no evaluation).
pub fn fit_dictionaries(cfg: &ExperimentConfig) -> Result<Vec<FittedDictionary>> {
    cfg.validate()?;
    let one = |&seed: &u64| -> Result<FittedDictionary> {
        let data = prepare_seed(cfg, seed)?;
        let t0 = Instant::now();
        let (dictionary, trace) = fit(&data.sources, &data.target_train, &dadil_config(cfg, seed))?;
        Ok(FittedDictionary { seed, dictionary, trace, wall_time_s: t0.elapsed().as_secs_f64() })
    };
    if cfg.parallel {
        cfg.seeds.par_iter().map(one).collect()
    } else {
        cfg.seeds.iter().map(one).collect()
    }
}
