//! Versioned JSON archive for dictionaries. Floats round-trip exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Atom, Dictionary};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "dadil-dictionary";

#[derive(Serialize, Deserialize)]
struct AtomRecord {
    features: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryRecord {
    format: String,
    version: u32,
    n_atoms: usize,
    atom_size: usize,
    dim: usize,
    n_classes: usize,
    n_domains: usize,
    beta: f64,
    atoms: Vec<AtomRecord>,
    weights: Vec<Vec<f64>>,
}

pub(crate) fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<Array2<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!("{what}: ragged rows (expected {ncols} columns)")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::Format(format!("{what}: {e}")))
}

impl Dictionary {
    pub fn to_json(&self) -> Result<String> {
        let rec = DictionaryRecord {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            n_atoms: self.n_atoms(),
            atom_size: self.atom_size(),
            dim: self.dim(),
            n_classes: self.n_classes(),
            n_domains: self.n_domains(),
            beta: self.beta(),
            atoms: self
                .atoms()
                .iter()
                .map(|a| AtomRecord { features: to_rows(&a.features), logits: to_rows(&a.logits) })
                .collect(),
            weights: to_rows(&self.weights().to_owned()),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: DictionaryRecord = serde_json::from_str(text)?;
        if rec.format != FORMAT_NAME {
            return Err(Error::Format(format!("unexpected format tag {:?}", rec.format)));
        }
        if rec.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", rec.version)));
        }
        if rec.atoms.len() != rec.n_atoms || rec.weights.len() != rec.n_domains {
            return Err(Error::Format("declared shapes disagree with contents".into()));
        }
        let atoms = rec
            .atoms
            .iter()
            .map(|a| {
                if a.features.len() != rec.atom_size || a.logits.len() != rec.atom_size {
                    return Err(Error::Format("atom size disagrees with header".into()));
                }
                Atom::new(
                    from_rows(&a.features, rec.dim, "atom features")?,
                    from_rows(&a.logits, rec.n_classes, "atom logits")?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = from_rows(&rec.weights, rec.n_atoms, "weights")?;
        Dictionary::new(atoms, weights, rec.beta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
