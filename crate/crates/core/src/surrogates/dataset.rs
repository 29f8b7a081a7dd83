//! Input/output sample tables and their on-disk form.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{SurrogateError, Table};
use crate::binio::{expect_magic, read_f64s, read_u32, write_f64s, write_u32};
use crate::seeds::{stream_rng, Namespace};
use crate::sha256_hex;

/// Seven bytes, written as is.
pub const DATASET_MAGIC: &[u8; 7] = b"QDATA01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub test_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Table,
    pub y: Table,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub split: Option<Split>,
    pub seed: u64,
    /// Hash of the configuration that produced the rows, if any.
    pub config_hash: Option<String>,
    /// Free-form generation statistics carried into the sidecar.
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    pub n: usize,
    pub d: usize,
    pub n_targets: usize,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub split: Option<Split>,
    pub seed: u64,
    pub generation_config_hash: Option<String>,
    /// SHA-256 of the binary file.
    pub data_sha256: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Dataset {
    pub fn new(x: Table, y: Table, feature_names: Vec<String>, target_names: Vec<String>, seed: u64) -> Result<Self, SurrogateError> {
        if x.rows != y.rows || feature_names.len() != x.cols || target_names.len() != y.cols {
            return Err(SurrogateError::Malformed(format!(
                "shape mismatch: x {}x{}, y {}x{}, {} feature names, {} target names",
                x.rows,
                x.cols,
                y.rows,
                y.cols,
                feature_names.len(),
                target_names.len()
            )));
        }
        if x.data.iter().chain(&y.data).any(|v| !v.is_finite()) {
            return Err(SurrogateError::Malformed("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            target_names,
            split: None,
            seed,
            config_hash: None,
            meta: serde_json::Value::Null,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows
    }

    /// Uniform split without replacement; `round(n·fraction)` test rows,
    /// at least one and at most `n − 1`.
    pub fn split(&mut self, test_fraction: f64, seed: u64) -> Result<&Split, SurrogateError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(SurrogateError::InvalidHyper(format!("test fraction {test_fraction} outside (0, 1)")));
        }
        let n = self.n();
        if n < 2 {
            return Err(SurrogateError::TooFewSamples { need: 2, got: n });
        }
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(seed, Namespace::Split, 0));
        let mut test = idx[..n_test].to_vec();
        let mut train = idx[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        self.split = Some(Split {
            train,
            test,
            seed,
            test_fraction,
        });
        Ok(self.split.as_ref().expect("just set"))
    }

    pub fn split_ref(&self) -> Result<&Split, SurrogateError> {
        self.split.as_ref().ok_or(SurrogateError::NoSplit)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        write_u32(&mut w, self.x.rows as u32)?;
        write_u32(&mut w, self.x.cols as u32)?;
        write_u32(&mut w, self.y.cols as u32)?;
        write_f64s(&mut w, &self.x.data)?;
        write_f64s(&mut w, &self.y.data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_binary(&mut v).expect("writing to memory");
        v
    }

    /// Reads the table part; names, split and seed come from the sidecar.
    pub fn read_binary<R: Read>(mut r: R, sidecar: &DatasetSidecar) -> Result<Self, SurrogateError> {
        if !expect_magic(&mut r, DATASET_MAGIC)? {
            return Err(SurrogateError::Malformed("not a dataset file (bad magic)".into()));
        }
        let n = read_u32(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        let k = read_u32(&mut r)? as usize;
        if (n, d, k) != (sidecar.n, sidecar.d, sidecar.n_targets) {
            return Err(SurrogateError::Malformed("dataset header disagrees with its sidecar".into()));
        }
        let x = Table::new(n, d, read_f64s(&mut r, n * d)?);
        let y = Table::new(n, k, read_f64s(&mut r, n * k)?);
        let mut ds = Dataset::new(x, y, sidecar.feature_names.clone(), sidecar.target_names.clone(), sidecar.seed)?;
        ds.split = sidecar.split.clone();
        ds.config_hash = sidecar.generation_config_hash.clone();
        ds.meta = sidecar.meta.clone();
        Ok(ds)
    }

    pub fn sidecar(&self) -> DatasetSidecar {
        DatasetSidecar {
            n: self.x.rows,
            d: self.x.cols,
            n_targets: self.y.cols,
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            split: self.split.clone(),
            seed: self.seed,
            generation_config_hash: self.config_hash.clone(),
            data_sha256: sha256_hex(&self.to_bytes()),
            meta: self.meta.clone(),
        }
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes `path` and `path.json`.
    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        std::fs::write(path, self.to_bytes())?;
        std::fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&self.sidecar())? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let sidecar: DatasetSidecar = serde_json::from_str(&std::fs::read_to_string(Self::sidecar_path(path))?)?;
        let bytes = std::fs::read(path)?;
        if sha256_hex(&bytes) != sidecar.data_sha256 {
            return Err(SurrogateError::Malformed(format!("{} does not match its sidecar hash", path.display())));
        }
        Self::read_binary(&bytes[..], &sidecar)
    }
}
