//! Regression surrogates behind one fit/predict contract.
//!
//! Four model families are available: a CART regression tree, a bagged
//! forest of such trees, ε-SVR with an RBF kernel, and a ReLU MLP trained
//! with Adam. Every model standardizes inputs and targets with statistics
//! taken from its training rows only.

pub mod cv;
mod dataset;
pub mod dnn;
pub mod forest;
pub mod metrics;
pub mod persist;
pub mod svr;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{Dataset, DatasetSidecar, Split, DATASET_MAGIC};
pub use metrics::{conventional_r2, r2_score, R2};

use crate::seeds::{stream_rng, Namespace};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target {0} has zero variance")]
    DegenerateTarget(usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-finite training loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("prediction failed: {0}")]
    Prediction(String),
    #[error("dataset has no train/test split")]
    NoSplit,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Dense row-major table of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Table {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "table buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Rows at `idx`, in that order (duplicates allowed).
    pub fn select(&self, idx: &[usize]) -> Table {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Table::new(idx.len(), self.cols, data)
    }
}

/// Per-column affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation; zero spread maps to 1.
    pub fn fit(t: &Table) -> Self {
        let n = t.rows.max(1) as f64;
        let mut mean = vec![0.0; t.cols];
        for i in 0..t.rows {
            for (m, v) in mean.iter_mut().zip(t.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; t.cols];
        for i in 0..t.rows {
            for ((s, v), m) in var.iter_mut().zip(t.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(cols: usize) -> Self {
        Self {
            mean: vec![0.0; cols],
            std: vec![1.0; cols],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn invert_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = row[j] * self.std[j] + self.mean[j];
        }
    }

    pub fn transform(&self, t: &Table) -> Table {
        let mut out = t.clone();
        for i in 0..t.rows {
            self.apply_row(t.row(i), out.row_mut(i));
        }
        out
    }

    pub fn inverse(&self, t: &Table) -> Table {
        let mut out = t.clone();
        for i in 0..t.rows {
            self.invert_row(t.row(i), out.row_mut(i));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Dt,
    Rf,
    Svr,
    Dnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Dt, ModelKind::Rf, ModelKind::Svr, ModelKind::Dnn];

    pub fn tag(self) -> u32 {
        match self {
            ModelKind::Dt => 1,
            ModelKind::Rf => 2,
            ModelKind::Svr => 3,
            ModelKind::Dnn => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dt => "DT",
            ModelKind::Rf => "RF",
            ModelKind::Svr => "SVR",
            ModelKind::Dnn => "DNN",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "DT" => Ok(ModelKind::Dt),
            "RF" => Ok(ModelKind::Rf),
            "SVR" => Ok(ModelKind::Svr),
            "DNN" => Ok(ModelKind::Dnn),
            other => Err(format!("unknown model kind {other:?} (expected dt, rf, svr or dnn)")),
        }
    }
}

/// Hyperparameters of one model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum Hyper {
    Dt(tree::TreeParams),
    Rf(forest::ForestParams),
    Svr(svr::SvrParams),
    Dnn(dnn::DnnParams),
}

impl Hyper {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyper::Dt(_) => ModelKind::Dt,
            Hyper::Rf(_) => ModelKind::Rf,
            Hyper::Svr(_) => ModelKind::Svr,
            Hyper::Dnn(_) => ModelKind::Dnn,
        }
    }

    /// Ordering key for breaking CV ties in favour of the smaller model.
    pub fn complexity(&self) -> f64 {
        let depth = |d: Option<usize>| d.map_or(f64::INFINITY, |d| d as f64);
        match self {
            Hyper::Dt(p) => depth(p.max_depth),
            Hyper::Rf(p) => p.n_trees as f64 * depth(p.max_depth).min(1e6),
            Hyper::Svr(p) => p.c,
            Hyper::Dnn(p) => (p.layers * p.width) as f64,
        }
    }
}

/// Fitted parameters of one model family.
#[derive(Clone, Debug, PartialEq)]
pub enum Fitted {
    /// One tree per target.
    Dt(Vec<tree::Tree>),
    /// One forest per target.
    Rf(Vec<forest::Forest>),
    /// One machine per target.
    Svr(Vec<svr::SvrModel>),
    Dnn(dnn::Mlp),
}

/// Anything that maps an input row to a prediction row.
pub trait Predictor: Sync {
    fn input_dim(&self) -> usize;
    fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError>;
}

/// Diagnostics recorded at fit time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub n_train: usize,
    /// SVR: rows actually used after the training-size cap.
    pub n_used: usize,
    pub converged: bool,
    pub iterations: usize,
    /// DNN: epochs run and best validation loss (standardized units).
    pub epochs: usize,
    pub best_val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub hyper: Hyper,
    pub seed: u64,
    pub x_std: Standardizer,
    pub y_std: Standardizer,
    pub fitted: Fitted,
    pub info: FitInfo,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.hyper.kind()
    }

    pub fn output_dim(&self) -> usize {
        self.y_std.dim()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let d = self.x_std.dim();
        if x.len() != d {
            return Err(SurrogateError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        let mut xs = vec![0.0; d];
        self.x_std.apply_row(x, &mut xs);
        let ys: Vec<f64> = match &self.fitted {
            Fitted::Dt(trees) => trees.iter().map(|t| t.predict(&xs)).collect(),
            Fitted::Rf(forests) => forests.iter().map(|f| f.predict(&xs)).collect(),
            Fitted::Svr(models) => models.iter().map(|m| m.predict(&xs)).collect(),
            Fitted::Dnn(net) => net.forward(&xs),
        };
        let mut out = vec![0.0; ys.len()];
        self.y_std.invert_row(&ys, &mut out);
        Ok(out)
    }

    pub fn predict_table(&self, x: &Table) -> Result<Table, SurrogateError> {
        let mut data = Vec::with_capacity(x.rows * self.output_dim());
        for i in 0..x.rows {
            data.extend(self.predict(x.row(i))?);
        }
        Ok(Table::new(x.rows, self.output_dim(), data))
    }
}

impl Predictor for TrainedModel {
    fn input_dim(&self) -> usize {
        self.x_std.dim()
    }

    fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        self.predict(x)
    }
}

/// Fits a model on `(x, y)` in original units.
pub fn fit(hyper: &Hyper, x: &Table, y: &Table, seed: u64) -> Result<TrainedModel, SurrogateError> {
    if x.rows != y.rows {
        return Err(SurrogateError::InvalidHyper(format!("x has {} rows, y has {}", x.rows, y.rows)));
    }
    if x.rows < 2 {
        return Err(SurrogateError::TooFewSamples { need: 2, got: x.rows });
    }
    let x_std = Standardizer::fit(x);
    let y_std = Standardizer::fit(y);
    let xs = x_std.transform(x);
    let ys = y_std.transform(y);
    let mut info = FitInfo {
        n_train: x.rows,
        n_used: x.rows,
        converged: true,
        ..Default::default()
    };
    let fitted = match hyper {
        Hyper::Dt(p) => Fitted::Dt(
            (0..ys.cols)
                .map(|j| tree::fit_tree(&xs, &ys.column(j), None, p))
                .collect(),
        ),
        Hyper::Rf(p) => Fitted::Rf(
            (0..ys.cols)
                .map(|j| forest::fit_forest(&xs, &ys.column(j), p, seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
                .collect(),
        ),
        Hyper::Svr(p) => {
            let mut rng = stream_rng(seed, Namespace::SvrSubsample, 0);
            let fits = svr::fit_svr_multi(&xs, &ys, p, &mut rng)?;
            info.n_used = fits.first().map_or(0, |f| f.n_used);
            info.converged = fits.iter().all(|f| f.converged);
            info.iterations = fits.iter().map(|f| f.iterations).sum();
            Fitted::Svr(fits.into_iter().map(|f| f.model).collect())
        }
        Hyper::Dnn(p) => {
            let fit = dnn::fit_mlp(&xs, &ys, p, seed)?;
            info.epochs = fit.epochs;
            info.best_val_loss = Some(fit.best_val_loss);
            Fitted::Dnn(fit.net)
        }
    };
    Ok(TrainedModel {
        hyper: hyper.clone(),
        seed,
        x_std,
        y_std,
        fitted,
        info,
    })
}
