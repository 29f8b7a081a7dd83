//! Model selection and the train/test leaderboard.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::seeds::{derive_seed, Namespace};
use crate::surrogates::cv::{kfold_grid_search, GridSearch};
use crate::surrogates::dnn::DnnParams;
use crate::surrogates::forest::ForestParams;
use crate::surrogates::persist::{model_to_bytes, save_model};
use crate::surrogates::svr::SvrParams;
use crate::surrogates::tree::TreeParams;
use crate::surrogates::{conventional_r2, fit, r2_score, Dataset, FitInfo, Hyper, ModelKind, TrainedModel, R2};
use crate::sha256_hex;

fn default_k() -> usize {
    3
}

/// Candidate hyperparameters per model family. A family with one candidate
/// skips cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingGrids {
    pub dt: Vec<TreeParams>,
    pub rf: Vec<ForestParams>,
    pub svr: Vec<SvrParams>,
    pub dnn: Vec<DnnParams>,
    #[serde(default = "default_k")]
    pub k_folds: usize,
}

impl TrainingGrids {
    /// The best-reported settings of the full-scale study, one point each.
    pub fn full_scale() -> Self {
        Self {
            dt: vec![TreeParams { max_depth: Some(100) }],
            rf: vec![ForestParams {
                n_trees: 250,
                max_depth: None,
                max_features: None,
                bootstrap: true,
            }],
            svr: vec![SvrParams::new(1.5, 0.5)],
            dnn: vec![DnnParams::new(10, 500)],
            k_folds: 3,
        }
    }

    /// Small grid that runs in minutes on one core.
    pub fn desk() -> Self {
        let mut svr_a = SvrParams::new(1.5, 0.5);
        svr_a.max_train = 3000;
        let mut svr_b = SvrParams::new(10.0, 0.05);
        svr_b.max_train = 3000;
        let mut dnn = DnnParams::new(3, 64);
        dnn.max_epochs = 300;
        Self {
            dt: vec![
                TreeParams { max_depth: Some(5) },
                TreeParams { max_depth: Some(20) },
                TreeParams { max_depth: None },
            ],
            rf: vec![ForestParams {
                n_trees: 50,
                max_depth: None,
                max_features: None,
                bootstrap: true,
            }],
            svr: vec![svr_a, svr_b],
            dnn: vec![dnn],
            k_folds: 3,
        }
    }

    pub fn for_kind(&self, kind: ModelKind) -> Vec<Hyper> {
        match kind {
            ModelKind::Dt => self.dt.iter().cloned().map(Hyper::Dt).collect(),
            ModelKind::Rf => self.rf.iter().cloned().map(Hyper::Rf).collect(),
            ModelKind::Svr => self.svr.iter().cloned().map(Hyper::Svr).collect(),
            ModelKind::Dnn => self.dnn.iter().cloned().map(Hyper::Dnn).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub kind: ModelKind,
    pub hyperparameters: Hyper,
    /// Variance-ratio R² (the selection metric).
    pub train_r2: R2,
    pub test_r2: R2,
    /// `1 − SSE/SST`, diagnostics only.
    pub train_r2_conventional: R2,
    pub test_r2_conventional: R2,
    pub model_sha256: String,
    pub fit_info: FitInfo,
    pub cv: Option<GridSearch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
    pub dataset_sha256: String,
    pub seed: u64,
    pub k_folds: usize,
    pub targets: Vec<String>,
}

impl Leaderboard {
    pub fn row(&self, kind: ModelKind) -> Option<&LeaderboardRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,kind,train_r2_mean,test_r2_mean");
        for t in &self.targets {
            s.push_str(&format!(",train_r2_{t},test_r2_{t}"));
        }
        s.push_str(",train_r2_conventional_mean,test_r2_conventional_mean,hyperparameters\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}", r.rank, r.kind, r.train_r2.mean, r.test_r2.mean));
            for t in 0..self.targets.len() {
                s.push_str(&format!(",{},{}", r.train_r2.per_target[t], r.test_r2.per_target[t]));
            }
            let hyper = serde_json::to_string(&r.hyperparameters).expect("hyper serializes").replace('"', "\"\"");
            s.push_str(&format!(
                ",{},{},\"{}\"\n",
                r.train_r2_conventional.mean, r.test_r2_conventional.mean, hyper
            ));
        }
        s
    }
}

/// Selects hyperparameters per family by k-fold CV on the train split, refits
/// on the whole train split, scores train and test, ranks by mean test R²
/// and, when `out_dir` is given, writes the models and leaderboard files.
pub fn train_leaderboard(
    ds: &Dataset,
    grids: &TrainingGrids,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<(Leaderboard, Vec<TrainedModel>), PipelineError> {
    let split = ds.split_ref()?;
    let xtr = ds.x.select(&split.train);
    let ytr = ds.y.select(&split.train);
    let xte = ds.x.select(&split.test);
    let yte = ds.y.select(&split.test);
    let dataset_sha256 = sha256_hex(&ds.to_bytes());

    let mut rows = Vec::new();
    let mut models = Vec::new();
    for kind in ModelKind::ALL {
        let grid = grids.for_kind(kind);
        if grid.is_empty() {
            return Err(PipelineError::Config(format!("empty {kind} grid")));
        }
        let model_seed = derive_seed(seed, Namespace::Training, kind.tag() as u64);
        let cv = if grid.len() > 1 {
            Some(kfold_grid_search(&grid, &ds.x, &ds.y, &split.train, grids.k_folds, model_seed)?)
        } else {
            None
        };
        let best = cv.as_ref().map_or_else(|| grid[0].clone(), |c| c.best.clone());
        log::info!("fitting {kind} with {best:?}");
        let model = fit(&best, &xtr, &ytr, model_seed)?;
        let ptr = model.predict_table(&xtr)?;
        let pte = model.predict_table(&xte)?;
        let row = LeaderboardRow {
            rank: 0,
            kind,
            hyperparameters: best,
            train_r2: r2_score(&ytr, &ptr)?,
            test_r2: r2_score(&yte, &pte)?,
            train_r2_conventional: conventional_r2(&ytr, &ptr)?,
            test_r2_conventional: conventional_r2(&yte, &pte)?,
            model_sha256: sha256_hex(&model_to_bytes(&model)),
            fit_info: model.info.clone(),
            cv,
        };
        log::info!("{kind}: train R2 {:.4}, test R2 {:.4}", row.train_r2.mean, row.test_r2.mean);
        rows.push(row);
        models.push(model);
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].test_r2.mean.total_cmp(&rows[a].test_r2.mean).then(a.cmp(&b)));
    let mut ranked = Vec::with_capacity(rows.len());
    for (r, &i) in order.iter().enumerate() {
        let mut row = rows[i].clone();
        row.rank = r + 1;
        ranked.push(row);
    }
    let board = Leaderboard {
        rows: ranked,
        dataset_sha256: dataset_sha256.clone(),
        seed,
        k_folds: grids.k_folds,
        targets: ds.target_names.clone(),
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (m, kind) in models.iter().zip(ModelKind::ALL) {
            let row = board.row(kind).expect("every kind ranked");
            let metrics = serde_json::json!({
                "train_r2": row.train_r2,
                "test_r2": row.test_r2,
                "train_r2_conventional": row.train_r2_conventional,
                "test_r2_conventional": row.test_r2_conventional,
            });
            save_model(m, &dir.join(model_file_name(kind)), metrics, Some(dataset_sha256.clone()))?;
        }
        std::fs::write(dir.join("leaderboard.json"), serde_json::to_string_pretty(&board)? + "\n")?;
        std::fs::write(dir.join("leaderboard.csv"), board.to_csv())?;
    }
    Ok((board, models))
}

pub fn model_file_name(kind: ModelKind) -> String {
    format!("model_{}.qmodel", kind.name().to_ascii_lowercase())
}
