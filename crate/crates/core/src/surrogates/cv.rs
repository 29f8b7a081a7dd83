//! k-fold cross-validation and grid search over hyperparameters.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit, r2_score, Hyper, SurrogateError, Table};
use crate::seeds::{derive_seed, stream_rng, Namespace};

#[derive(Clone, Debug, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Shuffles `indices` with `seed` and deals them into `k` folds whose sizes
/// differ by at most one.
pub fn kfold(indices: &[usize], k: usize, seed: u64) -> Vec<Fold> {
    assert!(k >= 2, "k-fold needs k >= 2");
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut stream_rng(seed, Namespace::Folds, 0));
    let n = shuffled.len();
    (0..k)
        .map(|f| {
            let lo = f * n / k;
            let hi = (f + 1) * n / k;
            let val = shuffled[lo..hi].to_vec();
            let train = shuffled[..lo].iter().chain(&shuffled[hi..]).copied().collect();
            Fold { train, val }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub hyper: Hyper,
    /// Mean-over-targets R² on each validation fold.
    pub fold_r2: Vec<f64>,
    pub mean_r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: Hyper,
    pub k: usize,
    pub table: Vec<CvRow>,
}

/// Scores every grid point by mean validation R² over `k` folds of `rows`,
/// then picks the best; exact ties go to the lower [`Hyper::complexity`],
/// then to the earlier grid point.
pub fn kfold_grid_search(
    grid: &[Hyper],
    x: &Table,
    y: &Table,
    rows: &[usize],
    k: usize,
    seed: u64,
) -> Result<GridSearch, SurrogateError> {
    if grid.is_empty() {
        return Err(SurrogateError::InvalidHyper("empty grid".into()));
    }
    if k < 2 || rows.len() < 2 * k {
        return Err(SurrogateError::TooFewSamples {
            need: 2 * k.max(2),
            got: rows.len(),
        });
    }
    let folds = kfold(rows, k, seed);
    let mut table = Vec::with_capacity(grid.len());
    for h in grid {
        let mut fold_r2 = Vec::with_capacity(k);
        for (f, fold) in folds.iter().enumerate() {
            let model = fit(h, &x.select(&fold.train), &y.select(&fold.train), derive_seed(seed, Namespace::Folds, f as u64 + 1))?;
            let yv = y.select(&fold.val);
            let pred = model.predict_table(&x.select(&fold.val))?;
            fold_r2.push(r2_score(&yv, &pred)?.mean);
        }
        let mean_r2 = fold_r2.iter().sum::<f64>() / k as f64;
        log::info!("cv {} {:?}: mean R2 {mean_r2:.4}", h.kind(), h);
        table.push(CvRow {
            hyper: h.clone(),
            fold_r2,
            mean_r2,
        });
    }
    let mut best = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        let b = &table[best];
        let better = row.mean_r2 > b.mean_r2
            || (row.mean_r2 == b.mean_r2 && row.hyper.complexity() < b.hyper.complexity());
        if better {
            best = i;
        }
    }
    Ok(GridSearch {
        best: table[best].hyper.clone(),
        k,
        table,
    })
}
