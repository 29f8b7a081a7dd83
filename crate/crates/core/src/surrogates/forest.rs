//! Bagged regression forests.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Tree};
use super::Table;
use crate::seeds::{stream_rng, Namespace};

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` tries all of them.
    #[serde(default)]
    pub max_features: Option<usize>,
    /// Disabling the bootstrap makes every tree see the full training set.
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Tree `t` draws its bootstrap and feature subsets from substream `t` of
/// `seed`, so the forest does not depend on how trees are scheduled.
pub fn fit_forest(x: &Table, y: &[f64], params: &ForestParams, seed: u64) -> Forest {
    let n = x.rows;
    let trees = (0..params.n_trees.max(1))
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, Namespace::Bootstrap, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sampler = params.max_features.map(|k| (k, &mut rng));
            grow(x, y, Some(&rows), params.max_depth, sampler)
        })
        .collect();
    Forest { trees }
}

#[cfg(test)]
mod tests {
    use super::super::tree::{fit_tree, TreeParams};
    use super::*;

    fn toy() -> (Table, Vec<f64>) {
        let mut rng = stream_rng(3, Namespace::Test, 0);
        let rows: Vec<Vec<f64>> = (0..150).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let y = rows.iter().map(|r| r[0] * r[0] - r[1] + 0.1 * rng.gen::<f64>()).collect();
        (Table::from_rows(&rows), y)
    }

    #[test]
    fn single_unbootstrapped_tree_equals_cart() {
        let (x, y) = toy();
        let p = ForestParams {
            n_trees: 1,
            max_depth: None,
            max_features: None,
            bootstrap: false,
        };
        let f = fit_forest(&x, &y, &p, 9);
        let t = fit_tree(&x, &y, None, &TreeParams { max_depth: None });
        assert_eq!(f.trees[0], t);
    }

    #[test]
    fn constant_target() {
        let (x, _) = toy();
        let y = vec![2.5; x.rows];
        let p = ForestParams {
            n_trees: 5,
            max_depth: None,
            max_features: Some(1),
            bootstrap: true,
        };
        let f = fit_forest(&x, &y, &p, 1);
        assert_eq!(f.predict(&[0.3, 0.9]), 2.5);
    }

    #[test]
    fn seeded_and_deterministic() {
        let (x, y) = toy();
        let p = ForestParams {
            n_trees: 8,
            max_depth: None,
            max_features: None,
            bootstrap: true,
        };
        assert_eq!(fit_forest(&x, &y, &p, 4), fit_forest(&x, &y, &p, 4));
        assert_ne!(fit_forest(&x, &y, &p, 4), fit_forest(&x, &y, &p, 5));
    }
}
