//! CART regression trees.
//!
//! Splits are found by an exhaustive scan over midpoints between consecutive
//! distinct feature values, maximizing the reduction in squared error. Each
//! feature is sorted once per tree; a node owns the same contiguous range of
//! every per-feature ordering, and a split stably partitions those ranges, so
//! no node ever re-sorts.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Table;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or hold one sample.
    pub max_depth: Option<usize>,
}

pub(crate) const LEAF: u32 = u32::MAX;

/// Candidate splits whose scores agree to this relative tolerance count as
/// tied and the first one wins, so rounding noise in the targets cannot
/// reorder equivalent splits.
const TIE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    /// Split feature, or [`LEAF`].
    pub feature: u32,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Mean target of the node's training rows.
    pub value: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return n.value;
            }
            i = if x[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            let n = &nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(nodes, n.left as usize).max(walk(nodes, n.right as usize))
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

/// Fits one tree on target `y`; `rows` selects (possibly repeated) training
/// rows of `x`, defaulting to all of them.
pub fn fit_tree(x: &Table, y: &[f64], rows: Option<&[usize]>, params: &TreeParams) -> Tree {
    grow::<rand_chacha::ChaCha8Rng>(x, y, rows, params.max_depth, None)
}

/// Tree growth with optional per-node feature subsampling.
pub(crate) fn grow<R: Rng>(
    x: &Table,
    y: &[f64],
    rows: Option<&[usize]>,
    max_depth: Option<usize>,
    mut feature_sampler: Option<(usize, &mut R)>,
) -> Tree {
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..x.rows).collect();
            &all
        }
    };
    let m = rows.len();
    let d = x.cols;
    let max_depth = max_depth.unwrap_or(usize::MAX);
    if m == 0 {
        return Tree::from_nodes(vec![leaf(0.0)]);
    }

    // Column-major local copy of the selected rows.
    let mut cols = vec![0.0; d * m];
    for (p, &r) in rows.iter().enumerate() {
        for (f, v) in x.row(r).iter().enumerate() {
            cols[f * m + p] = *v;
        }
    }
    let yl: Vec<f64> = rows.iter().map(|&r| y[r]).collect();

    let mut order = vec![0u32; d * m];
    for f in 0..d {
        let o = &mut order[f * m..(f + 1) * m];
        o.iter_mut().enumerate().for_each(|(p, v)| *v = p as u32);
        let c = &cols[f * m..(f + 1) * m];
        o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
    }

    let mut nodes = vec![leaf(0.0)];
    let mut stack = vec![(0usize, 0usize, m, 0usize)];
    let mut go_left = vec![false; m];
    let mut scratch = vec![0u32; m];
    let mut features: Vec<usize> = (0..d).collect();

    while let Some((id, s, e, depth)) = stack.pop() {
        let n = e - s;
        let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        let mut sum_sq = 0.0;
        for &p in &order[s..e] {
            let v = yl[p as usize];
            sum += v;
            sum_sq += v * v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        nodes[id].value = sum / n as f64;
        if n < 2 || depth >= max_depth || lo == hi || d == 0 {
            continue;
        }

        if let Some((k, rng)) = feature_sampler.as_mut() {
            if *k < d {
                features = sample(&mut **rng, d, *k).into_vec();
                features.sort_unstable();
            }
        }

        let parent = sum * sum / n as f64;
        let mut best: Option<(usize, usize, f64, f64)> = None;
        for &f in &features {
            let o = &order[f * m + s..f * m + e];
            let c = &cols[f * m..(f + 1) * m];
            let mut sl = 0.0;
            for k in 0..n - 1 {
                sl += yl[o[k] as usize];
                let xa = c[o[k] as usize];
                let xb = c[o[k + 1] as usize];
                if xa < xb {
                    let nl = (k + 1) as f64;
                    let sr = sum - sl;
                    let score = sl * sl / nl + sr * sr / (n as f64 - nl);
                    if best.is_none_or(|b| score > b.2 + TIE_TOL * b.2.abs()) {
                        let mut thr = 0.5 * (xa + xb);
                        if thr >= xb {
                            thr = xa;
                        }
                        best = Some((f, k + 1, score, thr));
                    }
                }
            }
        }
        let Some((f, n_left, score, thr)) = best else { continue };
        if score - parent <= 1e-14 * sum_sq {
            continue;
        }

        let c = &cols[f * m..(f + 1) * m];
        for &p in &order[f * m + s..f * m + e] {
            go_left[p as usize] = c[p as usize] <= thr;
        }
        for g in 0..d {
            let o = &mut order[g * m + s..g * m + e];
            let (mut l, mut r) = (0usize, n_left);
            for &p in o.iter() {
                if go_left[p as usize] {
                    scratch[l] = p;
                    l += 1;
                } else {
                    scratch[r] = p;
                    r += 1;
                }
            }
            debug_assert_eq!(l, n_left);
            o.copy_from_slice(&scratch[..n]);
        }

        let left = nodes.len();
        nodes.push(leaf(0.0));
        nodes.push(leaf(0.0));
        nodes[id] = Node {
            feature: f as u32,
            threshold: thr,
            left: left as u32,
            right: (left + 1) as u32,
            value: nodes[id].value,
        };
        stack.push((left + 1, s + n_left, e, depth + 1));
        stack.push((left, s, s + n_left, depth + 1));
    }
    Tree::from_nodes(nodes)
}

fn leaf(value: f64) -> Node {
    Node {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
        value,
    }
}
