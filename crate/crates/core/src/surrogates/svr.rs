//! ε-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved by sequential minimal optimization with second-order
//! working-set selection, on the usual doubled variable vector
//! `β = [α; α*]` with labels `+1` for the first half and `−1` for the second.
//! The kernel matrix is computed once and shared by every target.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SurrogateError, Table};

pub const DEFAULT_MAX_TRAIN: usize = 5000;
pub const DEFAULT_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

fn default_max_train() -> usize {
    DEFAULT_MAX_TRAIN
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrParams {
    /// Box constraint on the duals.
    pub c: f64,
    pub epsilon: f64,
    /// RBF width; `None` means `1/d`.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Training rows beyond this are subsampled with the model seed.
    #[serde(default = "default_max_train")]
    pub max_train: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

impl SvrParams {
    pub fn new(c: f64, epsilon: f64) -> Self {
        Self {
            c,
            epsilon,
            gamma: None,
            max_train: DEFAULT_MAX_TRAIN,
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvrModel {
    pub gamma: f64,
    pub rho: f64,
    /// `α − α*` of the support vectors.
    pub coef: Vec<f64>,
    pub support: Table,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (k, c) in self.coef.iter().enumerate() {
            s += c * rbf(self.gamma, x, self.support.row(k));
        }
        s - self.rho
    }
}

#[derive(Clone, Debug)]
pub struct SvrFit {
    pub model: SvrModel,
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub n_used: usize,
}

#[inline]
fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

fn kernel_matrix(x: &Table, gamma: f64) -> Vec<f64> {
    let l = x.rows;
    let mut k = vec![0.0; l * l];
    k.par_chunks_mut(l).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = rbf(gamma, xi, x.row(j));
        }
    });
    k
}

/// One machine per target column of `y`, all on the same (capped) rows.
pub fn fit_svr_multi<R: Rng>(
    x: &Table,
    y: &Table,
    params: &SvrParams,
    rng: &mut R,
) -> Result<Vec<SvrFit>, SurrogateError> {
    if !(params.c > 0.0) || !(params.epsilon >= 0.0) || params.gamma.is_some_and(|g| !(g > 0.0)) {
        return Err(SurrogateError::InvalidHyper(format!(
            "SVR needs C > 0, epsilon >= 0, gamma > 0 (got {params:?})"
        )));
    }
    let (x, y) = if x.rows > params.max_train && params.max_train >= 2 {
        let mut idx = sample(rng, x.rows, params.max_train).into_vec();
        idx.sort_unstable();
        (x.select(&idx), y.select(&idx))
    } else {
        (x.clone(), y.clone())
    };
    let gamma = params.gamma.unwrap_or(1.0 / x.cols.max(1) as f64);
    let k = kernel_matrix(&x, gamma);
    let fits = (0..y.cols)
        .into_par_iter()
        .map(|j| solve(&k, &x, &y.column(j), gamma, params))
        .collect();
    Ok(fits)
}

fn solve(k: &[f64], x: &Table, z: &[f64], gamma: f64, p: &SvrParams) -> SvrFit {
    let l = z.len();
    let n = 2 * l;
    let c = p.c;
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let mut beta = vec![0.0; n];
    let mut g: Vec<f64> = (0..n)
        .map(|t| if t < l { p.epsilon - z[t] } else { p.epsilon + z[t - l] })
        .collect();
    let kk = |a: usize, b: usize| k[(a % l) * l + (b % l)];
    let max_iter = p.max_iter.unwrap_or_else(|| (100 * n).max(10_000_000));

    let mut iter = 0;
    let mut converged = false;
    while iter < max_iter {
        // Maximal violating i, then the j with the best second-order gain.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if t < l {
                if beta[t] < c && -g[t] >= gmax {
                    gmax = -g[t];
                    i = t;
                }
            } else if beta[t] > 0.0 && g[t] >= gmax {
                gmax = g[t];
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let krow_i = &k[(i % l) * l..(i % l + 1) * l];
        let k_ii = krow_i[i % l];
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let tt = t % l;
            let (eligible, grad_diff, viol) = if t < l {
                (beta[t] > 0.0, gmax + g[t], g[t])
            } else {
                (beta[t] < c, gmax - g[t], -g[t])
            };
            if !eligible {
                continue;
            }
            if viol >= gmax2 {
                gmax2 = viol;
            }
            if grad_diff > 0.0 {
                let mut quad = k_ii + k[tt * l + tt] - 2.0 * krow_i[tt];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -grad_diff * grad_diff / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < p.tol || j == usize::MAX {
            converged = true;
            break;
        }
        iter += 1;

        let (yi, yj) = (sign(i), sign(j));
        let (old_i, old_j) = (beta[i], beta[j]);
        let mut quad = k_ii + kk(j, j) - 2.0 * kk(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if yi != yj {
            let delta = (-g[i] - g[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let di = (beta[i] - old_i) * yi;
        let dj = (beta[j] - old_j) * yj;
        let krow_j = &k[(j % l) * l..(j % l + 1) * l];
        for t in 0..l {
            let s = di * krow_i[t] + dj * krow_j[t];
            g[t] += s;
            g[t + l] -= s;
        }
    }

    // Offset from free variables, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yt = sign(t);
        let yg = yt * g[t];
        if beta[t] >= c {
            if yt < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[t] <= 0.0 {
            if yt > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };

    let alpha = beta[..l].to_vec();
    let alpha_star = beta[l..].to_vec();
    let mut coef = Vec::new();
    let mut sv = Vec::new();
    for t in 0..l {
        let a = alpha[t] - alpha_star[t];
        if a != 0.0 {
            coef.push(a);
            sv.push(t);
        }
    }
    SvrFit {
        model: SvrModel {
            gamma,
            rho,
            coef,
            support: x.select(&sv),
        },
        alpha,
        alpha_star,
        converged,
        iterations: iter,
        n_used: l,
    }
}
