//! Fully connected ReLU networks trained with Adam on mean squared error.
//!
//! Parameters live in one flat vector (per layer: weights row-major
//! `out × in`, then biases), which keeps the optimizer and gradient checks
//! simple. Mini-batch gradients are accumulated over fixed-size chunks that
//! are reduced in order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SurrogateError, Table};
use crate::seeds::{stream_rng, Namespace};

/// Rows per gradient work unit.
const CHUNK: usize = 64;

fn d_lr() -> f64 {
    1e-3
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_batch() -> usize {
    256
}
fn d_epochs() -> usize {
    500
}
fn d_patience() -> usize {
    20
}
fn d_min_delta() -> f64 {
    1e-5
}
fn d_val() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnnParams {
    /// Hidden layers.
    pub layers: usize,
    /// Units per hidden layer.
    pub width: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_min_delta")]
    pub min_delta: f64,
    /// Share of the training rows held out for early stopping.
    #[serde(default = "d_val")]
    pub val_fraction: f64,
}

impl DnnParams {
    pub fn new(layers: usize, width: usize) -> Self {
        Self {
            layers,
            width,
            lr: d_lr(),
            beta1: d_beta1(),
            beta2: d_beta2(),
            batch_size: d_batch(),
            max_epochs: d_epochs(),
            patience: d_patience(),
            min_delta: d_min_delta(),
            val_fraction: d_val(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// `[input, hidden…, output]`.
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Mlp {
    pub fn n_params_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// He-uniform weights `U(±√(6/fan_in))`, zero biases.
    pub fn init<R: Rng>(sizes: Vec<usize>, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(Self::n_params_for(&sizes));
        for w in sizes.windows(2) {
            let limit = (6.0 / w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self { sizes, params }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("network has layers")
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Zeroes the output layer's weights and biases.
    pub fn zero_head(&mut self) {
        let l = self.n_layers() - 1;
        let (w, _) = self.offsets(l);
        self.params[w..].iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in 0..self.n_layers() {
            let (wo, bo) = self.offsets(l);
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let last = l + 1 == self.n_layers();
            let mut z = vec![0.0; nout];
            for (o, zo) in z.iter_mut().enumerate() {
                let v = self.params[bo + o] + dot(&self.params[wo + o * nin..wo + (o + 1) * nin], &a);
                *zo = if last { v } else { v.max(0.0) };
            }
            a = z;
        }
        a
    }

    /// Hidden-layer pre-activations for `x`, concatenated.
    pub fn preactivations(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let mut a = x.to_vec();
        for l in 0..self.n_layers() - 1 {
            let (wo, bo) = self.offsets(l);
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let z: Vec<f64> = (0..nout)
                .map(|o| self.params[bo + o] + dot(&self.params[wo + o * nin..wo + (o + 1) * nin], &a))
                .collect();
            out.extend_from_slice(&z);
            a = z.into_iter().map(|v| v.max(0.0)).collect();
        }
        out
    }

    /// Adds `scale · ∂(Σ squared error)/∂θ` over `rows` into `grad` and
    /// returns the summed squared error.
    fn accumulate(&self, x: &Table, y: &Table, rows: &[usize], scale: f64, grad: &mut [f64]) -> f64 {
        let nl = self.n_layers();
        let mut acts: Vec<Vec<f64>> = self.sizes.iter().map(|&s| vec![0.0; s]).collect();
        let mut delta: Vec<Vec<f64>> = self.sizes.iter().map(|&s| vec![0.0; s]).collect();
        let offs: Vec<(usize, usize)> = (0..nl).map(|l| self.offsets(l)).collect();
        let mut sse = 0.0;
        for &r in rows {
            acts[0].copy_from_slice(x.row(r));
            for l in 0..nl {
                let (wo, bo) = offs[l];
                let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
                let (prev, next) = acts.split_at_mut(l + 1);
                let a = &prev[l];
                let z = &mut next[0];
                for o in 0..nout {
                    let v = self.params[bo + o] + dot(&self.params[wo + o * nin..wo + (o + 1) * nin], a);
                    z[o] = if l + 1 == nl { v } else { v.max(0.0) };
                }
            }
            let out = &acts[nl];
            for (k, (o, t)) in out.iter().zip(y.row(r)).enumerate() {
                let e = o - t;
                sse += e * e;
                delta[nl][k] = 2.0 * e * scale;
            }
            for l in (0..nl).rev() {
                let (wo, bo) = offs[l];
                let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
                let (dprev, dnext) = delta.split_at_mut(l + 1);
                let d = &dnext[0];
                let a = &acts[l];
                let dp = &mut dprev[l];
                if l > 0 {
                    dp.iter_mut().for_each(|v| *v = 0.0);
                }
                for o in 0..nout {
                    let dv = d[o];
                    if dv == 0.0 {
                        continue;
                    }
                    grad[bo + o] += dv;
                    axpy(dv, a, &mut grad[wo + o * nin..wo + (o + 1) * nin]);
                    if l > 0 {
                        axpy(dv, &self.params[wo + o * nin..wo + (o + 1) * nin], dp);
                    }
                }
                if l > 0 {
                    // ReLU derivative from the stored post-activation.
                    for (v, act) in dp.iter_mut().zip(a.iter()) {
                        if *act <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
        }
        sse
    }

    /// Mean squared error over all rows and outputs, and its gradient.
    pub fn loss_and_grad(&self, x: &Table, y: &Table, rows: &[usize]) -> (f64, Vec<f64>) {
        let denom = (rows.len() * self.output_dim()) as f64;
        let chunks: Vec<(f64, Vec<f64>)> = rows
            .par_chunks(CHUNK)
            .map(|c| {
                let mut g = vec![0.0; self.params.len()];
                let sse = self.accumulate(x, y, c, 1.0 / denom, &mut g);
                (sse, g)
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut sse = 0.0;
        for (s, g) in chunks {
            sse += s;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (sse / denom, grad)
    }

    pub fn loss(&self, x: &Table, y: &Table, rows: &[usize]) -> f64 {
        let sse: f64 = rows
            .par_chunks(CHUNK)
            .map(|c| {
                c.iter()
                    .map(|&r| {
                        self.forward(x.row(r))
                            .iter()
                            .zip(y.row(r))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum();
        sse / (rows.len() * self.output_dim()) as f64
    }
}

pub struct MlpFit {
    pub net: Mlp,
    pub epochs: usize,
    pub best_val_loss: f64,
}

/// Trains on standardized `(x, y)`.
pub fn fit_mlp(x: &Table, y: &Table, p: &DnnParams, seed: u64) -> Result<MlpFit, SurrogateError> {
    if p.batch_size == 0 || !(p.lr > 0.0) || !(0.0..1.0).contains(&p.val_fraction) {
        return Err(SurrogateError::InvalidHyper(format!("bad DNN options {p:?}")));
    }
    let mut sizes = vec![x.cols];
    sizes.extend(std::iter::repeat_n(p.width, p.layers));
    sizes.push(y.cols);
    let mut net = Mlp::init(sizes, &mut stream_rng(seed, Namespace::DnnInit, 0));

    let mut idx: Vec<usize> = (0..x.rows).collect();
    idx.shuffle(&mut stream_rng(seed, Namespace::DnnShuffle, 0));
    let n_val = ((x.rows as f64) * p.val_fraction).round() as usize;
    let n_val = if x.rows - n_val < 1 { 0 } else { n_val };
    let (val, train) = idx.split_at(n_val);
    let mut train = train.to_vec();
    let monitor: Vec<usize> = if val.is_empty() { train.clone() } else { val.to_vec() };

    let np = net.params.len();
    let (mut m, mut v) = (vec![0.0; np], vec![0.0; np]);
    let mut step = 0i32;
    let mut best = net.params.clone();
    let mut best_loss = net.loss(x, y, &monitor);
    let mut wait = 0;
    let mut epochs = 0;
    for epoch in 0..p.max_epochs {
        train.shuffle(&mut stream_rng(seed, Namespace::DnnShuffle, epoch as u64 + 1));
        for batch in train.chunks(p.batch_size) {
            let (loss, g) = net.loss_and_grad(x, y, batch);
            if !loss.is_finite() {
                return Err(SurrogateError::NonFiniteLoss {
                    epoch,
                    detail: format!("batch loss {loss} after {step} Adam steps"),
                });
            }
            step += 1;
            let c1 = 1.0 - p.beta1.powi(step);
            let c2 = 1.0 - p.beta2.powi(step);
            for k in 0..np {
                m[k] = p.beta1 * m[k] + (1.0 - p.beta1) * g[k];
                v[k] = p.beta2 * v[k] + (1.0 - p.beta2) * g[k] * g[k];
                net.params[k] -= p.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + 1e-8);
            }
        }
        epochs = epoch + 1;
        let l = net.loss(x, y, &monitor);
        if !l.is_finite() {
            return Err(SurrogateError::NonFiniteLoss {
                epoch,
                detail: format!("held-out loss {l}"),
            });
        }
        if l < best_loss - p.min_delta {
            best_loss = l;
            best.copy_from_slice(&net.params);
            wait = 0;
        } else {
            wait += 1;
            if wait >= p.patience {
                break;
            }
        }
        log::debug!("dnn epoch {epoch}: held-out loss {l:.6e} (best {best_loss:.6e})");
    }
    net.params = best;
    Ok(MlpFit {
        net,
        epochs,
        best_val_loss: best_loss,
    })
}
