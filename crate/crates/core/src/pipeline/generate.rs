//! Monte Carlo dataset generation.
//!
//! Sample `i` draws its basis weights and story parameters from substream
//! `i` of the generation namespace, reconstructs the ground motion, runs the
//! nonlinear solve and keeps the two demand parameters. Samples fan out over
//! the rayon pool and are collected in index order, so the dataset does not
//! depend on the worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::basis::{SpectralBasis, WeightBounds};
use crate::integrator::{extract_edps, newmark_solve, Edp, SolverOptions};
use crate::seeds::{stream_rng, Namespace};
use crate::structures::{ModelSpec, ShearModel, StorySpec, DEFAULT_HARDENING};
use crate::surrogates::{Dataset, SurrogateError, Table};

/// Closed interval for one uniform parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * u
        }
    }
}

fn default_hardening() -> f64 {
    DEFAULT_HARDENING
}

/// Structural template: story count and the supports of each story's
/// `(E, Fy, ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub n_dof: usize,
    #[serde(rename = "E")]
    pub e: Support,
    #[serde(rename = "Fy")]
    pub fy: Support,
    pub xi: Support,
    #[serde(default = "default_hardening")]
    pub b: f64,
}

impl ModelTemplate {
    /// Stiffness in [32, 48], yield force in [0.21, 0.35], damping ratio in
    /// [0.04, 0.06], identical supports for every story.
    pub fn standard(n_dof: usize) -> Self {
        Self {
            n_dof,
            e: Support::new(32.0, 48.0),
            fy: Support::new(0.21, 0.35),
            xi: Support::new(0.04, 0.06),
            b: DEFAULT_HARDENING,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_dof == 0 {
            return Err(PipelineError::Config("template needs at least one story".into()));
        }
        for (name, s) in [("E", self.e), ("Fy", self.fy), ("xi", self.xi)] {
            if !(s.lo <= s.hi) || !s.lo.is_finite() || !s.hi.is_finite() {
                return Err(PipelineError::Config(format!("support of {name} must satisfy lo <= hi, got [{}, {}]", s.lo, s.hi)));
            }
        }
        if !(self.e.lo > 0.0 && self.fy.lo > 0.0 && self.xi.lo >= 0.0) {
            return Err(PipelineError::Config("E and Fy supports must be positive, xi nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.b) {
            return Err(PipelineError::Config(format!("hardening ratio must lie in [0, 1), got {}", self.b)));
        }
        Ok(())
    }

    /// Per-story `(E, Fy, ξ)` triples, flattened.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.n_dof);
        for _ in 0..self.n_dof {
            out.push(self.e.draw(rng));
            out.push(self.fy.draw(rng));
            out.push(self.xi.draw(rng));
        }
        out
    }

    pub fn model_spec(&self, theta2: &[f64]) -> ModelSpec {
        ModelSpec {
            stories: theta2
                .chunks_exact(3)
                .map(|c| StorySpec {
                    e: c[0],
                    fy: c[1],
                    xi: c[2],
                    b: self.b,
                })
                .collect(),
        }
    }

    pub fn feature_names(&self, p: usize) -> Vec<String> {
        let mut names: Vec<String> = (1..=p).map(|i| format!("w{i}")).collect();
        for s in 1..=self.n_dof {
            names.push(format!("E{s}"));
            names.push(format!("Fy{s}"));
            names.push(format!("xi{s}"));
        }
        names
    }
}

pub fn target_names() -> Vec<String> {
    vec!["peak_roof_disp".into(), "peak_floor_accel".into()]
}

/// One simulated sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub theta: Vec<f64>,
    pub edp: Edp,
    /// Some story's peak drift exceeded its yield displacement.
    pub yielded: bool,
}

/// Reconstructs the ground motion for `θ = [w, θ₂]` and simulates it.
pub fn simulate_theta(
    basis: &SpectralBasis,
    template: &ModelTemplate,
    theta: &[f64],
    opts: &SolverOptions,
) -> Result<SampleOutcome, PipelineError> {
    let p = basis.p();
    let record = basis.reconstruct_raw(&theta[..p], "generated")?;
    simulate_record(&record, template, theta, p, opts)
}

pub(crate) fn simulate_record(
    record: &crate::ingest::GroundMotionRecord,
    template: &ModelTemplate,
    theta: &[f64],
    p: usize,
    opts: &SolverOptions,
) -> Result<SampleOutcome, PipelineError> {
    let spec = template.model_spec(&theta[p..]);
    let model = ShearModel::from_spec(&spec)?;
    let h = newmark_solve(&model, record, opts)?;
    let drifts = h.peak_drifts();
    let yielded = drifts
        .iter()
        .zip(&spec.stories)
        .any(|(d, s)| *d > s.fy / s.e);
    Ok(SampleOutcome {
        theta: theta.to_vec(),
        edp: extract_edps(&h),
        yielded,
    })
}

/// `[w, θ₂]` for substream `index` of `(seed, ns)`.
pub fn draw_theta(bounds: &WeightBounds, template: &ModelTemplate, seed: u64, ns: Namespace, index: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, ns, index);
    let mut theta = bounds.sample(&mut rng);
    theta.extend(template.draw(&mut rng));
    theta
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_samples: usize,
    pub template: ModelTemplate,
    pub seed: u64,
    /// Override of the weight sampling box; defaults to the per-row range of
    /// the suite's own weights.
    #[serde(default)]
    pub weight_bounds: Option<(Vec<f64>, Vec<f64>)>,
    /// Abort when more than this share of solves fail.
    #[serde(default = "default_max_failure")]
    pub max_failure_rate: f64,
}

fn default_max_failure() -> f64 {
    0.01
}

impl GenerationConfig {
    pub fn new(n_samples: usize, template: ModelTemplate, seed: u64) -> Self {
        Self {
            n_samples,
            template,
            seed,
            weight_bounds: None,
            max_failure_rate: default_max_failure(),
        }
    }

    pub fn bounds(&self, basis: &SpectralBasis) -> Result<WeightBounds, PipelineError> {
        let b = match &self.weight_bounds {
            Some((lo, hi)) => WeightBounds::new(lo.clone(), hi.clone())?,
            None => basis.weight_bounds(),
        };
        if b.dim() != basis.p() {
            return Err(PipelineError::Config(format!("weight bounds have {} entries, basis rank is {}", b.dim(), basis.p())));
        }
        Ok(b)
    }

    pub fn hash(&self) -> String {
        crate::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub n_requested: usize,
    pub n_kept: usize,
    pub n_failed: usize,
    pub failed_indices: Vec<usize>,
    pub failure_messages: Vec<String>,
    pub n_yielded: usize,
    pub yield_fraction: f64,
    pub basis_id: String,
    pub template: ModelTemplate,
}

pub fn generate_dataset(basis: &SpectralBasis, cfg: &GenerationConfig) -> Result<(Dataset, GenerationStats), PipelineError> {
    cfg.template.validate()?;
    if cfg.n_samples == 0 {
        return Err(PipelineError::Config("n_samples must be >= 1".into()));
    }
    let bounds = cfg.bounds(basis)?;
    let opts = SolverOptions::default();
    let outcomes: Vec<Result<SampleOutcome, PipelineError>> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let theta = draw_theta(&bounds, &cfg.template, cfg.seed, Namespace::Generation, i as u64);
            simulate_theta(basis, &cfg.template, &theta, &opts)
        })
        .collect();

    let d = basis.p() + 3 * cfg.template.n_dof;
    let mut x = Vec::with_capacity(cfg.n_samples * d);
    let mut y = Vec::with_capacity(cfg.n_samples * 2);
    let mut failed = Vec::new();
    let mut messages = Vec::new();
    let mut n_yielded = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => {
                x.extend_from_slice(&s.theta);
                y.extend_from_slice(&s.edp.as_array());
                n_yielded += s.yielded as usize;
            }
            Err(PipelineError::Integrator(e)) => {
                log::warn!("sample {i} excluded: {e}");
                failed.push(i);
                messages.push(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    let n_failed = failed.len();
    if n_failed as f64 > cfg.max_failure_rate * cfg.n_samples as f64 {
        return Err(PipelineError::FailureRate {
            failed: n_failed,
            total: cfg.n_samples,
        });
    }
    let n_kept = cfg.n_samples - n_failed;
    let stats = GenerationStats {
        n_requested: cfg.n_samples,
        n_kept,
        n_failed,
        failed_indices: failed,
        failure_messages: messages,
        n_yielded,
        yield_fraction: n_yielded as f64 / n_kept.max(1) as f64,
        basis_id: basis.basis_id().to_string(),
        template: cfg.template.clone(),
    };
    let mut ds = Dataset::new(
        Table::new(n_kept, d, x),
        Table::new(n_kept, 2, y),
        cfg.template.feature_names(basis.p()),
        target_names(),
        cfg.seed,
    )
    .map_err(PipelineError::from)?;
    ds.config_hash = Some(cfg.hash());
    ds.meta = serde_json::to_value(&stats).map_err(SurrogateError::from)?;
    Ok((ds, stats))
}
