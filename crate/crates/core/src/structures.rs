//! Story springs and shear-building stick models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};

/// Post-yield stiffness ratio used when a model spec omits `b`.
pub const DEFAULT_HARDENING: f64 = 0.02;
/// Lumped mass of every story.
pub const STORY_MASS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("story {story}: stiffness must be positive (got {k})")]
    NonPositiveStiffness { story: usize, k: f64 },
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("model has no stories")]
    Empty,
    #[error("eigen-solver did not converge")]
    EigenFailure,
}

/// Committed or trial state of a spring.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpringState {
    pub disp: f64,
    pub force: f64,
    /// Center of the yield surface (kinematic hardening back-force).
    pub back_force: f64,
}

/// Uniaxial bilinear spring with kinematic hardening and no isotropic
/// hardening: the elastic range is always `2·fy` wide and translates with
/// plastic flow.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearMaterial {
    k: f64,
    fy: f64,
    b: f64,
    committed: SpringState,
    trial: SpringState,
    committed_tangent: f64,
    trial_tangent: f64,
}

impl BilinearMaterial {
    pub fn new(k: f64, fy: f64, b: f64) -> Result<Self, StructureError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(StructureError::InvalidMaterial(format!("k must be positive and finite, got {k}")));
        }
        if !(fy > 0.0) {
            return Err(StructureError::InvalidMaterial(format!("fy must be positive, got {fy}")));
        }
        if !(0.0..1.0).contains(&b) {
            return Err(StructureError::InvalidMaterial(format!("b must lie in [0, 1), got {b}")));
        }
        Ok(Self {
            k,
            fy,
            b,
            committed: SpringState::default(),
            trial: SpringState::default(),
            committed_tangent: k,
            trial_tangent: k,
        })
    }

    /// A spring that never yields.
    pub fn elastic(k: f64) -> Result<Self, StructureError> {
        Self::new(k, f64::INFINITY, 0.0)
    }

    pub fn stiffness(&self) -> f64 {
        self.k
    }

    pub fn yield_force(&self) -> f64 {
        self.fy
    }

    pub fn hardening_ratio(&self) -> f64 {
        self.b
    }

    pub fn yield_disp(&self) -> f64 {
        self.fy / self.k
    }

    pub fn committed(&self) -> SpringState {
        self.committed
    }

    pub fn trial(&self) -> SpringState {
        self.trial
    }

    pub fn trial_tangent(&self) -> f64 {
        self.trial_tangent
    }

    /// Return mapping from the committed state to displacement `u`.
    /// Returns `(force, tangent)`.
    pub fn set_trial(&mut self, u: f64) -> (f64, f64) {
        let c = self.committed;
        let f_star = c.force + self.k * (u - c.disp);
        let xi = f_star - c.back_force;
        if xi.abs() <= self.fy {
            self.trial = SpringState {
                disp: u,
                force: f_star,
                back_force: c.back_force,
            };
            self.trial_tangent = self.k;
        } else {
            // kinematic hardening modulus giving post-yield tangent b·k
            let h = self.b * self.k / (1.0 - self.b);
            let dgamma = (xi.abs() - self.fy) / (self.k + h);
            let sign = xi.signum();
            let back_force = c.back_force + h * dgamma * sign;
            // force sits exactly on the translated yield surface
            self.trial = SpringState {
                disp: u,
                force: back_force + self.fy * sign,
                back_force,
            };
            self.trial_tangent = self.b * self.k;
        }
        (self.trial.force, self.trial_tangent)
    }

    pub fn commit(&mut self) {
        self.committed = self.trial;
        self.committed_tangent = self.trial_tangent;
    }

    pub fn revert(&mut self) {
        self.trial = self.committed;
        self.trial_tangent = self.committed_tangent;
    }

    /// Back to the virgin state.
    pub fn reset(&mut self) {
        self.committed = SpringState::default();
        self.committed_tangent = self.k;
        self.revert();
    }
}

/// One story: bilinear spring, viscous dashpot and lumped floor mass.
#[derive(Clone, Debug, PartialEq)]
pub struct StoryAssembly {
    pub spring: BilinearMaterial,
    /// Optional elastic stiffness acting in parallel with the spring.
    pub parallel_k: f64,
    pub dashpot_c: f64,
    pub mass: f64,
    pub xi: f64,
}

impl StoryAssembly {
    /// Dashpot set to `c = 2·ξ·√(k·m)`.
    pub fn new(spring: BilinearMaterial, xi: f64, mass: f64) -> Result<Self, StructureError> {
        if !(xi >= 0.0) || !(mass > 0.0) {
            return Err(StructureError::InvalidMaterial(format!("need xi >= 0 and mass > 0 (xi={xi}, mass={mass})")));
        }
        let dashpot_c = 2.0 * xi * (spring.stiffness() * mass).sqrt();
        Ok(Self {
            spring,
            parallel_k: 0.0,
            dashpot_c,
            mass,
            xi,
        })
    }

    pub fn initial_stiffness(&self) -> f64 {
        self.spring.stiffness() + self.parallel_k
    }
}

/// Lumped-mass shear building; story 0 sits on the ground.
#[derive(Clone, Debug, PartialEq)]
pub struct ShearModel {
    pub stories: Vec<StoryAssembly>,
}

/// JSON description of one story. `E` and `Fy` are in the same numeric
/// convention as the parameter table: stiffness and yield force in
/// consistent units with a unit story mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorySpec {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "Fy")]
    pub fy: f64,
    pub xi: f64,
    #[serde(default = "default_b")]
    pub b: f64,
}

fn default_b() -> f64 {
    DEFAULT_HARDENING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub stories: Vec<StorySpec>,
}

impl ShearModel {
    pub fn new(stories: Vec<StoryAssembly>) -> Result<Self, StructureError> {
        if stories.is_empty() {
            return Err(StructureError::Empty);
        }
        Ok(Self { stories })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self, StructureError> {
        let stories = spec
            .stories
            .iter()
            .map(|s| StoryAssembly::new(BilinearMaterial::new(s.e, s.fy, s.b)?, s.xi, STORY_MASS))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(stories)
    }

    /// Linear elastic model with unit masses and equal story stiffness.
    pub fn uniform_elastic(n_dof: usize, k: f64, xi: f64) -> Result<Self, StructureError> {
        let stories = (0..n_dof)
            .map(|_| StoryAssembly::new(BilinearMaterial::elastic(k)?, xi, STORY_MASS))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(stories)
    }

    pub fn n_dof(&self) -> usize {
        self.stories.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.stories.iter().map(|s| s.mass).collect()
    }

    /// Tridiagonal stiffness matrix from the initial story stiffnesses.
    pub fn initial_stiffness_matrix(&self) -> Matrix {
        let n = self.n_dof();
        let k: Vec<f64> = self.stories.iter().map(StoryAssembly::initial_stiffness).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = k[i] + if i + 1 < n { k[i + 1] } else { 0.0 };
            if i + 1 < n {
                out[(i, i + 1)] = -k[i + 1];
                out[(i + 1, i)] = -k[i + 1];
            }
        }
        out
    }

    /// Elastic periods in seconds, longest first.
    pub fn natural_periods(&self) -> Result<Vec<f64>, StructureError> {
        for (story, s) in self.stories.iter().enumerate() {
            let k = s.initial_stiffness();
            if !(k > 0.0) {
                return Err(StructureError::NonPositiveStiffness { story, k });
            }
        }
        let n = self.n_dof();
        let k = self.initial_stiffness_matrix();
        let inv_sqrt_m: Vec<f64> = self.masses().iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut a = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                a[(i, j)] = inv_sqrt_m[i] * k[(i, j)] * inv_sqrt_m[j];
            }
        }
        let eig = linalg::jacobi_eigen(&a, linalg::JACOBI_MAX_SWEEPS).ok_or(StructureError::EigenFailure)?;
        // descending eigenvalues -> ascending periods; reverse for longest first
        let mut periods: Vec<f64> = eig
            .values
            .iter()
            .map(|&lam| 2.0 * std::f64::consts::PI / lam.sqrt())
            .collect();
        periods.sort_by(|a, b| b.total_cmp(a));
        Ok(periods)
    }

    /// Resets every spring to its virgin state.
    pub fn reset(&mut self) {
        for s in &mut self.stories {
            s.spring.reset();
        }
    }
}
