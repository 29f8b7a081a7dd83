//! Orthonormal time-history basis of a ground-motion suite.
//!
//! The suite matrix `A` (n_steps × m) is factored as `A = U·Σ` with `U`
//! orthonormal and `Σ = S·Vᵀ`. A record is encoded by its weight vector
//! `Uᵀx` and decoded by `U·w`; new motions are synthesized by drawing
//! weights uniformly inside the per-row range of `Σ`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio;
use crate::ingest::{GroundMotionRecord, SuiteMatrix};
use crate::linalg::{self, Matrix};

pub const BASIS_MAGIC: &[u8; 8] = b"QBASIS01";

/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("symmetric eigen-solver did not converge within {0} sweeps")]
    EigenFailure(usize),
    #[error("suite must satisfy n_steps >= m >= 1 and be finite (got {n}x{m})")]
    BadSuite { n: usize, m: usize },
    #[error("every singular value is zero")]
    AllZeroSuite,
    #[error("record grid (dt={dt}, n={n}) does not match basis grid (dt={basis_dt}, n={basis_n})")]
    GridMismatch {
        dt: f64,
        n: usize,
        basis_dt: f64,
        basis_n: usize,
    },
    #[error("weight vector belongs to basis {found}, expected {expected}")]
    BasisMismatch { expected: String, found: String },
    #[error("weight vector has length {found}, basis rank is {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid truncation: {0}")]
    BadCriterion(String),
    #[error("malformed basis file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    /// n_steps × p, orthonormal columns.
    pub u: Matrix,
    /// All m singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// p × m weight matrix; column j encodes suite record j.
    pub sigma: Matrix,
    pub dt: f64,
    basis_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Rank(usize),
    Variance(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub basis_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Per-vector and cumulative explained-variance fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainedVariance {
    pub per_vector: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Flips `col` so its largest-magnitude entry (earliest on ties) is positive.
/// Returns true if the column was negated.
fn fix_sign(col: &mut [f64]) -> bool {
    let mut best = 0;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
        true
    } else {
        false
    }
}

/// Thin SVD through the Gram matrix `AᵀA`.
///
/// Eigenvectors `V` come from the Jacobi solver; singular values are then
/// refined as `‖A·vᵢ‖`, which resolves small values far below the Gram
/// matrix's `√ε` floor. `U` is re-orthonormalized by two passes of modified
/// Gram–Schmidt and `Σ = UᵀA`, so `U·Σ` is the orthogonal projection of `A`
/// onto the retained span.
pub fn svd_thin(suite: &SuiteMatrix) -> Result<SpectralBasis, BasisError> {
    svd_of(&suite.data, suite.dt)
}

pub fn svd_of(a: &Matrix, dt: f64) -> Result<SpectralBasis, BasisError> {
    let (n, m) = (a.rows(), a.cols());
    if m == 0 || n < m || !a.is_finite() {
        return Err(BasisError::BadSuite { n, m });
    }
    let gram = a.gram();
    let eig = linalg::jacobi_eigen(&gram, linalg::JACOBI_MAX_SWEEPS)
        .ok_or(BasisError::EigenFailure(linalg::JACOBI_MAX_SWEEPS))?;

    let mut cols: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..m)
        .map(|k| {
            let v = eig.vectors.column(k).to_vec();
            let av = a.mul_vec(&v);
            (linalg::norm2(&av), av, v)
        })
        .collect();
    cols.sort_by(|x, y| y.0.total_cmp(&x.0));

    let s_max = cols[0].0;
    let singular_values: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let rank = if s_max == 0.0 {
        0
    } else {
        singular_values.iter().take_while(|&&s| s > RANK_TOL * s_max).count()
    };

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
    for (s, av, _) in cols.iter().take(rank) {
        let mut u: Vec<f64> = av.iter().map(|x| x / s).collect();
        for _ in 0..2 {
            for prev in &u_cols {
                let proj = linalg::dot(prev, &u);
                linalg::axpy(-proj, prev, &mut u);
            }
            let nrm = linalg::norm2(&u);
            u.iter_mut().for_each(|x| *x /= nrm);
        }
        fix_sign(&mut u);
        u_cols.push(u);
    }

    let u = if rank == 0 {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&u_cols)
    };
    let mut sigma = Matrix::zeros(rank, m);
    for j in 0..m {
        let w = u.tr_mul_vec(a.column(j));
        sigma.column_mut(j).copy_from_slice(&w);
    }
    Ok(SpectralBasis::from_parts(u, singular_values, sigma, dt))
}

impl SpectralBasis {
    pub fn from_parts(u: Matrix, singular_values: Vec<f64>, sigma: Matrix, dt: f64) -> Self {
        let mut b = Self {
            u,
            singular_values,
            sigma,
            dt,
            basis_id: String::new(),
        };
        b.basis_id = binio::sha256_hex(&b.to_bytes());
        b
    }

    pub fn p(&self) -> usize {
        self.u.cols()
    }

    pub fn m(&self) -> usize {
        self.singular_values.len()
    }

    pub fn n_steps(&self) -> usize {
        self.u.rows()
    }

    /// SHA-256 of the binary payload.
    pub fn basis_id(&self) -> &str {
        &self.basis_id
    }

    /// Keeps the first `p` basis vectors, chosen by rank or by the smallest
    /// `k` whose cumulative explained variance reaches `τ`.
    pub fn truncate(&self, criterion: Truncation) -> Result<SpectralBasis, BasisError> {
        let p = match criterion {
            Truncation::Rank(p) => {
                if p == 0 || p > self.m() {
                    return Err(BasisError::BadCriterion(format!("rank {p} outside 1..={}", self.m())));
                }
                p
            }
            Truncation::Variance(tau) => {
                if !(tau > 0.0 && tau <= 1.0) {
                    return Err(BasisError::BadCriterion(format!("variance fraction {tau} outside (0, 1]")));
                }
                let ev = self.explained_variance()?;
                ev.cumulative
                    .iter()
                    .position(|&c| c >= tau - 1e-12)
                    .map_or(self.m(), |k| k + 1)
            }
        };
        let p = p.min(self.p());
        Ok(SpectralBasis::from_parts(
            self.u.leading_columns(p),
            self.singular_values.clone(),
            self.sigma.leading_rows(p),
            self.dt,
        ))
    }

    pub fn explained_variance(&self) -> Result<ExplainedVariance, BasisError> {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return Err(BasisError::AllZeroSuite);
        }
        let per_vector: Vec<f64> = self.singular_values.iter().map(|s| s * s / total).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = self
            .singular_values
            .iter()
            .map(|s| {
                acc += s * s;
                acc / total
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(ExplainedVariance { per_vector, cumulative })
    }

    fn check_grid(&self, record: &GroundMotionRecord) -> Result<(), BasisError> {
        let same_dt = (record.dt - self.dt).abs() <= 1e-12 * self.dt;
        if !same_dt || record.accel.len() != self.n_steps() {
            return Err(BasisError::GridMismatch {
                dt: record.dt,
                n: record.accel.len(),
                basis_dt: self.dt,
                basis_n: self.n_steps(),
            });
        }
        Ok(())
    }

    /// `w = Uᵀ·x`. The record must already be on the basis grid.
    pub fn project(&self, record: &GroundMotionRecord) -> Result<WeightVector, BasisError> {
        self.check_grid(record)?;
        Ok(WeightVector {
            w: self.u.tr_mul_vec(&record.accel),
            basis_id: self.basis_id.clone(),
        })
    }

    /// `x = U·w` on the basis grid.
    pub fn reconstruct(&self, w: &WeightVector, id: &str) -> Result<GroundMotionRecord, BasisError> {
        if w.basis_id != self.basis_id {
            return Err(BasisError::BasisMismatch {
                expected: self.basis_id.clone(),
                found: w.basis_id.clone(),
            });
        }
        self.reconstruct_raw(&w.w, id)
    }

    /// Like `reconstruct` but takes bare weights (no basis-id check).
    pub fn reconstruct_raw(&self, w: &[f64], id: &str) -> Result<GroundMotionRecord, BasisError> {
        if w.len() != self.p() {
            return Err(BasisError::LengthMismatch {
                expected: self.p(),
                found: w.len(),
            });
        }
        Ok(GroundMotionRecord {
            id: id.to_string(),
            dt: self.dt,
            accel: self.u.mul_vec(w),
            source_meta: Default::default(),
        })
    }

    pub fn weights(&self, w: Vec<f64>) -> WeightVector {
        WeightVector {
            w,
            basis_id: self.basis_id.clone(),
        }
    }

    /// Per-row min/max of `Σ`.
    pub fn weight_bounds(&self) -> WeightBounds {
        let p = self.p();
        let mut lo = vec![f64::INFINITY; p];
        let mut hi = vec![f64::NEG_INFINITY; p];
        for j in 0..self.sigma.cols() {
            for (i, &v) in self.sigma.column(j).iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        WeightBounds { lo, hi }
    }

    /// Binary layout: magic, `n_steps, m, p` (u32 LE), `dt`, then `U`
    /// (column-major), the singular values and `Σ` (column-major), all f64 LE.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BASIS_MAGIC)?;
        binio::write_u32(&mut w, self.n_steps() as u32)?;
        binio::write_u32(&mut w, self.m() as u32)?;
        binio::write_u32(&mut w, self.p() as u32)?;
        binio::write_f64(&mut w, self.dt)?;
        binio::write_f64s(&mut w, self.u.as_col_major())?;
        binio::write_f64s(&mut w, &self.singular_values)?;
        binio::write_f64s(&mut w, self.sigma.as_col_major())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, BasisError> {
        if !binio::expect_magic(&mut r, BASIS_MAGIC)? {
            return Err(BasisError::Malformed("bad magic".into()));
        }
        let n = binio::read_u32(&mut r)? as usize;
        let m = binio::read_u32(&mut r)? as usize;
        let p = binio::read_u32(&mut r)? as usize;
        if p > m || m > n {
            return Err(BasisError::Malformed(format!("inconsistent sizes n={n} m={m} p={p}")));
        }
        let dt = binio::read_f64(&mut r)?;
        let u = binio::read_f64s(&mut r, n * p)?;
        let s = binio::read_f64s(&mut r, m)?;
        let sigma = binio::read_f64s(&mut r, p * m)?;
        Ok(Self::from_parts(
            Matrix::from_col_major(n, p, u),
            s,
            Matrix::from_col_major(p, m, sigma),
            dt,
        ))
    }

    /// Writes the binary basis to `path` and its sidecar to `path.json`.
    pub fn save(&self, path: &std::path::Path, provenance: serde_json::Value) -> Result<(), BasisError> {
        std::fs::write(path, self.to_bytes())?;
        let text = serde_json::to_string_pretty(&self.sidecar(provenance)).map_err(std::io::Error::from)? + "\n";
        std::fs::write(crate::ingest::sidecar_path(path), text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, BasisError> {
        Self::read_binary(&std::fs::read(path)?[..])
    }

    pub fn sidecar(&self, provenance: serde_json::Value) -> BasisSidecar {
        BasisSidecar {
            basis_id: self.basis_id.clone(),
            n_steps: self.n_steps(),
            m: self.m(),
            p: self.p(),
            dt: self.dt,
            explained_variance: self.explained_variance().ok(),
            provenance,
        }
    }
}

/// JSON sidecar written next to a basis file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisSidecar {
    pub basis_id: String,
    pub n_steps: usize,
    pub m: usize,
    pub p: usize,
    pub dt: f64,
    pub explained_variance: Option<ExplainedVariance>,
    pub provenance: serde_json::Value,
}

impl WeightBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, BasisError> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(BasisError::BadCriterion("bounds must satisfy lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Independent uniform draws per coordinate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&lo, &hi)| {
                let u: f64 = rng.gen();
                if lo == hi {
                    lo
                } else {
                    lo + (hi - lo) * u
                }
            })
            .collect()
    }
}

/// Draws one weight vector inside `bounds`, tagged with `basis`'s id.
pub fn sample_weights<R: Rng + ?Sized>(basis: &SpectralBasis, bounds: &WeightBounds, rng: &mut R) -> WeightVector {
    basis.weights(bounds.sample(rng))
}
