//! Earthquake ground-motion encoding, nonlinear shear-building simulation
//! and machine-learning surrogates for seismic demand prediction.
//!
//! The workflow runs ingest → basis → (sample weights, simulate) → dataset
//! → surrogates → validation; each stage lives in its own module and the
//! [`pipeline`] module wires them together.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
mod binio;
pub mod ingest;
pub mod integrator;
pub mod intensity;
pub mod linalg;
pub mod pipeline;
pub mod seeds;
pub mod structures;
pub mod surrogates;

pub use binio::sha256_hex;
