//! Synthetic ground-motion suite.
//!
//! Each record is white noise passed through a Kanai–Tajimi style ground
//! filter, shaped by a rise/plateau/decay envelope, high-passed to remove
//! drift and scaled to a target PGA. Sampling steps and durations vary
//! between records so that ingestion has real resampling and padding work.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ingest::{GroundMotionRecord, IngestError};
use crate::seeds::{stream_rng, Namespace};

/// Seed of the bundled synthetic suite.
pub const BUNDLED_SEED: u64 = 20_200_705;
pub const BUNDLED_SIZE: usize = 20;

const STEPS: [f64; 3] = [0.005, 0.01, 0.02];

/// Record `j` of the synthetic suite for `seed`.
pub fn synthetic_record(seed: u64, j: usize) -> Result<GroundMotionRecord, IngestError> {
    let mut rng = stream_rng(seed, Namespace::Synthetic, j as u64);
    let dt = STEPS[j % STEPS.len()];
    let duration = rng.gen_range(25.0..95.0);
    let n = (duration / dt).round() as usize + 1;
    let omega_g = rng.gen_range(2.0 * std::f64::consts::PI * 1.0..2.0 * std::f64::consts::PI * 5.0);
    let zeta_g = rng.gen_range(0.3..0.7);
    let pga = rng.gen_range(0.1..0.6);
    let rise = rng.gen_range(2.0..6.0);
    let plateau = rise + rng.gen_range(5.0..(duration * 0.4).max(6.0));
    let decay = rng.gen_range(0.1..0.4);

    // Ground filter integrated with a few substeps per sample for accuracy.
    let sub = 4;
    let h = dt / sub as f64;
    let (mut x, mut v) = (0.0f64, 0.0f64);
    let mut accel = Vec::with_capacity(n);
    for i in 0..n {
        let w: f64 = StandardNormal.sample(&mut rng);
        let w = w / dt.sqrt();
        for _ in 0..sub {
            let a = -w - 2.0 * zeta_g * omega_g * v - omega_g * omega_g * x;
            v += h * a;
            x += h * v;
        }
        let t = i as f64 * dt;
        let env = if t < rise {
            (t / rise).powi(2)
        } else if t < plateau {
            1.0
        } else {
            (-decay * (t - plateau)).exp()
        };
        accel.push(env * (-2.0 * zeta_g * omega_g * v - omega_g * omega_g * x));
    }

    // First-order high-pass at 0.1 Hz, then remove the residual mean.
    let rc = 1.0 / (2.0 * std::f64::consts::PI * 0.1);
    let alpha = rc / (rc + dt);
    let mut prev_in = 0.0;
    let mut prev_out = 0.0;
    for a in accel.iter_mut() {
        let out = alpha * (prev_out + *a - prev_in);
        prev_in = *a;
        prev_out = out;
        *a = out;
    }
    let mean = accel.iter().sum::<f64>() / n as f64;
    accel.iter_mut().for_each(|a| *a -= mean);
    let peak = accel.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    accel.iter_mut().for_each(|a| *a *= pga / peak);

    let mut meta = BTreeMap::new();
    meta.insert("header1".into(), format!("Synthetic record {j:02} (filtered noise)"));
    meta.insert(
        "header2".into(),
        format!("seed {seed}, omega_g {omega_g:.3} rad/s, zeta_g {zeta_g:.3}, target PGA {pga:.3} g"),
    );
    meta.insert("header3".into(), "ACCELERATION TIME SERIES IN UNITS OF G".into());
    GroundMotionRecord::new(format!("SYN{j:02}"), dt, accel, meta)
}

pub fn synthetic_suite(seed: u64, n: usize) -> Result<Vec<GroundMotionRecord>, IngestError> {
    (0..n).map(|j| synthetic_record(seed, j)).collect()
}
