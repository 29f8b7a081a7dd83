//! Ground-motion intensity measures: PGA, Arias intensity and spectral
//! moments of the one-sided power spectral density.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::ingest::GroundMotionRecord;

/// Standard gravity, m/s².
pub const G: f64 = 9.80665;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImReport {
    pub record_id: String,
    /// g
    pub pga: f64,
    /// m/s
    pub arias: f64,
    /// First moment of the PSD of the acceleration in m/s².
    pub spectral_moment_1: f64,
}

/// Which spectrum the spectral moments are taken of; recorded in reports.
pub const SPECTRAL_MOMENT_BASIS: &str = "one-sided periodogram PSD of acceleration (m/s^2), mean removed, rectangular window, DC excluded";

pub fn pga(record: &GroundMotionRecord) -> f64 {
    record.accel.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
}

/// `IA = π/(2g) ∫ a² dt` with `a` in m/s², trapezoidal rule.
pub fn arias_intensity(record: &GroundMotionRecord) -> f64 {
    let a = &record.accel;
    let integral_g2: f64 = a.windows(2).map(|w| 0.5 * (w[0] * w[0] + w[1] * w[1])).sum::<f64>() * record.dt;
    PI / (2.0 * G) * integral_g2 * G * G
}

/// One-sided periodogram `(ω_k, G(ω_k))` for `k = 1..=N/2`, plus `Δω`.
///
/// The record is converted to m/s², its mean removed, zero-padded to a power
/// of two `N` and normalized by the record's own duration, so `Σ G Δω` equals
/// the mean square of the demeaned record.
pub fn periodogram(record: &GroundMotionRecord) -> (Vec<f64>, Vec<f64>, f64) {
    let n_orig = record.accel.len();
    let n = n_orig.next_power_of_two().max(2);
    let mean = record.accel.iter().sum::<f64>() / n_orig as f64;
    let mut buf: Vec<Complex<f64>> = record
        .accel
        .iter()
        .map(|&a| Complex::new((a - mean) * G, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let dt = record.dt;
    let d_omega = 2.0 * PI / (n as f64 * dt);
    let scale = dt / (PI * n_orig as f64);
    let half = n / 2;
    let mut omega = Vec::with_capacity(half);
    let mut psd = Vec::with_capacity(half);
    for (k, x) in buf.iter().enumerate().take(half + 1).skip(1) {
        let fold = if k == half { 0.5 } else { 1.0 };
        omega.push(k as f64 * d_omega);
        psd.push(fold * scale * x.norm_sqr());
    }
    (omega, psd, d_omega)
}

/// `λ_k = Σ ω_jᵏ G(ω_j) Δω`, DC bin excluded.
pub fn spectral_moment(record: &GroundMotionRecord, order: u32) -> f64 {
    assert!(order <= 2, "spectral moment order must be 0, 1 or 2");
    let (omega, psd, d_omega) = periodogram(record);
    omega
        .iter()
        .zip(&psd)
        .map(|(w, g)| w.powi(order as i32) * g * d_omega)
        .sum()
}

pub fn report(record: &GroundMotionRecord) -> ImReport {
    ImReport {
        record_id: record.id.clone(),
        pga: pga(record),
        arias: arias_intensity(record),
        spectral_moment_1: spectral_moment(record, 1),
    }
}

/// Percent differences `100·(b − a)/a` for (PGA, Arias, λ₁).
pub fn percent_deltas(original: &ImReport, other: &ImReport) -> [f64; 3] {
    let pct = |a: f64, b: f64| if a == 0.0 { 0.0 } else { 100.0 * (b - a) / a };
    [
        pct(original.pga, other.pga),
        pct(original.arias, other.arias),
        pct(original.spectral_moment_1, other.spectral_moment_1),
    ]
}
