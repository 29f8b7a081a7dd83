//! Validation against fresh simulations.
//!
//! `validate_generated` draws new `(w, θ₂)` pairs from the validation
//! namespace, which never overlaps the generation streams. `validate_record`
//! fixes the weights by projecting one record onto the basis and draws only
//! the structural parameters. Both compare the model's prediction with a
//! fresh solve, sample by sample.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{draw_theta, simulate_record, simulate_theta, target_names, ModelTemplate};
use super::stats::{summarize, ErrorSummary};
use super::PipelineError;
use crate::basis::{SpectralBasis, WeightBounds};
use crate::ingest::{pad_or_truncate, resample, GroundMotionRecord, LengthAdjustment, SuiteMatrix};
use crate::integrator::SolverOptions;
use crate::intensity::{self, ImReport};
use crate::seeds::{stream_rng, Namespace};
use crate::surrogates::{Predictor, SurrogateError};

/// Targets with `|y|` below this are left out of percent errors.
pub const ERROR_FLOOR: f64 = 1e-9;
pub const PERCENTILE_METHOD: &str = "linear interpolation between order statistics (type 7)";

/// Predicts by running the simulator itself; the reference "perfect model".
pub struct SimulatorOracle<'a> {
    pub basis: &'a SpectralBasis,
    pub template: &'a ModelTemplate,
    /// When set, this record drives every solve instead of `U·w`.
    pub record: Option<GroundMotionRecord>,
}

impl Predictor for SimulatorOracle<'_> {
    fn input_dim(&self) -> usize {
        self.basis.p() + 3 * self.template.n_dof
    }

    fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        if x.len() != self.input_dim() {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let opts = SolverOptions::default();
        let out = match &self.record {
            Some(r) => simulate_record(r, self.template, x, self.basis.p(), &opts),
            None => simulate_theta(self.basis, self.template, x, &opts),
        };
        out.map(|s| s.edp.as_array().to_vec())
            .map_err(|e| SurrogateError::Prediction(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample: usize,
    pub repeat: usize,
    pub y_true: Vec<f64>,
    pub y_pred: Vec<f64>,
    /// `100·|ŷ − y|/|y|`, `None` where `|y|` is below the floor.
    pub percent_error: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImStats {
    pub n: usize,
    pub pga_median: f64,
    pub arias_median: f64,
    pub spectral_moment_1_median: f64,
    pub pga_mean: f64,
    pub arias_mean: f64,
    pub spectral_moment_1_mean: f64,
}

impl ImStats {
    fn from_reports(r: &[ImReport]) -> Option<Self> {
        let med = |f: &dyn Fn(&ImReport) -> f64| summarize(&r.iter().map(f).collect::<Vec<_>>()).map(|s| (s.median, s.mean));
        let (pm, pa) = med(&|x| x.pga)?;
        let (am, aa) = med(&|x| x.arias)?;
        let (lm, la) = med(&|x| x.spectral_moment_1)?;
        Some(Self {
            n: r.len(),
            pga_median: pm,
            arias_median: am,
            spectral_moment_1_median: lm,
            pga_mean: pa,
            arias_mean: aa,
            spectral_moment_1_mean: la,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImComparison {
    pub basis: String,
    pub generated: Option<ImStats>,
    pub suite: Option<ImStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDiagnostics {
    pub record_id: String,
    /// `‖x − U·Uᵀx‖₂ / ‖x‖₂` on the basis grid.
    pub relative_l2_error: f64,
    pub length_adjustment: String,
    pub weights: Vec<f64>,
    pub im_original: ImReport,
    pub im_reconstructed: ImReport,
    /// Percent differences for (PGA, Arias intensity, first spectral moment).
    pub im_percent_deltas: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_sha256: Option<String>,
    pub basis_id: String,
    pub seed: u64,
    pub namespace: String,
    pub repeats: usize,
    pub percentile_method: String,
    pub error_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub protocol: String,
    pub n_per_repeat: usize,
    pub targets: Vec<String>,
    /// Pooled over all repeats, one entry per target.
    pub summaries: Vec<Option<ErrorSummary>>,
    pub excluded: Vec<usize>,
    /// Median percent error of each repeat, per target.
    pub repeat_medians: Vec<Vec<f64>>,
    pub failed_solves: Vec<usize>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
    pub im_comparison: Option<ImComparison>,
    pub reconstruction: Option<ReconstructionDiagnostics>,
    pub samples: Vec<SampleError>,
}

impl ValidationReport {
    pub fn medians(&self) -> Vec<Option<f64>> {
        self.summaries.iter().map(|s| s.as_ref().map(|s| s.median)).collect()
    }

    /// One row per sample and target; floats are printed in their shortest
    /// round-trip form so statistics recompute exactly from the file.
    pub fn write_error_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sample,repeat,target,y_true,y_pred,percent_error,excluded")?;
        for s in &self.samples {
            for (t, name) in self.targets.iter().enumerate() {
                match s.percent_error[t] {
                    Some(e) => writeln!(w, "{},{},{},{},{},{},0", s.sample, s.repeat, name, s.y_true[t], s.y_pred[t], e)?,
                    None => writeln!(w, "{},{},{},{},{},,1", s.sample, s.repeat, name, s.y_true[t], s.y_pred[t])?,
                }
            }
        }
        Ok(())
    }

    pub fn error_csv(&self) -> String {
        let mut v = Vec::new();
        self.write_error_csv(&mut v).expect("writing to memory");
        String::from_utf8(v).expect("csv is utf-8")
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("target,bin,lo,hi,count\n");
        for (name, s) in self.targets.iter().zip(&self.summaries) {
            if let Some(s) = s {
                for (b, c) in s.histogram.counts.iter().enumerate() {
                    out.push_str(&format!("{name},{b},{},{},{c}\n", s.histogram.edges[b], s.histogram.edges[b + 1]));
                }
            }
        }
        out
    }

    pub fn save(&self, dir: &std::path::Path, stem: &str) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::write(dir.join(format!("{stem}_errors.csv")), self.error_csv())?;
        std::fs::write(dir.join(format!("{stem}_histogram.csv")), self.histogram_csv())?;
        Ok(())
    }
}

pub fn percent_error(y: f64, yhat: f64) -> Option<f64> {
    (y.abs() >= ERROR_FLOOR).then(|| 100.0 * (yhat - y).abs() / y.abs())
}

fn sample_error(sample: usize, repeat: usize, y_true: Vec<f64>, y_pred: Vec<f64>) -> SampleError {
    let percent_error = y_true.iter().zip(&y_pred).map(|(y, p)| percent_error(*y, *p)).collect();
    SampleError {
        sample,
        repeat,
        y_true,
        y_pred,
        percent_error,
    }
}

fn assemble(
    protocol: &str,
    n: usize,
    samples: Vec<SampleError>,
    failed: Vec<usize>,
    repeats: usize,
    provenance: Provenance,
) -> ValidationReport {
    let targets = target_names();
    let mut summaries = Vec::new();
    let mut excluded = Vec::new();
    let mut repeat_medians = vec![Vec::new(); repeats];
    let mut notes = Vec::new();
    for t in 0..targets.len() {
        let errs: Vec<f64> = samples.iter().filter_map(|s| s.percent_error[t]).collect();
        let ex = samples.len() - errs.len();
        if ex > 0 {
            notes.push(format!("{ex} samples with |{}| < {ERROR_FLOOR:e} left out of percent errors", targets[t]));
        }
        excluded.push(ex);
        summaries.push(summarize(&errs));
        for (r, med) in repeat_medians.iter_mut().enumerate() {
            let e: Vec<f64> = samples.iter().filter(|s| s.repeat == r).filter_map(|s| s.percent_error[t]).collect();
            med.push(summarize(&e).map_or(f64::NAN, |s| s.median));
        }
    }
    if !failed.is_empty() {
        notes.push(format!("{} ground-truth solves failed and were left out", failed.len()));
    }
    ValidationReport {
        protocol: protocol.to_string(),
        n_per_repeat: n,
        targets,
        summaries,
        excluded,
        repeat_medians,
        failed_solves: failed,
        notes,
        provenance,
        im_comparison: None,
        reconstruction: None,
        samples,
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedOptions {
    pub n: usize,
    pub seed: u64,
    pub repeats: usize,
    pub weight_bounds: Option<WeightBounds>,
    pub model_sha256: Option<String>,
}

impl GeneratedOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            repeats: 1,
            weight_bounds: None,
            model_sha256: None,
        }
    }
}

/// Validation on freshly generated `(w, θ₂)` draws.
pub fn validate_generated(
    model: &dyn Predictor,
    basis: &SpectralBasis,
    template: &ModelTemplate,
    opts: &GeneratedOptions,
    suite: Option<&SuiteMatrix>,
) -> Result<ValidationReport, PipelineError> {
    template.validate()?;
    let bounds = opts.weight_bounds.clone().unwrap_or_else(|| basis.weight_bounds());
    let repeats = opts.repeats.max(1);
    let solver = SolverOptions::default();
    let total = opts.n * repeats;
    let results: Vec<Result<(SampleError, ImReport), PipelineError>> = (0..total)
        .into_par_iter()
        .map(|k| {
            let theta = draw_theta(&bounds, template, opts.seed, Namespace::Validation, k as u64);
            let truth = simulate_theta(basis, template, &theta, &solver)?;
            let pred = model.predict_row(&theta)?;
            let rec = basis.reconstruct_raw(&theta[..basis.p()], "generated")?;
            Ok((
                sample_error(k % opts.n, k / opts.n, truth.edp.as_array().to_vec(), pred),
                intensity::report(&rec),
            ))
        })
        .collect();
    let mut samples = Vec::with_capacity(total);
    let mut ims = Vec::with_capacity(total);
    let mut failed = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok((s, im)) => {
                samples.push(s);
                ims.push(im);
            }
            Err(PipelineError::Integrator(e)) => {
                log::warn!("validation sample {k} excluded: {e}");
                failed.push(k);
            }
            Err(e) => return Err(e),
        }
    }
    let provenance = Provenance {
        model_sha256: opts.model_sha256.clone(),
        basis_id: basis.basis_id().to_string(),
        seed: opts.seed,
        namespace: Namespace::Validation.label().to_string(),
        repeats,
        percentile_method: PERCENTILE_METHOD.to_string(),
        error_floor: ERROR_FLOOR,
    };
    let mut report = assemble("generated", opts.n, samples, failed, repeats, provenance);
    let suite_ims: Vec<ImReport> = suite
        .map(|s| (0..s.n_records()).into_par_iter().map(|j| intensity::report(&s.record(j))).collect())
        .unwrap_or_default();
    report.im_comparison = Some(ImComparison {
        basis: intensity::SPECTRAL_MOMENT_BASIS.to_string(),
        generated: ImStats::from_reports(&ims),
        suite: ImStats::from_reports(&suite_ims),
    });
    Ok(report)
}

/// Which record drives the ground-truth solves in record validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    /// The record as given (on the basis grid). The normal protocol.
    Original,
    /// Its basis reconstruction; isolates model error from encoding error.
    Reconstructed,
}

#[derive(Clone, Debug)]
pub struct RecordOptions {
    pub n: usize,
    pub seed: u64,
    pub truth: TruthSource,
    pub model_sha256: Option<String>,
}

impl RecordOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            truth: TruthSource::Original,
            model_sha256: None,
        }
    }
}

/// Brings a record onto the basis grid (resample, then pad or truncate).
pub fn to_basis_grid(basis: &SpectralBasis, record: &GroundMotionRecord) -> Result<(GroundMotionRecord, LengthAdjustment), PipelineError> {
    let r = resample(record, basis.dt)?;
    Ok(pad_or_truncate(&r, basis.n_steps()))
}

/// Projection diagnostics for one record: weights, relative error and the
/// intensity-measure deltas between the record and its reconstruction.
pub fn reconstruction_diagnostics(
    basis: &SpectralBasis,
    record: &GroundMotionRecord,
) -> Result<(ReconstructionDiagnostics, GroundMotionRecord, GroundMotionRecord), PipelineError> {
    let (gridded, adj) = to_basis_grid(basis, record)?;
    let w = basis.project(&gridded)?;
    let rec = basis.reconstruct(&w, &format!("{}-reconstructed", record.id))?;
    let num: f64 = gridded.accel.iter().zip(&rec.accel).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = gridded.accel.iter().map(|a| a * a).sum::<f64>().sqrt();
    let im_o = intensity::report(&gridded);
    let im_r = intensity::report(&rec);
    let diag = ReconstructionDiagnostics {
        record_id: record.id.clone(),
        relative_l2_error: if den > 0.0 { num / den } else { 0.0 },
        length_adjustment: format!("{adj:?}"),
        weights: w.w.clone(),
        im_percent_deltas: intensity::percent_deltas(&im_o, &im_r),
        im_original: im_o,
        im_reconstructed: im_r,
    };
    Ok((diag, gridded, rec))
}

/// Fixed-earthquake validation: `w` from projecting `record`, `θ₂` drawn
/// `n` times.
pub fn validate_record(
    model: &dyn Predictor,
    basis: &SpectralBasis,
    record: &GroundMotionRecord,
    template: &ModelTemplate,
    opts: &RecordOptions,
) -> Result<ValidationReport, PipelineError> {
    template.validate()?;
    let (diag, gridded, rec) = reconstruction_diagnostics(basis, record)?;
    let truth_record = match opts.truth {
        TruthSource::Original => gridded,
        TruthSource::Reconstructed => rec,
    };
    let solver = SolverOptions::default();
    let p = basis.p();
    let results: Vec<Result<SampleError, PipelineError>> = (0..opts.n)
        .into_par_iter()
        .map(|j| {
            let mut theta = diag.weights.clone();
            theta.extend(template.draw(&mut stream_rng(opts.seed, Namespace::RecordValidation, j as u64)));
            let truth = simulate_record(&truth_record, template, &theta, p, &solver)?;
            let pred = model.predict_row(&theta)?;
            Ok(sample_error(j, 0, truth.edp.as_array().to_vec(), pred))
        })
        .collect();
    let mut samples = Vec::with_capacity(opts.n);
    let mut failed = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(PipelineError::Integrator(e)) => {
                log::warn!("record validation sample {j} excluded: {e}");
                failed.push(j);
            }
            Err(e) => return Err(e),
        }
    }
    let provenance = Provenance {
        model_sha256: opts.model_sha256.clone(),
        basis_id: basis.basis_id().to_string(),
        seed: opts.seed,
        namespace: Namespace::RecordValidation.label().to_string(),
        repeats: 1,
        percentile_method: PERCENTILE_METHOD.to_string(),
        error_floor: ERROR_FLOOR,
    };
    let mut report = assemble("record", opts.n, samples, failed, 1, provenance);
    if opts.truth == TruthSource::Reconstructed {
        report.notes.push("ground truth simulated with the reconstructed record (ablation)".into());
    }
    report.reconstruction = Some(diag);
    Ok(report)
}
