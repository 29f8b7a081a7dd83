//! Whole-run configuration and the end-to-end driver.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::generate::{generate_dataset, GenerationConfig, GenerationStats, ModelTemplate};
use super::synthetic::synthetic_suite;
use super::train::{model_file_name, train_leaderboard, Leaderboard, TrainingGrids};
use super::validate::{validate_generated, validate_record, GeneratedOptions, RecordOptions, ValidationReport};
use super::PipelineError;
use crate::basis::{svd_thin, SpectralBasis, Truncation};
use crate::ingest::{build_suite, read_record_file, GroundMotionRecord, SuiteMatrix, DEFAULT_DT, DEFAULT_DURATION};
use crate::seeds::{derive_seed, Namespace};
use crate::sha256_hex;
use crate::surrogates::persist::model_to_bytes;
use crate::surrogates::ModelKind;

pub const TOOL_NAME: &str = "qsurrogate";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn d_dt() -> f64 {
    DEFAULT_DT
}
fn d_duration() -> f64 {
    DEFAULT_DURATION
}
fn d_trunc() -> Truncation {
    Truncation::Variance(0.99)
}
fn d_test_fraction() -> f64 {
    0.1
}
fn d_fifty() -> usize {
    50
}
fn d_one() -> usize {
    1
}
fn d_kind() -> ModelKind {
    ModelKind::Dnn
}
fn d_failure() -> f64 {
    0.01
}
fn d_samples() -> usize {
    20_000
}
fn d_template() -> ModelTemplate {
    ModelTemplate::standard(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSuite {
    pub seed: u64,
    pub n_records: usize,
}

/// Where the ground-motion suite comes from. Record files are read in the
/// order given; a directory is read in file-name order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSource {
    #[serde(default)]
    pub records: Vec<PathBuf>,
    #[serde(default)]
    pub record_dir: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSuite>,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_duration")]
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    #[serde(default = "d_trunc")]
    pub truncation: Truncation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    #[serde(default = "d_samples")]
    pub n_samples: usize,
    #[serde(default = "d_template")]
    pub template: ModelTemplate,
    #[serde(default)]
    pub weight_bounds: Option<(Vec<f64>, Vec<f64>)>,
    #[serde(default = "d_failure")]
    pub max_failure_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "d_test_fraction")]
    pub test_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    /// Model family validated; defaults to DNN.
    #[serde(default = "d_kind")]
    pub model: ModelKind,
    #[serde(default = "d_fifty")]
    pub n_generated: usize,
    #[serde(default = "d_one")]
    pub repeats: usize,
    #[serde(default)]
    pub record: Option<PathBuf>,
    #[serde(default = "d_fifty")]
    pub n_param_samples: usize,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self {
            model: d_kind(),
            n_generated: 50,
            repeats: 1,
            record: None,
            n_param_samples: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; not part of the run's identity.
    #[serde(default)]
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub suite: SuiteSource,
    #[serde(default = "default_basis")]
    pub basis: BasisSection,
    #[serde(default = "default_generation")]
    pub generation: GenerationSection,
    #[serde(default = "default_split")]
    pub split: SplitSection,
    #[serde(default = "TrainingGrids::desk")]
    pub training: TrainingGrids,
    #[serde(default)]
    pub validation: ValidationSection,
}

fn default_basis() -> BasisSection {
    BasisSection { truncation: d_trunc() }
}

fn default_generation() -> GenerationSection {
    GenerationSection {
        n_samples: d_samples(),
        template: d_template(),
        weight_bounds: None,
        max_failure_rate: d_failure(),
    }
}

fn default_split() -> SplitSection {
    SplitSection {
        test_fraction: d_test_fraction(),
    }
}

impl RunConfig {
    /// The scaled-down recipe: 20 synthetic records, 20 000 one-story
    /// samples, 90/10 split, the desk grids, 50 validation draws.
    pub fn desk(output_dir: PathBuf, seed: u64) -> Self {
        Self {
            seed,
            workers: None,
            output_dir,
            suite: SuiteSource {
                records: Vec::new(),
                record_dir: None,
                synthetic: Some(SyntheticSuite {
                    seed: super::synthetic::BUNDLED_SEED,
                    n_records: super::synthetic::BUNDLED_SIZE,
                }),
                dt: DEFAULT_DT,
                duration: DEFAULT_DURATION,
            },
            basis: default_basis(),
            generation: default_generation(),
            split: default_split(),
            training: TrainingGrids::desk(),
            validation: ValidationSection::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks everything that can be checked without doing work.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let s = &self.suite;
        let sources = (!s.records.is_empty()) as u8 + s.record_dir.is_some() as u8 + s.synthetic.is_some() as u8;
        if sources != 1 {
            return Err(PipelineError::Config("suite needs exactly one of records, record_dir, synthetic".into()));
        }
        if !(s.dt > 0.0) || !(s.duration > 0.0) {
            return Err(PipelineError::Config("suite dt and duration must be positive".into()));
        }
        match self.basis.truncation {
            Truncation::Variance(t) if !(t > 0.0 && t <= 1.0) => {
                return Err(PipelineError::Config(format!("variance threshold {t} outside (0, 1]")))
            }
            Truncation::Rank(0) => return Err(PipelineError::Config("rank must be >= 1".into())),
            _ => {}
        }
        if self.generation.n_samples == 0 {
            return Err(PipelineError::Config("n_samples must be >= 1".into()));
        }
        self.generation.template.validate()?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(PipelineError::Config("test_fraction must lie in (0, 1)".into()));
        }
        let t = &self.training;
        if t.dt.is_empty() || t.rf.is_empty() || t.svr.is_empty() || t.dnn.is_empty() {
            return Err(PipelineError::Config("every training grid needs at least one point".into()));
        }
        if t.k_folds < 2 {
            return Err(PipelineError::Config("k_folds must be >= 2".into()));
        }
        if self.workers == Some(0) {
            return Err(PipelineError::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// Hash of the configuration without the worker count and output
    /// directory, neither of which affects any result.
    pub fn identity_hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.output_dir = PathBuf::new();
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            n_samples: self.generation.n_samples,
            template: self.generation.template.clone(),
            seed: derive_seed(self.seed, Namespace::Generation, 0),
            weight_bounds: self.generation.weight_bounds.clone(),
            max_failure_rate: self.generation.max_failure_rate,
        }
    }
}

pub fn load_suite_records(src: &SuiteSource) -> Result<Vec<GroundMotionRecord>, PipelineError> {
    if let Some(s) = &src.synthetic {
        return Ok(synthetic_suite(s.seed, s.n_records)?);
    }
    let mut paths = src.records.clone();
    if let Some(dir) = &src.record_dir {
        let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "at2" | "csv"))
            })
            .collect();
        found.sort();
        paths = found;
    }
    paths
        .iter()
        .map(|p| read_record_file(p).map_err(PipelineError::from))
        .collect()
}

/// Everything that identifies a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub seeds: serde_json::Value,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub suite: SuiteMatrix,
    pub basis: SpectralBasis,
    pub generation: GenerationStats,
    pub leaderboard: Leaderboard,
    pub validation: ValidationReport,
    pub record_validation: Option<ValidationReport>,
    pub seconds: f64,
}

fn seeds_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "master": cfg.seed,
        "generation": cfg.generation_config().seed,
        "split": derive_seed(cfg.seed, Namespace::Split, 0),
        "training": derive_seed(cfg.seed, Namespace::Training, 0),
        "validation": derive_seed(cfg.seed, Namespace::Validation, 0),
        "record_validation": derive_seed(cfg.seed, Namespace::RecordValidation, 0),
    })
}

/// Builds the manifest without doing any work.
pub fn manifest_only(cfg: &RunConfig) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let mut inputs = Vec::new();
    for p in cfg.suite.records.iter().chain(cfg.validation.record.iter()) {
        inputs.push((p.display().to_string(), sha256_hex(&std::fs::read(p)?)));
    }
    Ok(Manifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_sha256: cfg.identity_hash(),
        config: RunConfig { workers: None, ..cfg.clone() },
        seeds: seeds_json(cfg),
        inputs,
        outputs: Vec::new(),
    })
}

/// Runs ingest → basis → generation → split → training → validation and
/// writes every artifact under `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_inner(cfg))
}

fn write(out: &Path, name: &str, bytes: &[u8], outputs: &mut Vec<(String, String)>) -> Result<(), PipelineError> {
    std::fs::write(out.join(name), bytes)?;
    outputs.push((name.to_string(), sha256_hex(bytes)));
    Ok(())
}

fn run_inner(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    let t0 = Instant::now();
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut manifest = manifest_only(cfg)?;
    let mut outputs = Vec::new();

    let records = load_suite_records(&cfg.suite)?;
    let suite = build_suite(&records, cfg.suite.dt, cfg.suite.duration)?;
    write(out, "suite.qsuite", &suite.to_bytes(), &mut outputs)?;
    write(out, "suite.qsuite.json", (serde_json::to_string_pretty(&suite.manifest())? + "\n").as_bytes(), &mut outputs)?;
    log::info!("suite: {} records x {} steps ({:.1}s)", suite.n_records(), suite.n_steps, t0.elapsed().as_secs_f64());

    let full = svd_thin(&suite)?;
    let basis = full.truncate(cfg.basis.truncation)?;
    write(out, "basis.qbasis", &basis.to_bytes(), &mut outputs)?;
    let basis_sidecar = basis.sidecar(serde_json::json!({
        "suite_sha256": sha256_hex(&suite.to_bytes()),
        "truncation": cfg.basis.truncation,
        "full_rank": full.p(),
    }));
    write(out, "basis.qbasis.json", (serde_json::to_string_pretty(&basis_sidecar)? + "\n").as_bytes(), &mut outputs)?;
    log::info!("basis: p = {} of {} ({:.1}s)", basis.p(), full.p(), t0.elapsed().as_secs_f64());

    let gen = cfg.generation_config();
    let (mut ds, stats) = generate_dataset(&basis, &gen)?;
    ds.split(cfg.split.test_fraction, derive_seed(cfg.seed, Namespace::Split, 0))?;
    write(out, "dataset.qdata", &ds.to_bytes(), &mut outputs)?;
    write(out, "dataset.qdata.json", (serde_json::to_string_pretty(&ds.sidecar())? + "\n").as_bytes(), &mut outputs)?;
    log::info!(
        "dataset: {} rows, {} failed, yield fraction {:.3} ({:.1}s)",
        stats.n_kept,
        stats.n_failed,
        stats.yield_fraction,
        t0.elapsed().as_secs_f64()
    );

    let model_dir = out.join("models");
    let (board, models) = train_leaderboard(&ds, &cfg.training, derive_seed(cfg.seed, Namespace::Training, 0), Some(&model_dir))?;
    for kind in ModelKind::ALL {
        for name in [model_file_name(kind), format!("{}.json", model_file_name(kind))] {
            outputs.push((format!("models/{name}"), sha256_hex(&std::fs::read(model_dir.join(&name))?)));
        }
    }
    for name in ["leaderboard.json", "leaderboard.csv"] {
        outputs.push((format!("models/{name}"), sha256_hex(&std::fs::read(model_dir.join(name))?)));
    }
    log::info!("training done ({:.1}s)", t0.elapsed().as_secs_f64());

    let idx = ModelKind::ALL.iter().position(|k| *k == cfg.validation.model).expect("kind listed");
    let chosen = &models[idx];
    let model_sha = sha256_hex(&model_to_bytes(chosen));
    let mut gopts = GeneratedOptions::new(cfg.validation.n_generated, derive_seed(cfg.seed, Namespace::Validation, 0));
    gopts.repeats = cfg.validation.repeats;
    gopts.weight_bounds = Some(gen.bounds(&basis)?);
    gopts.model_sha256 = Some(model_sha.clone());
    let report = validate_generated(chosen, &basis, &gen.template, &gopts, Some(&suite))?;
    save_report(out, "validation_generated", &report, &mut outputs)?;

    let record_report = match &cfg.validation.record {
        Some(path) => {
            let rec = read_record_file(path)?;
            let mut ropts = RecordOptions::new(cfg.validation.n_param_samples, derive_seed(cfg.seed, Namespace::RecordValidation, 0));
            ropts.model_sha256 = Some(model_sha);
            let r = validate_record(chosen, &basis, &rec, &gen.template, &ropts)?;
            save_report(out, "validation_record", &r, &mut outputs)?;
            Some(r)
        }
        None => None,
    };
    log::info!("validation done ({:.1}s)", t0.elapsed().as_secs_f64());

    manifest.outputs = outputs;
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunSummary {
        manifest,
        suite,
        basis,
        generation: stats,
        leaderboard: board,
        validation: report,
        record_validation: record_report,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

fn save_report(out: &Path, stem: &str, r: &ValidationReport, outputs: &mut Vec<(String, String)>) -> Result<(), PipelineError> {
    r.save(out, stem)?;
    for suffix in [".json", "_errors.csv", "_histogram.csv"] {
        let name = format!("{stem}{suffix}");
        outputs.push((name.clone(), sha256_hex(&std::fs::read(out.join(&name))?)));
    }
    Ok(())
}
