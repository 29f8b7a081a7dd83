//! `qsurrogate` command-line front end.
//!
//! Every verb reads and writes the library's file formats; progress goes to a
//! log file and a short summary goes to stdout. Exit codes: 0 success,
//! 1 usage, 2 configuration, 3 runtime.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qsurrogate::basis::{svd_thin, SpectralBasis, Truncation, WeightVector};
use qsurrogate::ingest::{build_suite, read_record_file, write_at2, SuiteMatrix, DEFAULT_DT, DEFAULT_DURATION};
use qsurrogate::integrator::{extract_edps, newmark_solve, SolverOptions};
use qsurrogate::intensity;
use qsurrogate::linalg::Matrix;
use qsurrogate::pipeline::config::{load_suite_records, manifest_only, SuiteSource};
use qsurrogate::pipeline::synthetic::{synthetic_suite, BUNDLED_SEED, BUNDLED_SIZE};
use qsurrogate::pipeline::validate::{GeneratedOptions, RecordOptions, TruthSource};
use qsurrogate::pipeline::{
    generate_dataset, run, train_leaderboard, validate_generated, validate_record, GenerationConfig, Leaderboard,
    ModelTemplate, PipelineError, RunConfig, TrainingGrids,
};
use qsurrogate::seeds::{derive_seed, stream_rng, Namespace};
use qsurrogate::sha256_hex;
use qsurrogate::structures::{ModelSpec, ShearModel};
use qsurrogate::surrogates::persist::{load_model, model_to_bytes};
use qsurrogate::surrogates::{Dataset, Predictor};

#[derive(Parser, Debug)]
#[command(name = "qsurrogate", version, about = "Ground-motion encoding, nonlinear shear-building simulation and ML surrogates")]
struct Cli {
    /// Master seed; overrides the seed in --config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run configuration (JSON). Required by `run`; other verbs take their
    /// defaults from it where relevant.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log file.
    #[arg(long, global = true, default_value = "qsurrogate.log")]
    log_file: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read records, resample and pad them, and write a suite file.
    Ingest(IngestArgs),
    /// Write a synthetic record suite as AT2 files.
    Synth(SynthArgs),
    /// Build, apply or sample a spectral basis.
    #[command(subcommand)]
    Basis(BasisCmd),
    /// Time-history analysis of one structure under one record.
    Simulate(SimulateArgs),
    /// Generate or split a training dataset.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Cross-validate, fit and rank all four surrogate families.
    Train(TrainArgs),
    /// Print a saved leaderboard.
    Leaderboard(LeaderboardArgs),
    /// Compare a surrogate against fresh simulations.
    #[command(subcommand)]
    Validate(ValidateCmd),
    /// Intensity measures of every record of a suite.
    Im(ImArgs),
    /// The whole workflow from a configuration file.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Record files (.at2 or .csv).
    #[arg(long, num_args = 1.., conflicts_with_all = ["dir", "synthetic"])]
    records: Vec<PathBuf>,
    /// Directory of record files, read in file-name order.
    #[arg(long, conflicts_with = "synthetic")]
    dir: Option<PathBuf>,
    /// Use N synthetic records instead of files.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = DEFAULT_DURATION)]
    duration: f64,
    /// Output suite file; a `.json` manifest is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = BUNDLED_SIZE)]
    n: usize,
    /// Suite seed (default: the bundled suite's).
    #[arg(long, default_value_t = BUNDLED_SEED)]
    suite_seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum BasisCmd {
    /// Thin SVD of a suite, truncated by variance or rank.
    Build {
        #[arg(long)]
        suite: PathBuf,
        /// Keep the fewest vectors explaining this share of energy.
        #[arg(long, conflicts_with = "rank")]
        variance: Option<f64>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weights of a record (JSON).
    Project {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record from a weights JSON, written as AT2 (or CSV by extension).
    Reconstruct {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random weights within the suite's bounds, reconstructed into a suite file.
    Sample {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Structure JSON: {"stories": [{"E":..,"Fy":..,"xi":..,"b":..}]}.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    record: PathBuf,
    /// History CSV (t, then u, v, a_total, force per story).
    #[arg(long, required_unless_present = "edp_only")]
    out: Option<PathBuf>,
    /// Print one JSON line with the demand parameters instead.
    #[arg(long)]
    edp_only: bool,
}

#[derive(Subcommand, Debug)]
enum DatasetCmd {
    /// Draw weights and structural parameters, simulate, and tabulate.
    Generate {
        #[arg(long)]
        basis: PathBuf,
        /// Number of samples (default: the config's, else 20000).
        #[arg(long)]
        n: Option<usize>,
        /// Stories of the standard template (ignored with --config).
        #[arg(long, default_value_t = 1)]
        stories: usize,
        /// Also split with this test fraction.
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign a seeded train/test split, in place unless --out is given.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GridChoice {
    Desk,
    FullScale,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Built-in grid when no --config is given.
    #[arg(long, value_enum, default_value = "desk")]
    grid: GridChoice,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct LeaderboardArgs {
    /// Directory holding leaderboard.json.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ValidateCmd {
    /// Fresh random weights and parameters.
    Generated {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Independent batches; the report lists each batch's medians.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Suite for the intensity-measure comparison.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// One real record, projected, with fresh structural parameters.
    Record {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        record: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Simulate the truth on the reconstructed record instead.
        #[arg(long)]
        reconstructed_truth: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ImArgs {
    #[arg(long)]
    suite: PathBuf,
    /// A second suite (for example from `basis sample`) listed after the first.
    #[arg(long)]
    generated: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Validate the config and print the manifest without running.
    #[arg(long)]
    manifest_only: bool,
    /// Overrides output_dir of the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// A problem with the configuration rather than with the work itself.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() || matches!(cause.downcast_ref::<PipelineError>(), Some(PipelineError::Config(_))) {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(&cli.log_file);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            eprintln!("see {} for details", cli.log_file.display());
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn init_logging(path: &Path) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if let Ok(f) = File::options().create(true).append(true).open(path) {
        b.target(env_logger::Target::Pipe(Box::new(f)));
    }
    let _ = b.try_init();
}

fn load_config(cli: &Cli) -> Result<Option<RunConfig>> {
    let Some(path) = &cli.config else { return Ok(None) };
    if !path.exists() {
        return Err(config_err(format!("config file not found: {}", path.display())));
    }
    let mut cfg = RunConfig::load(path).map_err(|e| config_err(e.to_string()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    Ok(Some(cfg))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if let Command::Run(args) = &cli.command {
        let mut cfg = cfg.ok_or_else(|| config_err("`run` needs --config <json>"))?;
        if let Some(d) = &args.out_dir {
            cfg.output_dir = d.clone();
        }
        return cmd_run(&cfg, args.manifest_only);
    }
    let workers = cli.workers.or(cfg.as_ref().and_then(|c| c.workers));
    if workers == Some(0) {
        return Err(config_err("--workers must be >= 1"));
    }
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().context("starting worker pool")?;
    }
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Basis(b) => cmd_basis(b, seed),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Dataset(d) => cmd_dataset(d, seed, cfg.as_ref()),
        Command::Train(a) => cmd_train(a, seed, cfg.as_ref()),
        Command::Leaderboard(a) => cmd_leaderboard(a),
        Command::Validate(v) => cmd_validate(v, seed),
        Command::Im(a) => cmd_im(a),
        Command::Run(_) => unreachable!(),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_basis(path: &Path) -> Result<SpectralBasis> {
    SpectralBasis::load(path).with_context(|| format!("reading basis {}", path.display()))
}

fn load_suite(path: &Path) -> Result<SuiteMatrix> {
    SuiteMatrix::load(path).with_context(|| format!("reading suite {}", path.display()))
}

fn read_record(path: &Path) -> Result<qsurrogate::ingest::GroundMotionRecord> {
    read_record_file(path).with_context(|| format!("reading record {}", path.display()))
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let records = if let Some(n) = a.synthetic {
        synthetic_suite(BUNDLED_SEED, n)?
    } else if let Some(dir) = &a.dir {
        let src = SuiteSource {
            records: Vec::new(),
            record_dir: Some(dir.clone()),
            synthetic: None,
            dt: a.dt,
            duration: a.duration,
        };
        load_suite_records(&src)?
    } else if a.records.is_empty() {
        return Err(config_err("ingest needs --records, --dir or --synthetic"));
    } else {
        a.records.iter().map(|p| read_record(p)).collect::<Result<Vec<_>>>()?
    };
    finish_ingest(&records, a)
}

fn finish_ingest(records: &[qsurrogate::ingest::GroundMotionRecord], a: &IngestArgs) -> Result<()> {
    let suite = build_suite(records, a.dt, a.duration)?;
    suite.save(&a.out)?;
    println!("suite: {} records x {} steps at dt {} -> {}", suite.n_records(), suite.n_steps, suite.dt, a.out.display());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    for r in synthetic_suite(a.suite_seed, a.n)? {
        let path = a.out_dir.join(format!("{}.at2", r.id));
        write_at2(&r, File::create(&path)?)?;
    }
    println!("wrote {} records to {}", a.n, a.out_dir.display());
    Ok(())
}

fn cmd_basis(b: &BasisCmd, seed: u64) -> Result<()> {
    match b {
        BasisCmd::Build { suite, variance, rank, out } => {
            let s = load_suite(suite)?;
            let crit = match (variance, rank) {
                (_, Some(r)) => Truncation::Rank(*r),
                (Some(v), None) => Truncation::Variance(*v),
                (None, None) => Truncation::Variance(0.99),
            };
            let full = svd_thin(&s)?;
            let basis = full.truncate(crit).map_err(|e| config_err(e.to_string()))?;
            basis.save(
                out,
                serde_json::json!({"suite_sha256": sha256_hex(&s.to_bytes()), "truncation": crit, "full_rank": full.p()}),
            )?;
            println!("basis {}: p = {} of {} -> {}", basis.basis_id(), basis.p(), full.p(), out.display());
        }
        BasisCmd::Project { basis, record, out } => {
            let bs = load_basis(basis)?;
            let (diag, _, _) = qsurrogate::pipeline::validate::reconstruction_diagnostics(&bs, &read_record(record)?)?;
            write_json(out, &bs.weights(diag.weights.clone()))?;
            println!("{} weights, relative reconstruction error {:.3e} -> {}", diag.weights.len(), diag.relative_l2_error, out.display());
        }
        BasisCmd::Reconstruct { basis, weights, out } => {
            let bs = load_basis(basis)?;
            let w: WeightVector = serde_json::from_str(&std::fs::read_to_string(weights)?)
                .map_err(|e| config_err(format!("{}: {e}", weights.display())))?;
            let id = out.file_stem().map_or("reconstructed".into(), |s| s.to_string_lossy().into_owned());
            let rec = bs.reconstruct(&w, &id)?;
            write_record(&rec, out)?;
            println!("{} samples at dt {} -> {}", rec.len(), rec.dt, out.display());
        }
        BasisCmd::Sample { basis, n, out } => {
            let bs = load_basis(basis)?;
            let bounds = bs.weight_bounds();
            let mut cols = Vec::with_capacity(*n);
            let mut ids = Vec::with_capacity(*n);
            for k in 0..*n {
                let w = bounds.sample(&mut stream_rng(seed, Namespace::Generation, k as u64));
                cols.push(bs.reconstruct_raw(&w, "sample")?.accel);
                ids.push(format!("sample{k:04}"));
            }
            let suite = SuiteMatrix {
                dt: bs.dt,
                n_steps: bs.n_steps(),
                source_meta: vec![BTreeMap::new(); ids.len()],
                records: ids,
                data: Matrix::from_columns(&cols),
            };
            suite.save(out)?;
            println!("{n} sampled records -> {}", out.display());
        }
    }
    Ok(())
}

fn write_record(rec: &qsurrogate::ingest::GroundMotionRecord, out: &Path) -> Result<()> {
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut f = std::io::BufWriter::new(File::create(out)?);
        writeln!(f, "t,accel_g")?;
        for (k, a) in rec.accel.iter().enumerate() {
            writeln!(f, "{},{}", k as f64 * rec.dt, a)?;
        }
    } else {
        write_at2(rec, File::create(out)?)?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let spec: ModelSpec = serde_json::from_str(
        &std::fs::read_to_string(&a.model).map_err(|e| config_err(format!("{}: {e}", a.model.display())))?,
    )
    .map_err(|e| config_err(format!("{}: {e}", a.model.display())))?;
    let model = ShearModel::from_spec(&spec).map_err(|e| config_err(e.to_string()))?;
    let rec = read_record(&a.record)?;
    let h = newmark_solve(&model, &rec, &SolverOptions::default())?;
    let edp = extract_edps(&h);
    if a.edp_only {
        println!(
            "{}",
            serde_json::json!({"peak_roof_disp": edp.peak_roof_disp, "peak_floor_accel_g": edp.peak_floor_accel_g()})
        );
    }
    if let Some(out) = &a.out {
        let mut f = std::io::BufWriter::new(File::create(out)?);
        write!(f, "t")?;
        for s in 1..=h.n_dof {
            write!(f, ",u{s},v{s},a_total{s},force{s}")?;
        }
        writeln!(f)?;
        for k in 0..h.n_steps() {
            write!(f, "{}", k as f64 * h.dt)?;
            for s in 0..h.n_dof {
                let i = k * h.n_dof + s;
                write!(f, ",{},{},{},{}", h.u[i], h.v[i], h.a_total[i], h.story_force[i])?;
            }
            writeln!(f)?;
        }
        if !a.edp_only {
            println!("{} steps -> {}", h.n_steps(), out.display());
        }
    }
    Ok(())
}

fn cmd_dataset(d: &DatasetCmd, seed: u64, cfg: Option<&RunConfig>) -> Result<()> {
    match d {
        DatasetCmd::Generate { basis, n, stories, test_fraction, out } => {
            let bs = load_basis(basis)?;
            let gen = match cfg {
                Some(c) => {
                    let mut g = c.generation_config();
                    if let Some(n) = n {
                        g.n_samples = *n;
                    }
                    g
                }
                None => GenerationConfig::new(n.unwrap_or(20_000), ModelTemplate::standard(*stories), derive_seed(seed, Namespace::Generation, 0)),
            };
            let (mut ds, stats) = generate_dataset(&bs, &gen)?;
            if let Some(f) = test_fraction {
                ds.split(*f, derive_seed(seed, Namespace::Split, 0)).map_err(|e| config_err(e.to_string()))?;
            }
            ds.save(out)?;
            println!(
                "{} rows ({} failed, {:.1}% yielded) -> {}",
                stats.n_kept,
                stats.n_failed,
                100.0 * stats.yield_fraction,
                out.display()
            );
        }
        DatasetCmd::Split { data, test_fraction, out } => {
            let mut ds = Dataset::load(data)?;
            ds.split(*test_fraction, derive_seed(seed, Namespace::Split, 0)).map_err(|e| config_err(e.to_string()))?;
            let dest = out.as_ref().unwrap_or(data);
            ds.save(dest)?;
            let s = ds.split_ref()?;
            println!("{} train / {} test -> {}", s.train.len(), s.test.len(), dest.display());
        }
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, seed: u64, cfg: Option<&RunConfig>) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let grids = match (cfg, a.grid) {
        (Some(c), _) => c.training.clone(),
        (None, GridChoice::Desk) => TrainingGrids::desk(),
        (None, GridChoice::FullScale) => TrainingGrids::full_scale(),
    };
    let (board, _) = train_leaderboard(&ds, &grids, derive_seed(seed, Namespace::Training, 0), Some(&a.out_dir))?;
    print_leaderboard(&board);
    Ok(())
}

fn print_leaderboard(board: &Leaderboard) {
    println!("rank  kind  train R2   test R2");
    for r in &board.rows {
        println!("{:>4}  {:<4}  {:>8.4}  {:>8.4}", r.rank, r.kind.name(), r.train_r2.mean, r.test_r2.mean);
    }
}

fn cmd_leaderboard(a: &LeaderboardArgs) -> Result<()> {
    let path = a.dir.join("leaderboard.json");
    let board: Leaderboard = serde_json::from_str(&std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
    print_leaderboard(&board);
    Ok(())
}

fn template_for(model: &dyn Predictor, basis: &SpectralBasis) -> Result<ModelTemplate> {
    let extra = model.input_dim().checked_sub(basis.p()).filter(|e| e % 3 == 0 && *e > 0).ok_or_else(|| {
        config_err(format!("model takes {} inputs, which does not fit a basis of rank {}", model.input_dim(), basis.p()))
    })?;
    Ok(ModelTemplate::standard(extra / 3))
}

fn cmd_validate(v: &ValidateCmd, seed: u64) -> Result<()> {
    match v {
        ValidateCmd::Generated { model, basis, n, repeats, suite, out_dir } => {
            let m = load_model(model).with_context(|| format!("reading model {}", model.display()))?;
            let bs = load_basis(basis)?;
            let template = template_for(&m, &bs)?;
            let suite = suite.as_deref().map(load_suite).transpose()?;
            let mut opts = GeneratedOptions::new(*n, derive_seed(seed, Namespace::Validation, 0));
            opts.repeats = *repeats;
            opts.model_sha256 = Some(sha256_hex(&model_to_bytes(&m)));
            let r = validate_generated(&m, &bs, &template, &opts, suite.as_ref())?;
            std::fs::create_dir_all(out_dir)?;
            r.save(out_dir, "validation_generated")?;
            print_medians(&r);
        }
        ValidateCmd::Record { model, basis, record, n, reconstructed_truth, out_dir } => {
            let m = load_model(model).with_context(|| format!("reading model {}", model.display()))?;
            let bs = load_basis(basis)?;
            let template = template_for(&m, &bs)?;
            let rec = read_record(record)?;
            let mut opts = RecordOptions::new(*n, derive_seed(seed, Namespace::RecordValidation, 0));
            opts.model_sha256 = Some(sha256_hex(&model_to_bytes(&m)));
            if *reconstructed_truth {
                opts.truth = TruthSource::Reconstructed;
            }
            let r = validate_record(&m, &bs, &rec, &template, &opts)?;
            std::fs::create_dir_all(out_dir)?;
            r.save(out_dir, "validation_record")?;
            if let Some(d) = &r.reconstruction {
                println!(
                    "reconstruction error {:.3e}; IM deltas PGA {:.2}%, Arias {:.2}%, lambda1 {:.2}%",
                    d.relative_l2_error, d.im_percent_deltas[0], d.im_percent_deltas[1], d.im_percent_deltas[2]
                );
            }
            print_medians(&r);
        }
    }
    Ok(())
}

fn print_medians(r: &qsurrogate::pipeline::ValidationReport) {
    for (t, m) in r.targets.iter().zip(r.medians()) {
        match m {
            Some(m) => println!("{t}: median percent error {m:.2}%"),
            None => println!("{t}: no valid samples"),
        }
    }
}

fn cmd_im(a: &ImArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut sources = vec![("suite", load_suite(&a.suite)?)];
    if let Some(g) = &a.generated {
        sources.push(("generated", load_suite(g)?));
    }
    for (label, s) in &sources {
        for j in 0..s.n_records() {
            rows.push((*label, intensity::report(&s.record(j))));
        }
    }
    let mut f = std::io::BufWriter::new(File::create(&a.out)?);
    writeln!(f, "source,id,pga,arias,lambda1")?;
    for (label, r) in &rows {
        writeln!(f, "{label},{},{},{},{}", r.record_id, r.pga, r.arias, r.spectral_moment_1)?;
    }
    println!("{} rows -> {}", rows.len(), a.out.display());
    Ok(())
}

fn cmd_run(cfg: &RunConfig, manifest_only_flag: bool) -> Result<()> {
    if manifest_only_flag {
        let m = manifest_only(cfg).map_err(|e| config_err(e.to_string()))?;
        println!("{}", serde_json::to_string_pretty(&m)?);
        return Ok(());
    }
    let s = run(cfg).map_err(|e| match e {
        PipelineError::Config(m) => config_err(m),
        other => anyhow!(other),
    })?;
    print_leaderboard(&s.leaderboard);
    print_medians(&s.validation);
    println!("artifacts in {} ({:.0} s)", cfg.output_dir.display(), s.seconds);
    if s.validation.samples.is_empty() {
        bail!("validation produced no samples");
    }
    Ok(())
}
