//! Acceptance criteria 1 to 11, one PASS/FAIL line each.
//!
//! Criteria 2 and 10 use real records when `QSURROGATE_FEMA_DIR` points at
//! a directory of the 44 far-field components (and, for 10,
//! `QSURROGATE_FEMA_RECORD` at the validation record); otherwise they run
//! their substitute checks.
//!
//! Run with `cargo test -p qsurrogate-core --test acceptance -- --nocapture`.

mod common;

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use common::{
    bundled_records_at, cycle_work, fd_gradient_check, modal_superposition_peaks, nudge_off_kinks,
    random_walk_force_excess, sdof_peaks, stats_from_error_csv,
};
use qsurrogate::basis::{svd_thin, SpectralBasis, Truncation};
use qsurrogate::ingest::{build_suite, SuiteMatrix};
use qsurrogate::integrator::{energy_balance, extract_edps, newmark_solve, SolverOptions};
use qsurrogate::intensity::{self, G};
use qsurrogate::pipeline::config::{load_suite_records, SuiteSource};
use qsurrogate::pipeline::synthetic::{synthetic_suite, BUNDLED_SEED, BUNDLED_SIZE};
use qsurrogate::pipeline::validate::reconstruction_diagnostics;
use qsurrogate::pipeline::{run, RunConfig, RunSummary};
use qsurrogate::seeds::{stream_rng, Namespace};
use qsurrogate::structures::{BilinearMaterial, ModelSpec, ShearModel, StorySpec};
use qsurrogate::surrogates::dnn::Mlp;
use qsurrogate::surrogates::tree::TreeParams;
use qsurrogate::surrogates::{fit, r2_score, Hyper, ModelKind, Table};
use rand::Rng;

const DESK_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn bundled_suite() -> SuiteMatrix {
    build_suite(&synthetic_suite(BUNDLED_SEED, BUNDLED_SIZE).unwrap(), 0.02, 89.98).unwrap()
}

fn fema_dir() -> Option<PathBuf> {
    std::env::var_os("QSURROGATE_FEMA_DIR").map(PathBuf::from).filter(|p| p.is_dir())
}

fn fema_suite(dir: PathBuf) -> SuiteMatrix {
    let src = SuiteSource {
        records: Vec::new(),
        record_dir: Some(dir),
        synthetic: None,
        dt: 0.02,
        duration: 89.98,
    };
    build_suite(&load_suite_records(&src).unwrap(), 0.02, 89.98).unwrap()
}

fn rel_frob(a: &qsurrogate::linalg::Matrix, b: &qsurrogate::linalg::Matrix) -> f64 {
    a.sub(b).frobenius_norm() / a.frobenius_norm()
}

fn c1_svd_fidelity() -> Outcome {
    let suite = bundled_suite();
    let full = svd_thin(&suite).unwrap();
    let recon = rel_frob(&suite.data, &full.u.matmul(&full.sigma));
    let total: f64 = full.singular_values.iter().map(|s| s * s).sum();
    let mut worst_ey = 0.0f64;
    for p in 1..=full.p() {
        let t = full.truncate(Truncation::Rank(p)).unwrap();
        let resid = suite.data.sub(&t.u.matmul(&t.sigma)).frobenius_norm().powi(2);
        let tail: f64 = full.singular_values[p..].iter().map(|s| s * s).sum();
        worst_ey = worst_ey.max((resid - tail).abs() / total);
    }
    let big = build_suite(&synthetic_suite(BUNDLED_SEED + 1, 44).unwrap(), 0.02, 89.98).unwrap();
    let t0 = Instant::now();
    let b44 = svd_thin(&big).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let recon44 = rel_frob(&big.data, &b44.u.matmul(&b44.sigma));
    outcome(
        recon <= 1e-9 && recon44 <= 1e-9 && worst_ey <= 1e-8 && secs < 5.0,
        format!(
            "reconstruction {recon:.2e} (20 records), {recon44:.2e} (44 records); Eckart-Young worst {worst_ey:.2e}; 4500x44 SVD {secs:.3} s"
        ),
    )
}

fn c2_explained_variance() -> Outcome {
    if let Some(dir) = fema_dir() {
        let suite = fema_suite(dir);
        let p = svd_thin(&suite).unwrap().truncate(Truncation::Variance(0.99)).unwrap().p();
        return outcome(
            suite.n_records() == 44 && (39..=41).contains(&p),
            format!("{} records, p = {p} at 0.99 (target 40 +/- 1)", suite.n_records()),
        );
    }
    let mut ok = true;
    let mut checked = 0;
    let mut suites = vec![bundled_suite()];
    for s in 0..10u64 {
        suites.push(build_suite(&synthetic_suite(500 + s, 3 + s as usize * 4).unwrap(), 0.02, 30.0).unwrap());
    }
    for suite in &suites {
        let ev = svd_thin(suite).unwrap().explained_variance().unwrap();
        ok &= (ev.cumulative.last().unwrap() - 1.0).abs() <= 1e-12;
        ok &= ev.cumulative.windows(2).all(|w| w[1] >= w[0]);
        ok &= ev.per_vector.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        ok &= ev.per_vector.iter().all(|v| *v >= 0.0);
        checked += 1;
    }
    let p = svd_thin(&suites[0]).unwrap().truncate(Truncation::Variance(0.99)).unwrap().p();
    outcome(
        ok,
        format!("substitute (no FEMA records): monotone and normalized on {checked} suites; bundled suite keeps p = {p} of 20 at 0.99"),
    )
}

fn c3_linear_oracle() -> Outcome {
    let model = ShearModel::uniform_elastic(1, 4.0 * PI * PI, 0.05).unwrap();
    let k3 = 4.0 * PI * PI / (2.0 - 2.0 * (PI / 7.0).cos());
    let model3 = ShearModel::uniform_elastic(3, k3, 0.05).unwrap();
    let c3 = 2.0 * 0.05 * k3.sqrt();
    let (mut du, mut da, mut du3, mut da3, mut slowest) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for rec in bundled_records_at(0.02) {
        let ag: Vec<f64> = rec.accel.iter().map(|a| a * G).collect();
        let t0 = Instant::now();
        let e = extract_edps(&newmark_solve(&model, &rec, &SolverOptions::default()).unwrap());
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        let (pu, pa) = sdof_peaks(2.0 * PI, 0.05, 0.02, &ag);
        du = du.max((e.peak_roof_disp - pu).abs() / pu);
        da = da.max((e.peak_floor_accel - pa).abs() / pa);
        let t0 = Instant::now();
        let e3 = extract_edps(&newmark_solve(&model3, &rec, &SolverOptions::default()).unwrap());
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        let (pu3, pa3) = modal_superposition_peaks(3, k3, c3, 0.02, &ag);
        du3 = du3.max((e3.peak_roof_disp - pu3).abs() / pu3);
        da3 = da3.max((e3.peak_floor_accel - pa3).abs() / pa3);
    }
    outcome(
        du <= 0.005 && da <= 0.01 && du3 <= 0.01 && da3 <= 0.01 && slowest < 1.0,
        format!(
            "1-DoF worst disp {:.3}%, accel {:.3}%; 3-DoF worst roof {:.3}%, accel {:.3}%; slowest solve {:.3} s",
            100.0 * du,
            100.0 * da,
            100.0 * du3,
            100.0 * da3,
            slowest
        ),
    )
}

fn c4_hysteresis() -> Outcome {
    let excess = random_walk_force_excess(10_000, 200, 4);
    let mut m = BilinearMaterial::new(40.0, 0.28, 0.0).unwrap();
    let uy = m.yield_disp();
    let mut range_ok = true;
    for cycle in 1..=5 {
        let amp = (1.0 + cycle as f64) * uy;
        m.set_trial(amp);
        m.commit();
        let top = m.committed().force;
        let (at_range, _) = m.set_trial(amp - 2.0 * uy);
        range_ok &= (top - 0.28).abs() <= 1e-12 && (at_range + 0.28).abs() <= 1e-12;
        let (inside, kt) = m.set_trial(amp - uy);
        range_ok &= inside.abs() <= 1e-12 && kt == 40.0;
        m.set_trial(-amp);
        m.commit();
    }
    let mut rng = stream_rng(4, Namespace::Test, 99);
    let mut worst_work = f64::INFINITY;
    for _ in 0..2000 {
        let path: Vec<f64> = (0..rng.gen_range(1..10)).map(|_| rng.gen_range(-4.0..4.0) * uy).collect();
        worst_work = worst_work.min(cycle_work(40.0, 0.28, 0.0, &path));
    }
    outcome(
        excess <= 1e-9 && range_ok && worst_work >= -1e-9,
        format!(
            "max force excess {excess:.2e} over 10^4 walks; elastic range 2 fy on scripted cycles: {range_ok}; min cycle work {worst_work:.3e}"
        ),
    )
}

fn c5_energy() -> Outcome {
    let model = ShearModel::from_spec(&ModelSpec {
        stories: vec![StorySpec { e: 40.0, fy: 0.28, xi: 0.05, b: 0.02 }],
    })
    .unwrap();
    let recs = bundled_records_at(0.005);
    let strongest = recs
        .iter()
        .max_by(|a, b| intensity::arias_intensity(a).total_cmp(&intensity::arias_intensity(b)))
        .unwrap();
    let h = newmark_solve(&model, strongest, &SolverOptions::default()).unwrap();
    let eb = energy_balance(&h);
    let ratio = eb.residual.abs() / eb.input;
    let yielded = h.peak_drifts()[0] > 0.28 / 40.0;
    let mut worst = 0.0f64;
    for r in &recs {
        let e = energy_balance(&newmark_solve(&model, r, &SolverOptions::default()).unwrap());
        worst = worst.max(e.residual.abs() / e.input);
    }
    outcome(
        ratio <= 0.01 && yielded,
        format!(
            "record {} (yielded: {yielded}): residual {:.4}% of input; worst over all bundled records {:.4}%",
            strongest.id,
            100.0 * ratio,
            100.0 * worst
        ),
    )
}

fn c6_gradient() -> Outcome {
    let mut rng = stream_rng(6, Namespace::Test, 0);
    let mut net = Mlp::init(vec![5, 32, 32, 2], &mut rng);
    let x = Table::new(16, 5, (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let y = Table::new(16, 2, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect());
    nudge_off_kinks(&mut net, &x, 1e-3);
    let (err, checked, skipped) = fd_gradient_check(&net, &x, &y, 1e-4);
    outcome(
        err <= 1e-5 && checked > skipped,
        format!("max relative error {err:.2e} over {checked} parameters ({skipped} skipped at kinks)"),
    )
}

fn c7_r2() -> Outcome {
    let t = |v: &[f64]| Table::new(v.len(), 1, v.to_vec());
    let y = t(&[0.0, 1.0, 2.0]);
    let perfect = r2_score(&y, &y).unwrap().mean;
    let mean_pred = r2_score(&y, &t(&[1.0, 1.0, 1.0])).unwrap().mean;
    let zero_pred = r2_score(&y, &t(&[0.0, 0.0, 0.0])).unwrap().mean;
    let hand = r2_score(&y, &t(&[0.0, 1.0, 1.0])).unwrap().mean;
    outcome(
        perfect == 1.0 && mean_pred == 0.0 && zero_pred == 0.0 && hand == 2.0 / 3.0,
        format!("perfect {perfect}, mean predictor {mean_pred}, zero predictor {zero_pred}, hand case {hand}"),
    )
}

fn desk_config(dir: &std::path::Path, workers: Option<usize>) -> RunConfig {
    let mut cfg = RunConfig::desk(dir.to_path_buf(), DESK_SEED);
    cfg.workers = workers;
    cfg
}

fn c8_desk(s: &RunSummary, cfg: &RunConfig) -> Outcome {
    let dnn = s.leaderboard.row(ModelKind::Dnn).unwrap();
    let dt = s.leaderboard.row(ModelKind::Dt).unwrap();
    let a = dnn.test_r2.per_target.iter().all(|r| *r >= 0.80);
    let b = dnn.test_r2.mean >= dt.test_r2.mean;

    // the unconstrained tree, whatever depth cross-validation preferred
    let ds = qsurrogate::surrogates::Dataset::load(&cfg.output_dir.join("dataset.qdata")).unwrap();
    let split = ds.split_ref().unwrap();
    let (xtr, ytr) = (ds.x.select(&split.train), ds.y.select(&split.train));
    let (xte, yte) = (ds.x.select(&split.test), ds.y.select(&split.test));
    let tree = fit(&Hyper::Dt(TreeParams { max_depth: None }), &xtr, &ytr, 0).unwrap();
    let tr = r2_score(&ytr, &tree.predict_table(&xtr).unwrap()).unwrap().mean;
    let te = r2_score(&yte, &tree.predict_table(&xte).unwrap()).unwrap().mean;
    let c = tr - te >= 0.05;
    let d = s.seconds <= 20.0 * 60.0;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        a && b && c && d,
        format!(
            "p = {}; DNN test R2 {:?} (a: {a}); DNN {:.4} vs DT {:.4} (b: {b}); unconstrained DT train {tr:.4} test {te:.4} (c: {c}); wall {:.0} s on {cores} core(s) (d: {d})",
            s.basis.p(),
            dnn.test_r2.per_target.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            dnn.test_r2.mean,
            dt.test_r2.mean,
            s.seconds
        ),
    )
}

fn c9_validation(s: &RunSummary, cfg: &RunConfig) -> Outcome {
    let r = &s.validation;
    let finite = r.samples.len() == 50
        && r.samples.iter().all(|x| x.y_pred.iter().chain(&x.y_true).all(|v| v.is_finite()))
        && r.samples.iter().all(|x| x.percent_error.iter().all(|e| e.is_some_and(f64::is_finite)));
    let csv = std::fs::read_to_string(cfg.output_dir.join("validation_generated_errors.csv")).unwrap();
    let recomputed = stats_from_error_csv(&csv);
    let mut exact = true;
    let mut medians = Vec::new();
    for (t, name) in r.targets.iter().enumerate() {
        let sm = r.summaries[t].as_ref().unwrap();
        let (m, p95, n) = recomputed[name];
        exact &= m == sm.median && p95 == sm.p95 && n == sm.n;
        medians.push(sm.median);
    }
    let within = medians.iter().all(|m| *m <= 25.0);
    outcome(
        finite && exact && within,
        format!(
            "n = {}; finite: {finite}; CSV recomputation exact: {exact}; medians {:?} % (p95 {:?} %)",
            r.samples.len(),
            medians.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
            r.summaries.iter().map(|s| format!("{:.2}", s.as_ref().unwrap().p95)).collect::<Vec<_>>()
        ),
    )
}

fn c10_record() -> Outcome {
    let record = std::env::var_os("QSURROGATE_FEMA_RECORD").map(PathBuf::from).filter(|p| p.is_file());
    if let (Some(dir), Some(path)) = (fema_dir(), record) {
        let suite = fema_suite(dir);
        let basis = svd_thin(&suite).unwrap().truncate(Truncation::Variance(0.99)).unwrap();
        let rec = qsurrogate::ingest::read_record_file(&path).unwrap();
        let (d, _, _) = reconstruction_diagnostics(&basis, &rec).unwrap();
        let target = [5.0, 4.0, 8.0];
        let ok = d.im_percent_deltas.iter().zip(target).all(|(x, t)| (x.abs() - t).abs() <= 5.0);
        return outcome(
            ok,
            format!("IM deltas PGA {:.2}%, Arias {:.2}%, lambda1 {:.2}% (targets 5/4/8 +/- 5)", d.im_percent_deltas[0], d.im_percent_deltas[1], d.im_percent_deltas[2]),
        );
    }
    let suite = bundled_suite();
    let full: SpectralBasis = svd_thin(&suite).unwrap();
    let mut worst_err = 0.0f64;
    let mut worst_delta = 0.0f64;
    for j in 0..suite.n_records() {
        let (d, _, _) = reconstruction_diagnostics(&full, &suite.record(j)).unwrap();
        worst_err = worst_err.max(d.relative_l2_error);
        worst_delta = d.im_percent_deltas.iter().fold(worst_delta, |m, x| m.max(x.abs()));
    }
    outcome(
        worst_err <= 1e-9 && worst_delta <= 1e-6,
        format!("substitute (no FEMA records): suite members reconstruct to {worst_err:.2e}; largest IM delta {worst_delta:.2e} %"),
    )
}

fn c11_determinism(first: &RunSummary, first_dir: &std::path::Path, workers: usize) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path(), Some(workers));
    let second = run(&cfg).unwrap();
    let same_hashes = first.manifest.outputs == second.manifest.outputs;
    let mut same_bytes = true;
    for (name, _) in &first.manifest.outputs {
        same_bytes &= std::fs::read(first_dir.join(name)).unwrap() == std::fs::read(dir.path().join(name)).unwrap();
    }
    outcome(
        same_hashes && same_bytes && first.manifest.config_sha256 == second.manifest.config_sha256,
        format!("{} artifacts compared, second run with {workers} worker(s): identical: {}", first.manifest.outputs.len(), same_hashes && same_bytes),
    )
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    let mut record = |n: usize, name: &str, o: Outcome| {
        let line = format!("criterion {n:>2} [{name}]: {} : {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        println!("{line}");
        lines.push((o.pass, line));
    };
    record(1, "SVD fidelity", c1_svd_fidelity());
    record(2, "explained variance", c2_explained_variance());
    record(3, "linear oracle", c3_linear_oracle());
    record(4, "hysteresis invariants", c4_hysteresis());
    record(5, "energy balance", c5_energy());
    record(6, "DNN gradient check", c6_gradient());
    record(7, "R2 metric", c7_r2());

    let dir = tempfile::tempdir().unwrap();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cfg = desk_config(dir.path(), Some(cores));
    let t0 = Instant::now();
    let summary = run(&cfg).unwrap();
    eprintln!("desk run took {:.1} s", t0.elapsed().as_secs_f64());
    record(8, "desk-scale end-to-end", c8_desk(&summary, &cfg));
    record(9, "validation protocol", c9_validation(&summary, &cfg));
    record(10, "record protocol", c10_record());
    let other = if cores > 1 { 1 } else { 2 };
    record(11, "determinism", c11_determinism(&summary, dir.path(), other));

    let failed: Vec<&String> = lines.iter().filter(|(p, _)| !p).map(|(_, l)| l).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n"));
}
