//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use qsurrogate::surrogates::dnn::Mlp;
use qsurrogate::surrogates::Table;

/// Central-difference check of `Mlp::loss_and_grad`.
///
/// Parameters whose ±h perturbation flips the sign of any hidden
/// pre-activation are skipped, since the loss is not differentiable across
/// a ReLU kink. Returns `(max relative error, checked, skipped)`.
pub fn fd_gradient_check(net: &Mlp, x: &Table, y: &Table, h: f64) -> (f64, usize, usize) {
    let rows: Vec<usize> = (0..x.rows).collect();
    let (_, grad) = net.loss_and_grad(x, y, &rows);
    let pattern = |n: &Mlp| -> Vec<bool> {
        (0..x.rows).flat_map(|r| n.preactivations(x.row(r)).into_iter().map(|z| z > 0.0)).collect()
    };
    let base = pattern(net);
    let mut worst = 0.0f64;
    let (mut checked, mut skipped) = (0, 0);
    let mut probe = net.clone();
    for k in 0..net.params.len() {
        let orig = net.params[k];
        probe.params[k] = orig + h;
        let same_plus = pattern(&probe) == base;
        let lp = probe.loss(x, y, &rows);
        probe.params[k] = orig - h;
        let same_minus = pattern(&probe) == base;
        let lm = probe.loss(x, y, &rows);
        probe.params[k] = orig;
        if !(same_plus && same_minus) {
            skipped += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        let a = grad[k];
        let scale = a.abs().max(fd.abs());
        if scale < 1e-7 {
            // Both vanish (dead unit or zero input); compare absolutely.
            worst = worst.max((a - fd).abs());
        } else {
            worst = worst.max((a - fd).abs() / scale);
        }
        checked += 1;
    }
    (worst, checked, skipped)
}

/// Moves hidden pre-activations away from zero by shifting biases, so that
/// small parameter perturbations cannot flip any ReLU on the given batch.
pub fn nudge_off_kinks(net: &mut Mlp, x: &Table, margin: f64) {
    let sizes = net.sizes.clone();
    let n_hidden = sizes.len() - 2;
    let mut off = 0;
    for l in 0..n_hidden {
        let (nin, nout) = (sizes[l], sizes[l + 1]);
        let bias_off = off + nin * nout;
        for o in 0..nout {
            let start: usize = sizes[1..=l].iter().sum::<usize>();
            for _ in 0..100 {
                let closest = (0..x.rows)
                    .map(|r| net.preactivations(x.row(r))[start + o])
                    .fold(f64::INFINITY, |m, z| if z.abs() < m.abs() { z } else { m });
                if closest.abs() >= margin {
                    break;
                }
                net.params[bias_off + o] += margin;
            }
        }
        off = bias_off + nout;
    }
}

pub fn r2_simple(y: &[f64], yhat: &[f64]) -> f64 {
    let n = y.len() as f64;
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n
    };
    let res: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();
    1.0 - var(&res) / var(y)
}

/// Piecewise-exact response of a linear SDOF oscillator (unit mass) to a
/// ground acceleration that is linear between samples. Returns
/// `(relative displacement, relative velocity)` at every sample.
pub fn piecewise_exact_sdof(omega: f64, zeta: f64, dt: f64, ag: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = omega * omega;
    let sq = (1.0 - zeta * zeta).sqrt();
    let wd = omega * sq;
    let e = (-zeta * omega * dt).exp();
    let (s, co) = ((wd * dt).sin(), (wd * dt).cos());
    let a = e * (zeta / sq * s + co);
    let b = e * s / wd;
    let c = (2.0 * zeta / (omega * dt)
        + e * (((1.0 - 2.0 * zeta * zeta) / (wd * dt) - zeta / sq) * s - (1.0 + 2.0 * zeta / (omega * dt)) * co))
        / k;
    let d = (1.0 - 2.0 * zeta / (omega * dt) + e * ((2.0 * zeta * zeta - 1.0) / (wd * dt) * s + 2.0 * zeta / (omega * dt) * co))
        / k;
    let a1 = -e * omega / sq * s;
    let b1 = e * (co - zeta / sq * s);
    let c1 = (-1.0 / dt + e * ((omega / sq + zeta / (dt * sq)) * s + co / dt)) / k;
    let d1 = (1.0 - e * (zeta / sq * s + co)) / (k * dt);
    let mut u = vec![0.0; ag.len()];
    let mut v = vec![0.0; ag.len()];
    for i in 0..ag.len() - 1 {
        let (p0, p1) = (-ag[i], -ag[i + 1]);
        u[i + 1] = a * u[i] + b * v[i] + c * p0 + d * p1;
        v[i + 1] = a1 * u[i] + b1 * v[i] + c1 * p0 + d1 * p1;
    }
    (u, v)
}

/// Peak |u| and peak |total acceleration| of the piecewise-exact SDOF.
pub fn sdof_peaks(omega: f64, zeta: f64, dt: f64, ag: &[f64]) -> (f64, f64) {
    let (u, v) = piecewise_exact_sdof(omega, zeta, dt, ag);
    let c = 2.0 * zeta * omega;
    let k = omega * omega;
    let pu = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pa = u.iter().zip(&v).fold(0.0f64, |m, (x, y)| m.max((c * y + k * x).abs()));
    (pu, pa)
}

/// Modal superposition for a uniform linear shear building with unit
/// masses, story stiffness `k` and story dashpots `c` (so damping is
/// stiffness-proportional and classical). Each mode is integrated with the
/// piecewise-exact oracle. Returns `(peak roof displacement, peak floor
/// total acceleration)`.
pub fn modal_superposition_peaks(n: usize, k: f64, c: f64, dt: f64, ag: &[f64]) -> (f64, f64) {
    use nalgebra::{DMatrix, SymmetricEigen};
    let mut km = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        km[(i, i)] = if i + 1 < n { 2.0 * k } else { k };
        if i + 1 < n {
            km[(i, i + 1)] = -k;
            km[(i + 1, i)] = -k;
        }
    }
    let eig = SymmetricEigen::new(km.clone());
    let steps = ag.len();
    let mut u = vec![vec![0.0; steps]; n];
    let mut v = vec![vec![0.0; steps]; n];
    for mode in 0..n {
        let lam = eig.eigenvalues[mode];
        let phi = eig.eigenvectors.column(mode);
        let gamma: f64 = phi.iter().sum::<f64>();
        let omega = lam.sqrt();
        let zeta = (c / k) * omega / 2.0;
        let (q, qd) = piecewise_exact_sdof(omega, zeta, dt, ag);
        for i in 0..n {
            for t in 0..steps {
                u[i][t] += phi[i] * gamma * q[t];
                v[i][t] += phi[i] * gamma * qd[t];
            }
        }
    }
    let roof = u[n - 1].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut peak_a = 0.0f64;
    for t in 0..steps {
        for i in 0..n {
            // total acceleration = −(C v + K u)_i for unit mass
            let mut f = 0.0;
            for j in 0..n {
                f += km[(i, j)] * (u[j][t] + c / k * v[j][t]);
            }
            peak_a = peak_a.max(f.abs());
        }
    }
    (roof, peak_a)
}

/// The bundled synthetic records, each on a 0.02 s grid at its own length.
pub fn bundled_records_at(dt: f64) -> Vec<qsurrogate::ingest::GroundMotionRecord> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .expect("bundled records present")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "at2"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let r = qsurrogate::ingest::read_record_file(p).unwrap();
            qsurrogate::ingest::resample(&r, dt).unwrap()
        })
        .collect()
}

/// Worst `|committed force| − fy` over `paths` random-walk displacement
/// paths of a `b = 0` spring with `k = 40, fy = 0.28`.
pub fn random_walk_force_excess(paths: usize, steps: usize, seed: u64) -> f64 {
    use qsurrogate::seeds::{stream_rng, Namespace};
    use qsurrogate::structures::BilinearMaterial;
    use rand::Rng;
    let mut worst = f64::NEG_INFINITY;
    for p in 0..paths {
        let mut rng = stream_rng(seed, Namespace::Test, p as u64);
        let mut m = BilinearMaterial::new(40.0, 0.28, 0.0).unwrap();
        let uy = m.yield_disp();
        let mut u = 0.0;
        for _ in 0..steps {
            u += rng.gen_range(-1.5..1.5) * uy;
            m.set_trial(u);
            m.commit();
            worst = worst.max(m.committed().force.abs() - m.yield_force());
        }
    }
    worst
}

/// `∮ f du` by the trapezoid rule over a displacement path that returns to
/// its start, with the spring committed at every point.
pub fn cycle_work(k: f64, fy: f64, b: f64, path: &[f64]) -> f64 {
    let mut m = qsurrogate::structures::BilinearMaterial::new(k, fy, b).unwrap();
    let mut work = 0.0;
    let (mut u0, mut f0) = (0.0, 0.0);
    for &u in path.iter().chain(std::iter::once(&0.0)) {
        // fine substeps keep the trapezoid rule exact on each linear branch
        for s in 1..=20 {
            let ui = u0 + (u - u0) * s as f64 / 20.0;
            let (f, _) = m.set_trial(ui);
            m.commit();
            work += 0.5 * (f + f0) * (ui - (u0 + (u - u0) * (s - 1) as f64 / 20.0));
            f0 = f;
        }
        u0 = u;
    }
    work
}

/// Type-7 percentile of already sorted values, written independently of the
/// library.
pub fn type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-target `(median, p95, count)` recomputed from an error CSV.
pub fn stats_from_error_csv(csv: &str) -> std::collections::BTreeMap<String, (f64, f64, usize)> {
    let mut by_target: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 7, "bad row {line}");
        let entry = by_target.entry(f[2].to_string()).or_default();
        if f[6] == "0" {
            entry.push(f[5].parse().unwrap());
        }
    }
    by_target
        .into_iter()
        .map(|(t, mut v)| {
            v.sort_by(|a, b| a.total_cmp(b));
            let n = v.len();
            (t, (type7(&v, 0.5), type7(&v, 0.95), n))
        })
        .collect()
}
