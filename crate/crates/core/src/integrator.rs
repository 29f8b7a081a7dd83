//! Nonlinear time-history analysis of shear buildings under base excitation.
//!
//! Constant-average-acceleration Newmark (γ = 1/2, β = 1/4) with full
//! Newton–Raphson on the step residual
//!
//! ```text
//! r = M·a + C·v + f_s(u) + M·ι·a_g
//! ```
//!
//! where `u`, `v`, `a` are floor motions relative to the ground. The
//! effective tangent is tridiagonal, so each Newton update is a Thomas solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::GroundMotionRecord;
use crate::intensity::G;
use crate::linalg;
use crate::structures::ShearModel;

const GAMMA: f64 = 0.5;
const BETA: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("Newton iteration did not converge at step {step} (residual {residual:e})")]
    NonConvergence { step: usize, residual: f64 },
    #[error("singular effective stiffness at step {step}")]
    Singular { step: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Absolute tolerance on ‖r‖∞, force units.
    pub tol_force: f64,
    /// Absolute tolerance on ‖Δu‖∞.
    pub tol_disp: f64,
    pub max_iter: usize,
    /// Substeps used for the single retry of a failed step.
    pub retry_substeps: usize,
    /// Initial relative displacement and velocity (verification only).
    pub initial: Option<(Vec<f64>, Vec<f64>)>,
    /// Each record interval is split into equal internal steps no longer
    /// than `T_min / steps_per_period`, with the ground motion interpolated
    /// linearly; output stays on the record grid. `0` disables this.
    pub steps_per_period: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_force: 1e-8,
            tol_disp: 1e-12,
            max_iter: 50,
            retry_substeps: 4,
            initial: None,
            steps_per_period: 100.0,
        }
    }
}

/// Step-major response arrays (`n_steps × n_dof`).
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseHistory {
    pub dt: f64,
    pub n_dof: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a_rel: Vec<f64>,
    pub a_total: Vec<f64>,
    /// Spring force of each story (hysteretic plus parallel elastic).
    pub story_force: Vec<f64>,
    /// Ground acceleration, m/s².
    pub ground: Vec<f64>,
    pub ground_id: String,
    pub masses: Vec<f64>,
    pub dashpots: Vec<f64>,
}

impl ResponseHistory {
    pub fn n_steps(&self) -> usize {
        self.ground.len()
    }

    #[inline]
    fn at(&self, arr: &[f64], step: usize, dof: usize) -> f64 {
        arr[step * self.n_dof + dof]
    }

    pub fn u_at(&self, step: usize, dof: usize) -> f64 {
        self.at(&self.u, step, dof)
    }

    /// Drift of story `s` at `step`.
    pub fn drift(&self, step: usize, s: usize) -> f64 {
        let below = if s == 0 { 0.0 } else { self.u_at(step, s - 1) };
        self.u_at(step, s) - below
    }

    /// Peak absolute drift of every story.
    pub fn peak_drifts(&self) -> Vec<f64> {
        (0..self.n_dof)
            .map(|s| (0..self.n_steps()).fold(0.0_f64, |m, k| m.max(self.drift(k, s).abs())))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.v, &self.a_rel, &self.a_total, &self.story_force]
            .iter()
            .all(|a| a.iter().all(|x| x.is_finite()))
    }
}

/// Peak roof displacement and peak floor (total) acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edp {
    pub peak_roof_disp: f64,
    /// m/s²
    pub peak_floor_accel: f64,
}

impl Edp {
    pub fn peak_floor_accel_g(&self) -> f64 {
        self.peak_floor_accel / G
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.peak_roof_disp, self.peak_floor_accel]
    }
}

pub fn extract_edps(h: &ResponseHistory) -> Edp {
    let top = h.n_dof - 1;
    let peak_roof_disp = (0..h.n_steps()).fold(0.0_f64, |m, k| m.max(h.u_at(k, top).abs()));
    let peak_floor_accel = h.a_total.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    Edp {
        peak_roof_disp,
        peak_floor_accel,
    }
}

/// Solver working state for one model.
struct Stepper {
    model: ShearModel,
    n: usize,
    m: Vec<f64>,
    c: Vec<f64>,
    kp: Vec<f64>,
    // scratch
    f: Vec<f64>,
    kt: Vec<f64>,
    r: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    u_new: Vec<f64>,
    v_new: Vec<f64>,
    a_new: Vec<f64>,
    du: Vec<f64>,
}

struct StepResult {
    converged: bool,
    residual: f64,
}

impl Stepper {
    fn new(model: &ShearModel) -> Self {
        let mut model = model.clone();
        model.reset();
        let n = model.n_dof();
        Self {
            m: model.masses(),
            c: model.stories.iter().map(|s| s.dashpot_c).collect(),
            kp: model.stories.iter().map(|s| s.parallel_k).collect(),
            model,
            n,
            f: vec![0.0; n],
            kt: vec![0.0; n],
            r: vec![0.0; n],
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
            u_new: vec![0.0; n],
            v_new: vec![0.0; n],
            a_new: vec![0.0; n],
            du: vec![0.0; n],
        }
    }

    /// Story spring forces and tangents at displacement `u`.
    fn trial_forces(&mut self, u: &[f64]) {
        for s in 0..self.n {
            let d = u[s] - if s == 0 { 0.0 } else { u[s - 1] };
            let (f, kt) = self.model.stories[s].spring.set_trial(d);
            self.f[s] = f + self.kp[s] * d;
            self.kt[s] = kt + self.kp[s];
        }
    }

    fn commit(&mut self) {
        for s in &mut self.model.stories {
            s.spring.commit();
        }
    }

    fn revert(&mut self) {
        for s in &mut self.model.stories {
            s.spring.revert();
        }
    }

    /// `r = M·a + C·v + f_s + M·a_g` for the current `self.f`.
    fn residual(&mut self, a: &[f64], v: &[f64], ag: f64) -> f64 {
        let n = self.n;
        let mut norm = 0.0_f64;
        for i in 0..n {
            let v_below = if i == 0 { 0.0 } else { v[i - 1] };
            let mut ri = self.m[i] * (a[i] + ag) + self.f[i] + self.c[i] * (v[i] - v_below);
            if i + 1 < n {
                ri -= self.f[i + 1] + self.c[i + 1] * (v[i + 1] - v[i]);
            }
            self.r[i] = ri;
            norm = norm.max(ri.abs());
        }
        norm
    }

    /// Initial acceleration from equilibrium at the current state.
    fn initial_accel(&mut self, u: &[f64], v: &[f64], ag: f64, a: &mut [f64]) {
        self.trial_forces(u);
        self.commit();
        let zeros = vec![0.0; self.n];
        self.residual(&zeros, v, ag);
        for i in 0..self.n {
            a[i] = -self.r[i] / self.m[i];
        }
    }

    /// Advances `(u, v, a)` by `dt` to ground acceleration `ag_next`.
    /// On failure the springs are reverted and the state is left untouched.
    fn step(
        &mut self,
        dt: f64,
        ag_next: f64,
        opts: &SolverOptions,
        u: &mut [f64],
        v: &mut [f64],
        a: &mut [f64],
    ) -> StepResult {
        let n = self.n;
        let c0 = 1.0 / (BETA * dt * dt);
        let c1 = GAMMA / (BETA * dt);
        let mut u_new = std::mem::take(&mut self.u_new);
        let mut v_new = std::mem::take(&mut self.v_new);
        let mut a_new = std::mem::take(&mut self.a_new);
        let mut du = std::mem::take(&mut self.du);
        u_new.copy_from_slice(u);
        let mut residual = f64::INFINITY;
        let mut converged = false;

        let kin = |u_new: &[f64], v_new: &mut [f64], a_new: &mut [f64]| {
            for i in 0..n {
                a_new[i] = c0 * (u_new[i] - u[i]) - v[i] / (BETA * dt) - (0.5 / BETA - 1.0) * a[i];
                v_new[i] = v[i] + dt * ((1.0 - GAMMA) * a[i] + GAMMA * a_new[i]);
            }
        };

        for _ in 0..=opts.max_iter {
            self.trial_forces(&u_new);
            kin(&u_new, &mut v_new, &mut a_new);
            residual = self.residual(&a_new, &v_new, ag_next);
            if residual <= opts.tol_force {
                break;
            }
            for i in 0..n {
                let kt_above = if i + 1 < n { self.kt[i + 1] } else { 0.0 };
                let c_above = if i + 1 < n { self.c[i + 1] } else { 0.0 };
                self.diag[i] = self.kt[i] + kt_above + c1 * (self.c[i] + c_above) + c0 * self.m[i];
                if i + 1 < n {
                    let off = -(self.kt[i + 1] + c1 * self.c[i + 1]);
                    self.lower[i] = off;
                    self.upper[i] = off;
                }
            }
            for (d, r) in du.iter_mut().zip(&self.r) {
                *d = -r;
            }
            if linalg::solve_tridiagonal(&self.lower, &self.diag, &self.upper, &mut du).is_none() {
                break;
            }
            let mut du_norm = 0.0_f64;
            for i in 0..n {
                u_new[i] += du[i];
                du_norm = du_norm.max(du[i].abs());
            }
            if du_norm <= opts.tol_disp {
                self.trial_forces(&u_new);
                kin(&u_new, &mut v_new, &mut a_new);
                residual = self.residual(&a_new, &v_new, ag_next);
                converged = true;
                break;
            }
        }

        let converged = converged || residual <= opts.tol_force;
        if converged {
            self.commit();
            u.copy_from_slice(&u_new);
            v.copy_from_slice(&v_new);
            a.copy_from_slice(&a_new);
        } else {
            self.revert();
        }
        self.u_new = u_new;
        self.v_new = v_new;
        self.a_new = a_new;
        self.du = du;
        StepResult { converged, residual }
    }
}

/// Solves the model under a ground record given in g.
pub fn newmark_solve(
    model: &ShearModel,
    ground: &GroundMotionRecord,
    opts: &SolverOptions,
) -> Result<ResponseHistory, IntegratorError> {
    let ag: Vec<f64> = ground.accel.iter().map(|a| a * G).collect();
    solve_accel(model, ground.dt, &ag, &ground.id, opts)
}

/// Solves the model under a ground acceleration already in m/s².
pub fn solve_accel(
    model: &ShearModel,
    dt: f64,
    ground: &[f64],
    ground_id: &str,
    opts: &SolverOptions,
) -> Result<ResponseHistory, IntegratorError> {
    if !(dt > 0.0) || ground.is_empty() {
        return Err(IntegratorError::InvalidInput("need dt > 0 and a non-empty ground record".into()));
    }
    let mut st = Stepper::new(model);
    let n = st.n;
    let steps = ground.len();

    let (mut u, mut v) = match &opts.initial {
        Some((u0, v0)) if u0.len() == n && v0.len() == n => (u0.clone(), v0.clone()),
        Some(_) => return Err(IntegratorError::InvalidInput("initial conditions have wrong length".into())),
        None => (vec![0.0; n], vec![0.0; n]),
    };
    let mut a = vec![0.0; n];
    st.initial_accel(&u, &v, ground[0], &mut a);

    let mut h = ResponseHistory {
        dt,
        n_dof: n,
        u: Vec::with_capacity(steps * n),
        v: Vec::with_capacity(steps * n),
        a_rel: Vec::with_capacity(steps * n),
        a_total: Vec::with_capacity(steps * n),
        story_force: Vec::with_capacity(steps * n),
        ground: ground.to_vec(),
        ground_id: ground_id.to_string(),
        masses: st.m.clone(),
        dashpots: st.c.clone(),
    };
    let record = |h: &mut ResponseHistory, st: &Stepper, u: &[f64], v: &[f64], a: &[f64], ag: f64| {
        h.u.extend_from_slice(u);
        h.v.extend_from_slice(v);
        h.a_rel.extend_from_slice(a);
        h.a_total.extend(a.iter().map(|x| x + ag));
        h.story_force.extend_from_slice(&st.f);
    };
    record(&mut h, &st, &u, &v, &a, ground[0]);

    let n_int = internal_steps(model, dt, opts.steps_per_period);
    let h_dt = dt / n_int as f64;
    for k in 1..steps {
        for i in 1..=n_int {
            let frac = |j: usize| ground[k - 1] + (ground[k] - ground[k - 1]) * j as f64 / (n_int * subs_of(opts)) as f64;
            let res = st.step(h_dt, frac(i * subs_of(opts)), opts, &mut u, &mut v, &mut a);
            if res.converged {
                continue;
            }
            // one retry of this interval with finer steps
            let subs = subs_of(opts);
            let sub_dt = h_dt / subs as f64;
            let (mut us, mut vs, mut as_) = (u.clone(), v.clone(), a.clone());
            for j in 1..=subs {
                let r = st.step(sub_dt, frac((i - 1) * subs + j), opts, &mut us, &mut vs, &mut as_);
                if !r.converged {
                    return Err(IntegratorError::NonConvergence {
                        step: k,
                        residual: r.residual,
                    });
                }
            }
            u = us;
            v = vs;
            a = as_;
        }
        record(&mut h, &st, &u, &v, &a, ground[k]);
    }
    Ok(h)
}

fn subs_of(opts: &SolverOptions) -> usize {
    opts.retry_substeps.max(1)
}

/// Internal steps per record interval for `opts.steps_per_period`.
fn internal_steps(model: &ShearModel, dt: f64, steps_per_period: f64) -> usize {
    if !(steps_per_period > 0.0) {
        return 1;
    }
    match model.natural_periods() {
        Ok(p) => {
            let t_min = p.last().copied().unwrap_or(f64::INFINITY);
            ((dt * steps_per_period / t_min).ceil() as usize).max(1)
        }
        Err(_) => 1,
    }
}

/// Cumulative energy terms at the end of a response history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub input: f64,
    pub kinetic: f64,
    pub viscous: f64,
    pub strain: f64,
    /// `input − (Δkinetic + viscous + Δstrain)`.
    pub residual: f64,
}

/// Per-step cumulative energies, all starting from the initial stored energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySeries {
    pub input: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub viscous: Vec<f64>,
    /// Initial elastic energy plus spring work (recoverable and hysteretic).
    pub strain: Vec<f64>,
}

pub fn energy_series(h: &ResponseHistory) -> EnergySeries {
    let n = h.n_dof;
    let steps = h.n_steps();
    let dt = h.dt;
    let kinetic_at = |k: usize| -> f64 {
        (0..n).map(|i| 0.5 * h.masses[i] * h.v[k * n + i].powi(2)).sum()
    };
    let rel_vel = |k: usize, s: usize| -> f64 {
        h.v[k * n + s] - if s == 0 { 0.0 } else { h.v[k * n + s - 1] }
    };
    // input power: −Σ m_i a_g v_i
    let input_power = |k: usize| -> f64 { -(0..n).map(|i| h.masses[i] * h.ground[k] * h.v[k * n + i]).sum::<f64>() };
    let viscous_power = |k: usize| -> f64 { (0..n).map(|s| h.dashpots[s] * rel_vel(k, s).powi(2)).sum() };

    let strain0: f64 = (0..n).map(|s| 0.5 * h.story_force[s] * h.drift(0, s)).sum();
    let mut out = EnergySeries {
        input: Vec::with_capacity(steps),
        kinetic: Vec::with_capacity(steps),
        viscous: Vec::with_capacity(steps),
        strain: Vec::with_capacity(steps),
    };
    let (mut e_in, mut e_visc, mut e_str) = (0.0, 0.0, strain0);
    out.input.push(e_in);
    out.kinetic.push(kinetic_at(0));
    out.viscous.push(e_visc);
    out.strain.push(e_str);
    for k in 1..steps {
        e_in += 0.5 * dt * (input_power(k - 1) + input_power(k));
        e_visc += 0.5 * dt * (viscous_power(k - 1) + viscous_power(k));
        for s in 0..n {
            let f0 = h.story_force[(k - 1) * n + s];
            let f1 = h.story_force[k * n + s];
            e_str += 0.5 * (f0 + f1) * (h.drift(k, s) - h.drift(k - 1, s));
        }
        out.input.push(e_in);
        out.kinetic.push(kinetic_at(k));
        out.viscous.push(e_visc);
        out.strain.push(e_str);
    }
    out
}

pub fn energy_balance(h: &ResponseHistory) -> EnergyBalance {
    let s = energy_series(h);
    let last = s.input.len() - 1;
    let d_kin = s.kinetic[last] - s.kinetic[0];
    let d_str = s.strain[last] - s.strain[0];
    EnergyBalance {
        input: s.input[last],
        kinetic: s.kinetic[last],
        viscous: s.viscous[last],
        strain: s.strain[last],
        residual: s.input[last] - (d_kin + s.viscous[last] + d_str),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::{BilinearMaterial, StoryAssembly};
    use std::f64::consts::PI;

    fn sine_ground(dt: f64, n: usize, amp_g: f64, freq: f64) -> GroundMotionRecord {
        let accel = (0..n).map(|k| amp_g * (2.0 * PI * freq * k as f64 * dt).sin()).collect();
        GroundMotionRecord::new("sine", dt, accel, Default::default()).unwrap()
    }

    #[test]
    fn zero_ground_gives_zero_response() {
        let model = ShearModel::uniform_elastic(3, 40.0, 0.05).unwrap();
        let g = GroundMotionRecord::new("z", 0.02, vec![0.0; 200], Default::default()).unwrap();
        let h = newmark_solve(&model, &g, &SolverOptions::default()).unwrap();
        assert!(h.u.iter().chain(&h.v).chain(&h.a_total).all(|&x| x == 0.0));
    }

    #[test]
    fn edp_extraction() {
        let h = ResponseHistory {
            dt: 0.02,
            n_dof: 1,
            u: vec![0.0, -2.0, 1.0],
            v: vec![0.0; 3],
            a_rel: vec![0.0; 3],
            a_total: vec![0.5, -0.1, 0.2],
            story_force: vec![0.0; 3],
            ground: vec![0.0; 3],
            ground_id: "x".into(),
            masses: vec![1.0],
            dashpots: vec![0.0],
        };
        let e = extract_edps(&h);
        assert_eq!(e.peak_roof_disp, 2.0);
        assert_eq!(e.peak_floor_accel, 0.5);
    }

    #[test]
    fn at_rest_floor_accel_equals_ground() {
        let g = sine_ground(0.01, 300, 0.4, 1.0);
        let ground: Vec<f64> = g.accel.iter().map(|a| a * G).collect();
        let h = ResponseHistory {
            dt: 0.01,
            n_dof: 1,
            u: vec![0.0; 300],
            v: vec![0.0; 300],
            a_rel: vec![0.0; 300],
            a_total: ground.clone(),
            story_force: vec![0.0; 300],
            ground,
            ground_id: "sine".into(),
            masses: vec![1.0],
            dashpots: vec![0.0],
        };
        let pga = g.accel.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        assert_eq!(extract_edps(&h).peak_floor_accel, pga * G);
    }

    #[test]
    fn free_vibration_matches_cosine() {
        let k = 4.0 * PI * PI;
        let model = ShearModel::uniform_elastic(1, k, 0.0).unwrap();
        let dt = 1.0 / 200.0;
        let u0 = 0.1;
        let g = GroundMotionRecord::new("free", dt, vec![0.0; 2001], Default::default()).unwrap();
        let opts = SolverOptions {
            initial: Some((vec![u0], vec![0.0])),
            ..Default::default()
        };
        let h = newmark_solve(&model, &g, &opts).unwrap();
        // ten cycles: every peak keeps the amplitude and the mean period is exact
        // to within the scheme's (ω·dt)²/12 elongation
        let u = &h.u;
        let peaks: Vec<usize> = (1..u.len() - 1)
            .filter(|&k| u[k] > u[k - 1] && u[k] >= u[k + 1] && u[k] > 0.0)
            .collect();
        assert_eq!(peaks.len(), 9);
        for &k in &peaks {
            assert!((u[k] - u0).abs() <= 0.002 * u0);
        }
        let period = (peaks[8] - peaks[0]) as f64 * dt / 8.0;
        assert!((period - 1.0).abs() <= 0.002);
        for step in 0..=200 {
            let exact = u0 * (2.0 * PI * step as f64 * dt).cos();
            assert!((u[step] - exact).abs() <= 0.002 * u0, "step {step}");
        }
        let s = energy_series(&h);
        let e0 = s.kinetic[0] + s.strain[0];
        for k in 0..h.n_steps() {
            assert!(((s.kinetic[k] + s.strain[k]) - e0).abs() <= 0.005 * e0);
            assert_eq!(s.input[k], 0.0);
        }
    }

    #[test]
    fn yielding_story_force_is_capped() {
        let spring = BilinearMaterial::new(40.0, 0.28, 0.0).unwrap();
        let model = ShearModel::new(vec![StoryAssembly::new(spring, 0.05, 1.0).unwrap()]).unwrap();
        let g = sine_ground(0.02, 1500, 0.6, 0.8);
        let h = newmark_solve(&model, &g, &SolverOptions::default()).unwrap();
        assert!(h.story_force.iter().all(|f| f.abs() <= 0.28 + 1e-9));
        assert!(h.peak_drifts()[0] > 0.28 / 40.0);
    }

    #[test]
    fn deterministic_and_causal() {
        let model = ShearModel::from_spec(&crate::structures::ModelSpec {
            stories: vec![
                crate::structures::StorySpec { e: 40.0, fy: 0.28, xi: 0.05, b: 0.02 };
                3
            ],
        })
        .unwrap();
        let g = sine_ground(0.02, 1000, 0.5, 1.3);
        let h1 = newmark_solve(&model, &g, &SolverOptions::default()).unwrap();
        let h2 = newmark_solve(&model, &g, &SolverOptions::default()).unwrap();
        assert_eq!(h1, h2);
        let mut short = g.clone();
        short.accel.truncate(400);
        let hs = newmark_solve(&model, &short, &SolverOptions::default()).unwrap();
        assert_eq!(&h1.u[..400 * 3], hs.u.as_slice());
    }

    #[test]
    fn rigid_limit_stores_no_energy() {
        let model = ShearModel::uniform_elastic(1, 1e9, 0.05).unwrap();
        let g = sine_ground(0.005, 2000, 0.3, 1.5);
        let h = newmark_solve(&model, &g, &SolverOptions::default()).unwrap();
        let e = energy_balance(&h);
        let scale = 0.5 * (0.3 * G / (2.0 * PI * 1.5)).powi(2);
        assert!(e.kinetic.abs() < 1e-6 * scale);
        assert!(e.strain.abs() < 1e-6 * scale);
    }
}
