//! Independent verification by direct PDE simulation: method-of-lines
//! evolution of u_t = a(x,u,u_x) u_xx + f(x,u,u_x) with ghost-node Neumann
//! closure, zero-number timelines for pairs of solutions, and empirical
//! confirmation of predicted heteroclinic connections.
//!
//! Trajectories are classified against Newton-refined steady states of the
//! discretized equation. The refinement matters: a continuum equilibrium
//! profile interpolated to the grid sits O(h^2) away from the grid's own
//! steady state, which is farther than the classification tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::shoot::{eigenpairs, EquilibriumProfile, ProblemSpec, ShootError};
use crate::X_END;

pub const MIN_GRID: usize = 101;
pub const DEFAULT_GRID: usize = 201;
/// Parabolic step-size bound factor: dt <= 0.4 dx^2 / max(a).
pub const STEP_FACTOR: f64 = 0.4;
pub const MATCH_TOL: f64 = 1e-5;
pub const DWELL: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("parabolicity violated at t = {t:.4}: a = {a:.3e}")]
    ParabolicityViolated { t: f64, a: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("trajectory reached t = {t_end} without classifying against any equilibrium")]
    NoConvergence { t_end: f64 },
    #[error("equilibrium {label} has no unstable directions to seed")]
    NoUnstableDirections { label: usize },
    #[error("steady-state refinement failed for equilibrium {label}: {detail}")]
    NewtonFailed { label: usize, detail: String },
    #[error("grid m = {0} too coarse; need m >= {MIN_GRID}")]
    InvalidGrid(usize),
    #[error(transparent)]
    Shoot(#[from] ShootError),
}

/// Solution values on the uniform grid at one time.
#[derive(Debug, Clone)]
pub struct GridState {
    pub u: Vec<f64>,
    pub t: f64,
}

impl GridState {
    pub fn new(u: Vec<f64>, t: f64) -> Self {
        GridState { u, t }
    }
}

pub fn grid_xs(m: usize) -> Vec<f64> {
    (0..m).map(|i| X_END * i as f64 / (m - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    Converged { label: usize, at_t: f64 },
    MaxTime,
    BlowUp { t: f64 },
}

/// Snapshots of one simulated trajectory plus its terminal classification.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub m: usize,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub terminal: Terminal,
}

impl Trajectory {
    pub fn converged_label(&self) -> Result<usize, VerifyError> {
        match self.terminal {
            Terminal::Converged { label, .. } => Ok(label),
            _ => Err(VerifyError::NoConvergence {
                t_end: self.snapshots.last().map(|s| s.0).unwrap_or(0.0),
            }),
        }
    }
}

/// A steady state of the discretized equation, used as classification
/// target.
#[derive(Debug, Clone)]
pub struct DiscreteEquilibrium {
    pub label: usize,
    pub morse: usize,
    pub u: Vec<f64>,
}

struct MolProblem<'a> {
    prob: &'a ProblemSpec,
    m: usize,
    h: f64,
    xs: Vec<f64>,
}

impl<'a> MolProblem<'a> {
    fn new(prob: &'a ProblemSpec, m: usize) -> Result<Self, VerifyError> {
        if m < MIN_GRID {
            return Err(VerifyError::InvalidGrid(m));
        }
        Ok(MolProblem {
            prob,
            m,
            h: X_END / (m - 1) as f64,
            xs: grid_xs(m),
        })
    }

    /// du/dt into `out`; returns max(a) over the grid for the step bound.
    fn rhs(&self, u: &[f64], out: &mut [f64], t: f64) -> Result<f64, VerifyError> {
        let m = self.m;
        let h = self.h;
        let h2 = h * h;
        let mut max_a = 0.0f64;
        for i in 0..m {
            let (d2, du) = if i == 0 {
                ((2.0 * u[1] - 2.0 * u[0]) / h2, 0.0)
            } else if i == m - 1 {
                ((2.0 * u[m - 2] - 2.0 * u[m - 1]) / h2, 0.0)
            } else {
                (
                    (u[i - 1] - 2.0 * u[i] + u[i + 1]) / h2,
                    (u[i + 1] - u[i - 1]) / (2.0 * h),
                )
            };
            let a = self.prob.a_at(self.xs[i], u[i], du);
            if !(a > 0.0) || !a.is_finite() {
                return Err(VerifyError::ParabolicityViolated { t, a });
            }
            max_a = max_a.max(a);
            out[i] = a * d2 + self.prob.f_at(self.xs[i], u[i], du);
        }
        Ok(max_a)
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub t_end: f64,
    /// Number of equally spaced snapshot times (including t_end).
    pub saves: usize,
    pub match_tol: f64,
    /// Consecutive in-tolerance snapshots required to classify.
    pub dwell: usize,
    pub blowup_bound: f64,
    /// Stop stepping once classified.
    pub stop_on_convergence: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            t_end: 200.0,
            saves: 400,
            match_tol: MATCH_TOL,
            dwell: DWELL,
            blowup_bound: 1e8,
            stop_on_convergence: true,
        }
    }
}

/// Explicit method-of-lines evolution with the parabolic step bound
/// dt <= 0.4 dx^2 / max(a), recomputed every step. Snapshots are taken at
/// equally spaced times (linear interpolation between steps) so that two
/// runs share their snapshot times exactly; the terminal state is
/// classified against `targets` by sup-norm proximity with a dwell
/// condition. Blow-up is recorded in the terminal classification.
pub fn evolve(
    prob: &ProblemSpec,
    u0: GridState,
    targets: &[DiscreteEquilibrium],
    opts: &EvolveOptions,
) -> Result<Trajectory, VerifyError> {
    let m = u0.u.len();
    let mol = MolProblem::new(prob, m)?;
    let save_times: Vec<f64> = (1..=opts.saves)
        .map(|k| opts.t_end * k as f64 / opts.saves as f64)
        .collect();

    let mut u = u0.u;
    let mut t = 0.0f64;
    let mut du = vec![0.0; m];
    let mut snapshots: Vec<(f64, Vec<f64>)> = vec![(0.0, u.clone())];
    let mut next_save = 0usize;
    let mut dwell_run: Vec<usize> = vec![0; targets.len()];
    let mut terminal = Terminal::MaxTime;

    'time: while t < opts.t_end {
        let max_a = mol.rhs(&u, &mut du, t)?;
        let mut dt = STEP_FACTOR * mol.h * mol.h / max_a;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(VerifyError::ParabolicityViolated { t, a: max_a });
        }
        if t + dt > opts.t_end {
            dt = opts.t_end - t;
        }
        let t_new = t + dt;

        // snapshots at exact times via linear interpolation in t
        while next_save < save_times.len() && save_times[next_save] <= t_new + 1e-14 {
            let ts = save_times[next_save];
            let w = ((ts - t) / dt).clamp(0.0, 1.0);
            let snap: Vec<f64> = u.iter().zip(&du).map(|(ui, di)| ui + w * dt * di).collect();
            let mut classified = None;
            for (k, target) in targets.iter().enumerate() {
                let dist = sup_dist(&snap, &target.u);
                if dist < opts.match_tol {
                    dwell_run[k] += 1;
                    if dwell_run[k] >= opts.dwell {
                        classified = Some((target.label, ts));
                    }
                } else {
                    dwell_run[k] = 0;
                }
            }
            snapshots.push((ts, snap));
            next_save += 1;
            if let Some((label, at_t)) = classified {
                terminal = Terminal::Converged { label, at_t };
                if opts.stop_on_convergence {
                    break 'time;
                }
            }
        }

        for (ui, di) in u.iter_mut().zip(&du) {
            *ui += dt * di;
        }
        t = t_new;
        let norm = u.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        if !norm.is_finite() || norm > opts.blowup_bound {
            terminal = Terminal::BlowUp { t };
            break;
        }
    }

    Ok(Trajectory {
        m,
        snapshots,
        terminal,
    })
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |mx, (x, y)| mx.max((x - y).abs()))
}

/// Strict-sign-change count of nodal values; -1 when the vector is
/// numerically zero.
pub fn nodal_zero_count(v: &[f64]) -> i64 {
    let scale = v.iter().fold(0.0f64, |mx, x| mx.max(x.abs()));
    if scale == 0.0 {
        return -1;
    }
    let floor = 1e-12 * scale;
    let mut count = 0i64;
    let mut prev: Option<f64> = None;
    for &x in v {
        if x.abs() <= floor {
            continue;
        }
        if let Some(p) = prev {
            if p.signum() != x.signum() {
                count += 1;
            }
        }
        prev = Some(x);
    }
    count
}

/// Zero number of the difference of two trajectories at every shared
/// snapshot time.
pub fn zero_timeline(a: &Trajectory, b: &Trajectory) -> Result<Vec<(f64, i64)>, VerifyError> {
    if a.m != b.m {
        return Err(VerifyError::GridMismatch(format!(
            "grids {} vs {}",
            a.m, b.m
        )));
    }
    let n = a.snapshots.len().min(b.snapshots.len());
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (ta, ua) = &a.snapshots[k];
        let (tb, ub) = &b.snapshots[k];
        if (ta - tb).abs() > 1e-9 * (1.0 + ta.abs()) {
            return Err(VerifyError::GridMismatch(format!(
                "snapshot times {ta} vs {tb}"
            )));
        }
        let diff: Vec<f64> = ua.iter().zip(ub).map(|(x, y)| x - y).collect();
        out.push((*ta, nodal_zero_count(&diff)));
    }
    Ok(out)
}

/// Interpolate the continuum equilibria onto the grid and polish each to
/// a steady state of the discretized equation by damped Newton with a
/// tridiagonal Jacobian.
pub fn discretize_equilibria(
    prob: &ProblemSpec,
    equilibria: &[EquilibriumProfile],
    m: usize,
) -> Result<Vec<DiscreteEquilibrium>, VerifyError> {
    let mol = MolProblem::new(prob, m)?;
    let a_u = prob
        .a()
        .differentiate(crate::expr::Var::U)
        .map_err(ShootError::from)?;
    let a_p = prob
        .a()
        .differentiate(crate::expr::Var::P)
        .map_err(ShootError::from)?;
    let f_u = prob
        .f()
        .differentiate(crate::expr::Var::U)
        .map_err(ShootError::from)?;
    let f_p = prob
        .f()
        .differentiate(crate::expr::Var::P)
        .map_err(ShootError::from)?;
    let derivs = [
        crate::expr::CompiledExpr::new(&a_u),
        crate::expr::CompiledExpr::new(&a_p),
        crate::expr::CompiledExpr::new(&f_u),
        crate::expr::CompiledExpr::new(&f_p),
    ];

    equilibria
        .iter()
        .map(|eq| {
            let u0: Vec<f64> = mol.xs.iter().map(|&x| eq.u_at(x)).collect();
            let u = newton_refine(&mol, &derivs, eq, u0)?;
            Ok(DiscreteEquilibrium {
                label: eq.label,
                morse: eq.morse,
                u,
            })
        })
        .collect()
}

fn newton_refine(
    mol: &MolProblem<'_>,
    derivs: &[crate::expr::CompiledExpr; 4],
    eq: &EquilibriumProfile,
    mut u: Vec<f64>,
) -> Result<Vec<f64>, VerifyError> {
    let m = mol.m;
    let h = mol.h;
    let h2 = h * h;
    let start = u.clone();
    let amp = eq.amplitude().max(1.0);
    let tol = 1e-11 * amp;
    let mut residual = vec![0.0; m];
    let mut res_norm = f64::INFINITY;

    for _iter in 0..30 {
        mol.rhs(&u, &mut residual, 0.0)?;
        res_norm = residual.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        if res_norm <= tol {
            break;
        }

        // tridiagonal Jacobian of the steady-state residual
        let mut sub = vec![0.0; m - 1];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m - 1];
        for i in 0..m {
            let x = mol.xs[i];
            let (d2, du) = if i == 0 {
                ((2.0 * u[1] - 2.0 * u[0]) / h2, 0.0)
            } else if i == m - 1 {
                ((2.0 * u[m - 2] - 2.0 * u[m - 1]) / h2, 0.0)
            } else {
                (
                    (u[i - 1] - 2.0 * u[i] + u[i + 1]) / h2,
                    (u[i + 1] - u[i - 1]) / (2.0 * h),
                )
            };
            let a = mol.prob.a_at(x, u[i], du);
            let (au, ap, fu, fp) = (
                derivs[0].eval(x, u[i], du),
                derivs[1].eval(x, u[i], du),
                derivs[2].eval(x, u[i], du),
                derivs[3].eval(x, u[i], du),
            );
            diag[i] = au * d2 - 2.0 * a / h2 + fu;
            if i == 0 {
                sup[0] = 2.0 * a / h2;
            } else if i == m - 1 {
                sub[m - 2] = 2.0 * a / h2;
            } else {
                let drift = (ap * d2 + fp) / (2.0 * h);
                sub[i - 1] = a / h2 - drift;
                sup[i] = a / h2 + drift;
            }
        }

        let rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
        let Some(delta) = thomas_solve(&sub, &diag, &sup, &rhs) else {
            return Err(VerifyError::NewtonFailed {
                label: eq.label,
                detail: "singular Jacobian".into(),
            });
        };

        // damped update
        let mut step = 1.0f64;
        let mut improved = false;
        for _ in 0..6 {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(ui, di)| ui + step * di).collect();
            let mut trial_res = vec![0.0; m];
            if mol.rhs(&trial, &mut trial_res, 0.0).is_ok() {
                let trial_norm = trial_res.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
                if trial_norm < res_norm {
                    u = trial;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }

    if res_norm > 1e3 * tol {
        return Err(VerifyError::NewtonFailed {
            label: eq.label,
            detail: format!("residual stalled at {res_norm:.3e}"),
        });
    }
    if sup_dist(&u, &start) > 0.05 * amp {
        return Err(VerifyError::NewtonFailed {
            label: eq.label,
            detail: "refined state drifted away from the profile".into(),
        });
    }
    Ok(u)
}

/// Thomas algorithm; diagonally dominant systems only (the steady-state
/// Jacobian is, because -2a/h^2 dominates the drift entries).
fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0f64; n];
    let mut d = vec![0.0f64; n];
    if diag[0] == 0.0 {
        return None;
    }
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i - 1] * c[i - 1];
        if denom == 0.0 {
            return None;
        }
        if i < n - 1 {
            c[i] = sup[i] / denom;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Outcome of a heteroclinic confirmation run. An empty `confirmed` is
/// NOT-OBSERVED, which is not a refutation: basins can require finer
/// seeding than the sampled one.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConfirmOutcome {
    /// Seed description witnessing convergence to the queried target.
    pub confirmed: Option<String>,
    /// Every convergence observed across the seeds: (seed, terminal label).
    pub observed: Vec<(String, usize)>,
    /// Seeds that did not classify: (seed, disposition).
    pub unresolved: Vec<(String, String)>,
}

impl ConfirmOutcome {
    pub fn is_confirmed(&self) -> bool {
        self.confirmed.is_some()
    }
}

/// Launch trajectories from `source` perturbed along its discretized
/// unstable eigenvectors (and `k_random` random unstable-subspace
/// combinations) and report whether any of them converges to `target`.
#[allow(clippy::too_many_arguments)]
pub fn confirm_heteroclinic(
    prob: &ProblemSpec,
    equilibria: &[EquilibriumProfile],
    targets: &[DiscreteEquilibrium],
    source: usize,
    target: usize,
    eps: f64,
    k_random: usize,
    seed: u64,
    opts: &EvolveOptions,
) -> Result<ConfirmOutcome, VerifyError> {
    let src_eq = &equilibria[source - 1];
    let src_disc = &targets[source - 1];
    let morse = src_eq.morse;
    if morse == 0 {
        return Err(VerifyError::NoUnstableDirections { label: source });
    }
    let m = src_disc.u.len();
    let pairs = eigenpairs(prob, src_eq, m, morse)?;
    let amp = src_eq.amplitude().max(1.0);

    let mut seeds: Vec<(String, Vec<f64>)> = Vec::new();
    for (k, (_, phi)) in pairs.iter().enumerate() {
        for sign in [1.0f64, -1.0] {
            let u: Vec<f64> = src_disc
                .u
                .iter()
                .zip(phi)
                .map(|(ui, pi)| ui + sign * eps * amp * pi)
                .collect();
            seeds.push((format!("{:+}*eps*phi_{k}", sign as i64), u));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..k_random {
        let coeffs: Vec<f64> = (0..morse).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = coeffs.iter().fold(0.0f64, |mx, c| mx.max(c.abs())).max(1e-9);
        let u: Vec<f64> = src_disc
            .u
            .iter()
            .enumerate()
            .map(|(i, ui)| {
                let mix: f64 = pairs
                    .iter()
                    .zip(&coeffs)
                    .map(|((_, phi), c)| c / scale * phi[i])
                    .sum();
                ui + eps * amp * mix
            })
            .collect();
        seeds.push((format!("random_mix_{r}"), u));
    }

    let runs: Vec<(String, Result<Trajectory, VerifyError>)> = seeds
        .into_par_iter()
        .map(|(name, u)| {
            let traj = evolve(prob, GridState::new(u, 0.0), targets, opts);
            (name, traj)
        })
        .collect();

    let mut outcome = ConfirmOutcome {
        confirmed: None,
        observed: Vec::new(),
        unresolved: Vec::new(),
    };
    for (name, run) in runs {
        match run {
            Ok(traj) => match traj.terminal {
                Terminal::Converged { label, .. } => {
                    if label == target && outcome.confirmed.is_none() {
                        outcome.confirmed = Some(name.clone());
                    }
                    outcome.observed.push((name, label));
                }
                Terminal::MaxTime => outcome
                    .unresolved
                    .push((name, "unclassified at t_end".to_string())),
                Terminal::BlowUp { t } => outcome
                    .unresolved
                    .push((name, format!("blew up at t = {t:.2}"))),
            },
            Err(e) => outcome.unresolved.push((name, format!("failed: {e}"))),
        }
    }
    Ok(outcome)
}

/// Export snapshots as long-format CSV rows (t, x, u).
pub fn snapshots_csv(traj: &Trajectory) -> String {
    let xs = grid_xs(traj.m);
    let mut out = String::from("t,x,u\n");
    for (t, u) in &traj.snapshots {
        for (x, v) in xs.iter().zip(u) {
            out.push_str(&format!("{t},{x},{v}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests;
