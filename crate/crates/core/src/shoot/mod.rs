//! Equilibria of a u_xx + f = 0 with Neumann boundary, found by shooting
//! from the Neumann line {(x,u,p) = (0,b,0)}, together with hyperbolicity
//! checks and Morse indices.
//!
//! The shooting flow is (u,p)' = (p, -f/a); a value b is an equilibrium
//! exactly when p(pi, b) = 0. Hyperbolicity and the Morse index come from
//! the tangent system along the orbit: the index equals
//! 1 + floor(nu(pi)/pi) where nu is the clockwise angle of the tangent
//! vector (u_b, p_b) started at (1, 0). An independent finite-difference
//! eigenvalue solver cross-checks every index.

pub mod eigen;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::expr::{CompiledExpr, Expr, NonDifferentiable, Var};
use crate::ivp::{unwind_angle, FieldError, Integrator, IvpError, OdeSolution};
use crate::X_END;

pub const DEFAULT_SCAN_POINTS: usize = 2048;
pub const DEFAULT_PROFILE_POINTS: usize = 2001;
pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
pub const DEFAULT_HYPERBOLICITY_MARGIN: f64 = 1e-4;
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e8;
/// Grid used for the eigenvalue-oracle gate inside the scan.
pub const ORACLE_GATE_M: usize = 401;
/// |p(pi, b)| at a refined root must drop below this times the scan scale.
pub const ROOT_TOL_FACTOR: f64 = 1e-10;

const SUSPICION_FACTOR: f64 = 1e-3;
const TANGENCY_FACTOR: f64 = 1e-5;
const MIN_ORACLE_M: usize = 201;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ShootError {
    #[error("orbit from b = {b:.6} blew up at x = {x:.4}")]
    BlowUp { b: f64, x: f64 },
    #[error("step size underflow on orbit from b = {b:.6} at x = {x:.4}")]
    StepUnderflow { b: f64, x: f64 },
    #[error("parabolicity violated on orbit from b = {b:.6}: a = {a:.3e}")]
    ParabolicityViolated { b: f64, a: f64 },
    #[error("domain failure on orbit from b = {b:.6}: {message}")]
    Domain { b: f64, message: String },
    #[error("suspected tangency of the shooting curve near b = {b:.6}: |p(pi,.)| dips to {min_abs:.3e} without a sign change")]
    TangencySuspected { b: f64, min_abs: f64 },
    #[error("scan window [{lo}, {hi}] inconsistent with dissipativity: {reason}")]
    WindowTooSmall { lo: f64, hi: f64, reason: String },
    #[error("dissipativity sign condition f(x,u,0)*u < 0 failed on the probe box for every B up to {max_b}")]
    NotDissipativeOnProbe { max_b: f64 },
    #[error("non-hyperbolic equilibrium at b = {b:.6}: {detail}")]
    NonHyperbolic { b: f64, detail: String },
    #[error("eigenvalue solve failed: {0}")]
    EigenSolveFailure(String),
    #[error("eigenvalue oracle counts {oracle} positive eigenvalues but the winding gives Morse index {morse} at b = {b:.6}")]
    OracleMismatch { b: f64, morse: usize, oracle: usize },
    #[error("coefficient not differentiable: {0}")]
    NotDifferentiable(#[from] NonDifferentiable),
    #[error("oracle grid m = {0} too coarse; need m >= {MIN_ORACLE_M}")]
    InvalidGrid(usize),
    #[error("root refinement failed near b = {b:.6}: {message}")]
    RootRefinement { b: f64, message: String },
}

fn map_ivp(b: f64, e: IvpError) -> ShootError {
    match e {
        IvpError::BlowUp { x, .. } => ShootError::BlowUp { b, x },
        IvpError::StepUnderflow { x } => ShootError::StepUnderflow { b, x },
        IvpError::Field {
            error: FieldError::Parabolicity { a },
            ..
        } => ShootError::ParabolicityViolated { b, a },
        IvpError::Field { x, error } => ShootError::Domain {
            b,
            message: format!("{error} at x = {x:.4}"),
        },
        other => ShootError::Domain {
            b,
            message: other.to_string(),
        },
    }
}

/// The full input contract: coefficient expressions plus scan and tolerance
/// settings.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    a: Expr,
    f: Expr,
    a_c: CompiledExpr,
    f_c: CompiledExpr,
    /// Parameter bindings used when the expressions were parsed (echoed
    /// into reports; the trees already carry the substituted constants).
    pub params: BTreeMap<String, f64>,
    pub window: (f64, f64),
    pub scan_points: usize,
    pub rtol: f64,
    pub atol: f64,
    pub hyperbolicity_margin: f64,
    pub profile_points: usize,
    pub blowup_bound: f64,
}

impl ProblemSpec {
    pub fn new(a: Expr, f: Expr) -> ProblemSpec {
        ProblemSpec {
            a_c: CompiledExpr::new(&a),
            f_c: CompiledExpr::new(&f),
            a,
            f,
            params: BTreeMap::new(),
            window: (-2.0, 2.0),
            scan_points: DEFAULT_SCAN_POINTS,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            hyperbolicity_margin: DEFAULT_HYPERBOLICITY_MARGIN,
            profile_points: DEFAULT_PROFILE_POINTS,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
        }
    }

    pub fn a(&self) -> &Expr {
        &self.a
    }

    pub fn f(&self) -> &Expr {
        &self.f
    }

    #[inline]
    pub fn a_at(&self, x: f64, u: f64, p: f64) -> f64 {
        self.a_c.eval(x, u, p)
    }

    #[inline]
    pub fn f_at(&self, x: f64, u: f64, p: f64) -> f64 {
        self.f_c.eval(x, u, p)
    }

    fn integrator(&self) -> Integrator {
        Integrator {
            rtol: self.rtol,
            atol: self.atol,
            max_norm: self.blowup_bound,
            max_steps: 1_000_000,
        }
    }

    /// Minimum of a over a sampled (x,u,p) box; the strict parabolicity
    /// probe used at load time.
    pub fn parabolicity_min(&self, u_max: f64, p_max: f64, n: usize) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..n {
            let x = X_END * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let u = -u_max + 2.0 * u_max * j as f64 / (n - 1) as f64;
                for k in 0..n {
                    let p = -p_max + 2.0 * p_max * k as f64 / (n - 1) as f64;
                    let v = self.a_at(x, u, p);
                    if !v.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    min = min.min(v);
                }
            }
        }
        min
    }
}

/// Endpoint data of one shot from the Neumann line.
#[derive(Debug, Clone)]
pub struct ShootingPoint {
    pub b: f64,
    pub u_end: f64,
    pub p_end: f64,
    pub solution: Arc<OdeSolution>,
}

/// One equilibrium with its dense profile and stability data.
#[derive(Debug, Clone)]
pub struct EquilibriumProfile {
    /// 1-based position in b-order.
    pub label: usize,
    pub b: f64,
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// u_xx = -f/a along the profile, exact on equilibria.
    pub uxx: Vec<f64>,
    pub solution: Arc<OdeSolution>,
    pub morse: usize,
    /// Clockwise angle nu(pi) of the tangent vector.
    pub angle_end: f64,
    /// Distance of nu(pi) to the nearest multiple of pi.
    pub hyperbolic_margin: f64,
}

impl EquilibriumProfile {
    pub fn u_end(&self) -> f64 {
        *self.u.last().unwrap()
    }

    pub fn u_at(&self, x: f64) -> f64 {
        self.solution.eval_component(x, 0)
    }

    pub fn p_at(&self, x: f64) -> f64 {
        self.solution.eval_component(x, 1)
    }

    pub fn amplitude(&self) -> f64 {
        self.u.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Shoot the equilibrium flow (u,p)' = (p, -f/a) from (b, 0) to x = pi.
pub fn shoot(prob: &ProblemSpec, b: f64) -> Result<ShootingPoint, ShootError> {
    let sol = integrate_shot(prob, b)?;
    let y = sol.end_state();
    Ok(ShootingPoint {
        b,
        u_end: y[0],
        p_end: y[1],
        solution: Arc::new(sol),
    })
}

fn integrate_shot(prob: &ProblemSpec, b: f64) -> Result<OdeSolution, ShootError> {
    prob.integrator()
        .integrate(
            |x, y, dy| {
                let a = prob.a_at(x, y[0], y[1]);
                if !(a > 0.0) || !a.is_finite() {
                    return Err(FieldError::Parabolicity { a });
                }
                let f = prob.f_at(x, y[0], y[1]);
                dy[0] = y[1];
                dy[1] = -f / a;
                Ok(())
            },
            &[b, 0.0],
            X_END,
        )
        .map_err(|e| map_ivp(b, e))
}

/// p(pi, b) for a sweep of b values; `None` where the orbit does not reach
/// x = pi. This is the raw shooting curve (also used by the demo UI).
pub fn scan_curve(prob: &ProblemSpec, n: usize) -> Result<Vec<(f64, Option<f64>)>, ShootError> {
    let (lo, hi) = prob.window;
    let bs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let shots: Vec<Result<f64, ShootError>> = bs
        .par_iter()
        .map(|&b| integrate_shot(prob, b).map(|s| s.end_state()[1]))
        .collect();
    let mut out = Vec::with_capacity(n);
    for (b, r) in bs.into_iter().zip(shots) {
        match r {
            Ok(p) => out.push((b, Some(p))),
            Err(e @ ShootError::ParabolicityViolated { .. }) => return Err(e),
            Err(_) => out.push((b, None)),
        }
    }
    Ok(out)
}

/// Scan outcome: the labeled equilibria plus bookkeeping of the sweep.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub equilibria: Vec<EquilibriumProfile>,
    pub warnings: Vec<String>,
    /// Count of scan shots that blew up before x = pi (reported, not an
    /// error: the problem class only guarantees global existence near the
    /// equilibria themselves).
    pub blown_up: usize,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    b: f64,
    p_end: f64,
}

fn shoot_p_end(prob: &ProblemSpec, b: f64) -> Result<Option<f64>, ShootError> {
    match integrate_shot(prob, b) {
        Ok(sol) => Ok(Some(sol.end_state()[1])),
        Err(e @ ShootError::ParabolicityViolated { .. }) => Err(e),
        Err(_) => Ok(None),
    }
}

/// Find all equilibria in the scan window: bracket every sign change of
/// p(pi, .) on a uniform b-grid, refine by bisection plus a secant polish,
/// chase the existence boundary where shots blow up, and flag suspected
/// tangencies. Each equilibrium is profiled and passed through the
/// hyperbolicity gate (winding margin and eigenvalue-oracle margin).
pub fn find_equilibria(prob: &ProblemSpec) -> Result<ScanOutcome, ShootError> {
    let (lo, hi) = prob.window;
    assert!(lo < hi, "empty scan window");
    let n = prob.scan_points.max(64);
    let mut warnings = Vec::new();

    let bs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let raw: Vec<Result<Option<f64>, ShootError>> =
        bs.par_iter().map(|&b| shoot_p_end(prob, b)).collect();

    let mut samples: Vec<Option<Sample>> = Vec::with_capacity(n);
    let mut blown_up = 0usize;
    for (b, r) in bs.iter().zip(raw) {
        match r? {
            Some(p_end) => samples.push(Some(Sample { b: *b, p_end })),
            None => {
                blown_up += 1;
                samples.push(None);
            }
        }
    }

    // refine good/blow-up boundaries so roots near the existence boundary
    // still get bracketed by evaluable shots
    let mut pts: Vec<Sample> = Vec::new();
    let gap_tol = (hi - lo) / (n as f64) * 1e-9;
    for i in 0..n {
        if let Some(s) = &samples[i] {
            pts.push(*s);
        } else {
            if i > 0 {
                if let Some(left) = &samples[i - 1] {
                    if let Some(s) = chase_boundary(prob, left.b, bs[i], gap_tol)? {
                        pts.push(s);
                    }
                }
            }
            if i + 1 < n {
                if let Some(right) = &samples[i + 1] {
                    if let Some(s) = chase_boundary(prob, right.b, bs[i], gap_tol)? {
                        pts.push(s);
                    }
                }
            }
        }
    }
    pts.sort_by(|a, b| a.b.partial_cmp(&b.b).unwrap());

    if pts.len() < 2 {
        return Err(ShootError::WindowTooSmall {
            lo,
            hi,
            reason: "almost every scan shot blew up before x = pi".into(),
        });
    }
    if blown_up > 0 {
        warnings.push(format!(
            "{blown_up} of {n} scan shots blew up before x = pi; window ends not directly checkable"
        ));
    }

    // scale for the root tolerance: the median |p(pi, .)| over evaluable
    // shots. The maximum would be dominated by near-blow-up spikes at the
    // existence boundary and would loosen the tolerance by orders of
    // magnitude.
    let mut mags: Vec<f64> = pts.iter().map(|s| s.p_end.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pscale = mags[mags.len() / 2].max(1.0);
    let root_tol = ROOT_TOL_FACTOR * pscale;

    // window-end sign check: dissipativity pushes orbits outward at the
    // window ends, so p(pi, b_max) > 0 > p(pi, b_min) when evaluable
    if blown_up == 0 {
        let first = pts.first().unwrap();
        let last = pts.last().unwrap();
        if first.p_end >= -root_tol || last.p_end <= root_tol {
            return Err(ShootError::WindowTooSmall {
                lo,
                hi,
                reason: format!(
                    "p(pi, {:.4}) = {:.3e} and p(pi, {:.4}) = {:.3e}; expected negative/positive",
                    first.b, first.p_end, last.b, last.p_end
                ),
            });
        }
    }

    // bracket sign changes
    let mut roots: Vec<(f64, f64)> = Vec::new(); // (b, |p|)
    for w in pts.windows(2) {
        let (s1, s2) = (&w[0], &w[1]);
        if s1.p_end == 0.0 {
            roots.push((s1.b, 0.0));
        } else if s1.p_end * s2.p_end < 0.0 {
            match refine_root(prob, (s1.b, s1.p_end), (s2.b, s2.p_end), root_tol)? {
                Some(b) => roots.push(b),
                None => {
                    // the sign flips across a non-existence gap: no orbit
                    // reaching x = pi lives there, hence no equilibrium
                    warnings.push(format!(
                        "sign change between b = {:.6} and b = {:.6} spans a blow-up gap; no root there",
                        s1.b, s2.b
                    ));
                }
            }
        }
    }
    if let Some(sl) = pts.last() {
        if sl.p_end == 0.0 {
            roots.push((sl.b, 0.0));
        }
    }

    // adaptive subdivision around suspicious |p| minima without sign change
    let suspicion = SUSPICION_FACTOR * pscale;
    for i in 1..pts.len() - 1 {
        let (pm, p0, pp) = (pts[i - 1].p_end, pts[i].p_end, pts[i + 1].p_end);
        if p0.abs() < suspicion
            && p0.abs() <= pm.abs()
            && p0.abs() <= pp.abs()
            && pm * p0 > 0.0
            && p0 * pp > 0.0
        {
            match probe_tangency(prob, pts[i - 1].b, pts[i + 1].b, root_tol)? {
                TangencyProbe::Root(b, p) => roots.push((b, p)),
                TangencyProbe::Touch { b, min_abs } => {
                    if min_abs < TANGENCY_FACTOR * pscale {
                        return Err(ShootError::TangencySuspected { b, min_abs });
                    }
                    warnings.push(format!(
                        "shooting curve dips to |p| = {min_abs:.3e} near b = {b:.6} without crossing"
                    ));
                }
            }
        }
    }

    roots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let sep_tol = 1e-9 * (hi - lo).max(1.0);
    roots.dedup_by(|a, b| (a.0 - b.0).abs() < sep_tol);

    let cell = (hi - lo) / n as f64;
    for r in &roots {
        if (r.0 - lo).abs() < 2.0 * cell || (hi - r.0).abs() < 2.0 * cell {
            warnings.push(format!(
                "equilibrium at b = {:.6} sits within two grid cells of the window end",
                r.0
            ));
        }
    }

    // profiles + hyperbolicity gate, in deterministic b-order
    let profiles: Vec<Result<EquilibriumProfile, ShootError>> = roots
        .par_iter()
        .map(|&(b, _)| build_profile(prob, b, root_tol))
        .collect();
    let mut equilibria = Vec::with_capacity(roots.len());
    for p in profiles {
        equilibria.push(p?);
    }
    for (i, eq) in equilibria.iter_mut().enumerate() {
        eq.label = i + 1;
    }

    if equilibria.len() % 2 == 0 {
        warnings.push(format!(
            "even number of equilibria ({}) found; dissipative scans normally yield an odd count",
            equilibria.len()
        ));
    }

    Ok(ScanOutcome {
        equilibria,
        warnings,
        blown_up,
    })
}

/// Bisect between an evaluable shot and a blown-up b toward the existence
/// boundary; returns the closest evaluable sample found.
fn chase_boundary(
    prob: &ProblemSpec,
    good_b: f64,
    bad_b: f64,
    gap_tol: f64,
) -> Result<Option<Sample>, ShootError> {
    let mut good = good_b;
    let mut bad = bad_b;
    let mut found = None;
    for _ in 0..40 {
        if (good - bad).abs() < gap_tol {
            break;
        }
        let mid = 0.5 * (good + bad);
        match shoot_p_end(prob, mid)? {
            Some(p_end) => {
                good = mid;
                found = Some(Sample { b: mid, p_end });
            }
            None => bad = mid,
        }
    }
    Ok(found)
}

/// Bisection with a secant polish on p(pi, .) over a sign-change bracket.
/// Returns `None` when the bracket turns out to span a blow-up gap.
fn refine_root(
    prob: &ProblemSpec,
    mut lo: (f64, f64),
    mut hi: (f64, f64),
    root_tol: f64,
) -> Result<Option<(f64, f64)>, ShootError> {
    debug_assert!(lo.1 * hi.1 < 0.0);
    let mut best = if lo.1.abs() < hi.1.abs() { lo } else { hi };
    let mut converged = false;
    for _ in 0..80 {
        if best.1.abs() <= root_tol
            || (hi.0 - lo.0).abs() <= 4.0 * f64::EPSILON * best.0.abs().max(1.0)
        {
            converged = true;
            break;
        }
        // secant proposal, guarded to the interior of the bracket
        let mut mid = (lo.0 * hi.1 - hi.0 * lo.1) / (hi.1 - lo.1);
        let width = hi.0 - lo.0;
        if !mid.is_finite() || mid <= lo.0 + 1e-3 * width || mid >= hi.0 - 1e-3 * width {
            mid = 0.5 * (lo.0 + hi.0);
        }
        let p = match shoot_p_end(prob, mid)? {
            Some(p) => p,
            None => return Ok(None),
        };
        if p.abs() < best.1.abs() {
            best = (mid, p);
        }
        if p == 0.0 {
            best = (mid, p);
            converged = true;
            break;
        }
        if p * lo.1 > 0.0 {
            lo = (mid, p);
        } else {
            hi = (mid, p);
        }
    }
    if !converged && best.1.abs() > root_tol {
        return Err(ShootError::RootRefinement {
            b: best.0,
            message: format!("stalled at |p(pi)| = {:.3e}", best.1.abs()),
        });
    }
    Ok(Some(best))
}

enum TangencyProbe {
    Root(f64, f64),
    Touch { b: f64, min_abs: f64 },
}

/// Subdivide around a local minimum of |p(pi, .)| up to depth 6 looking for
/// a hidden sign change.
fn probe_tangency(
    prob: &ProblemSpec,
    mut lo: f64,
    mut hi: f64,
    root_tol: f64,
) -> Result<TangencyProbe, ShootError> {
    let mut best = (0.5 * (lo + hi), f64::INFINITY);
    for _depth in 0..6 {
        let mut values: Vec<(f64, f64)> = Vec::with_capacity(9);
        for k in 0..9 {
            let b = lo + (hi - lo) * k as f64 / 8.0;
            if let Some(p) = shoot_p_end(prob, b)? {
                values.push((b, p));
            }
        }
        for w in values.windows(2) {
            if w[0].1 * w[1].1 < 0.0 {
                if let Some(root) = refine_root(prob, w[0], w[1], root_tol)? {
                    return Ok(TangencyProbe::Root(root.0, root.1));
                }
            }
        }
        let Some(&(bmin, pmin)) = values
            .iter()
            .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        else {
            break;
        };
        if pmin.abs() < best.1 {
            best = (bmin, pmin.abs());
        }
        let step = (hi - lo) / 8.0;
        lo = bmin - step;
        hi = bmin + step;
    }
    Ok(TangencyProbe::Touch {
        b: best.0,
        min_abs: best.1,
    })
}

fn build_profile(
    prob: &ProblemSpec,
    b: f64,
    root_tol: f64,
) -> Result<EquilibriumProfile, ShootError> {
    let sp = shoot(prob, b)?;
    if sp.p_end.abs() > 10.0 * root_tol {
        return Err(ShootError::RootRefinement {
            b,
            message: format!("refined root re-shoots to |p(pi)| = {:.3e}", sp.p_end.abs()),
        });
    }
    let m = prob.profile_points.max(3);
    let mut xs = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    let mut p = Vec::with_capacity(m);
    let mut uxx = Vec::with_capacity(m);
    let mut state = [0.0f64; 2];
    for i in 0..m {
        let x = X_END * i as f64 / (m - 1) as f64;
        sp.solution.eval_into(x, &mut state);
        let a = prob.a_at(x, state[0], state[1]);
        if !(a > 0.0) || !a.is_finite() {
            return Err(ShootError::ParabolicityViolated { b, a });
        }
        let f = prob.f_at(x, state[0], state[1]);
        xs.push(x);
        u.push(state[0]);
        p.push(state[1]);
        uxx.push(-f / a);
    }

    let mut eq = EquilibriumProfile {
        label: 0,
        b,
        xs,
        u,
        p,
        uxx,
        solution: sp.solution,
        morse: 0,
        angle_end: 0.0,
        hyperbolic_margin: 0.0,
    };
    let morse = morse_index(prob, &eq)?;
    eq.morse = morse.morse;
    eq.angle_end = morse.angle_end;
    eq.hyperbolic_margin = morse.margin;

    // independent gate: the discretized eigenvalue problem must agree on
    // hyperbolicity and on the index
    let eig = eigenvalue_oracle(prob, &eq, ORACLE_GATE_M)?;
    let positive = eig.iter().filter(|&&v| v > 0.0).count();
    if let Some(min_abs) = eig
        .iter()
        .map(|v| v.abs())
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    {
        if min_abs < prob.hyperbolicity_margin {
            return Err(ShootError::NonHyperbolic {
                b,
                detail: format!("oracle eigenvalue at distance {min_abs:.3e} from zero"),
            });
        }
    }
    if positive != eq.morse {
        return Err(ShootError::OracleMismatch {
            b,
            morse: eq.morse,
            oracle: positive,
        });
    }
    Ok(eq)
}

// ---------------------------------------------------------------------
// dissipativity probe
// ---------------------------------------------------------------------

/// Sampled box on which the growth conditions are probed.
#[derive(Debug, Clone)]
pub struct ProbeBox {
    pub u_max: f64,
    pub p_max: f64,
    pub nx: usize,
    pub nu: usize,
    pub np: usize,
}

impl Default for ProbeBox {
    fn default() -> Self {
        ProbeBox {
            u_max: 8.0,
            p_max: 16.0,
            nx: 13,
            nu: 13,
            np: 9,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DissipativityReport {
    /// Smallest power-of-two B with f(x,u,0)*u < 0 sampled on |u| in [B, 2B].
    pub bound: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub conditions: Vec<ConditionCheck>,
}

const MAX_DISSIPATIVITY_B: f64 = 1024.0;

/// Search for a window [-2B, 2B] outside of which the reaction pushes back
/// toward zero, and probe the remaining growth conditions on the box.
/// Any equilibrium is confined to |u| <= B once the sign condition holds
/// there, so the returned window covers them all with a factor-2 margin.
pub fn dissipativity_window(
    prob: &ProblemSpec,
    probe: &ProbeBox,
) -> Result<((f64, f64), DissipativityReport), ShootError> {
    let mut conditions = Vec::new();

    // condition: f(x,u,0) * u < 0 for B <= |u| <= 2B
    let mut bound = None;
    let mut b = 1.0f64;
    while b <= MAX_DISSIPATIVITY_B {
        if sign_condition_holds(prob, b) {
            bound = Some(b);
            break;
        }
        b *= 2.0;
    }
    match bound {
        Some(b) => conditions.push(ConditionCheck {
            name: "reaction_sign".into(),
            passed: true,
            detail: format!("f(x,u,0)*u < 0 sampled on {b} <= |u| <= {}", 2.0 * b),
        }),
        None => conditions.push(ConditionCheck {
            name: "reaction_sign".into(),
            passed: false,
            detail: format!("no B <= {MAX_DISSIPATIVITY_B} works"),
        }),
    }

    // condition: |f| grows slower than |p|^2
    let gamma = growth_exponent(prob, probe, |pr, x, u, p| pr.f_at(x, u, p).abs());
    conditions.push(ConditionCheck {
        name: "reaction_growth".into(),
        passed: gamma < 1.98,
        detail: format!("estimated growth exponent of |f| in p: {gamma:.3}"),
    });

    // condition: |a_x|/(1+|p|) + |a_u| + |a_p|(1+|p|) bounded in p
    let a_x = prob.a.differentiate(Var::X)?;
    let a_u = prob.a.differentiate(Var::U)?;
    let a_p = prob.a.differentiate(Var::P)?;
    let (cax, cau, cap) = (
        CompiledExpr::new(&a_x),
        CompiledExpr::new(&a_u),
        CompiledExpr::new(&a_p),
    );
    let lhs = move |_pr: &ProblemSpec, x: f64, u: f64, p: f64| {
        cax.eval(x, u, p).abs() / (1.0 + p.abs())
            + cau.eval(x, u, p).abs()
            + cap.eval(x, u, p).abs() * (1.0 + p.abs())
    };
    let growth_a = growth_exponent(prob, probe, &lhs);
    conditions.push(ConditionCheck {
        name: "diffusion_derivative_growth".into(),
        passed: growth_a < 0.05,
        detail: format!("estimated growth exponent of the a-derivative bound in p: {growth_a:.3}"),
    });

    // condition: 0 < eps <= a <= delta on the probe box
    let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
    for_each_box_sample(probe, |x, u, p| {
        let v = prob.a_at(x, u, p);
        amin = amin.min(v);
        amax = amax.max(v);
    });
    conditions.push(ConditionCheck {
        name: "parabolicity".into(),
        passed: amin > 0.0 && amax.is_finite(),
        detail: format!("a in [{amin:.4e}, {amax:.4e}] on the probe box"),
    });

    let report_window = bound.map(|b| (-2.0 * b, 2.0 * b));
    let report = DissipativityReport {
        bound,
        window: report_window,
        conditions,
    };
    match report_window {
        Some(w) => Ok((w, report)),
        None => Err(ShootError::NotDissipativeOnProbe {
            max_b: MAX_DISSIPATIVITY_B,
        }),
    }
}

fn sign_condition_holds(prob: &ProblemSpec, b: f64) -> bool {
    const NX: usize = 17;
    const NU: usize = 17;
    for i in 0..NX {
        let x = X_END * i as f64 / (NX - 1) as f64;
        for j in 0..NU {
            let mag = b + b * j as f64 / (NU - 1) as f64;
            for u in [mag, -mag] {
                let f = prob.f_at(x, u, 0.0);
                if !(f * u < 0.0) || !f.is_finite() {
                    return false;
                }
            }
        }
    }
    true
}

fn for_each_box_sample(probe: &ProbeBox, mut f: impl FnMut(f64, f64, f64)) {
    for i in 0..probe.nx {
        let x = X_END * i as f64 / (probe.nx - 1) as f64;
        for j in 0..probe.nu {
            let u = -probe.u_max + 2.0 * probe.u_max * j as f64 / (probe.nu - 1) as f64;
            for k in 0..probe.np {
                let p = -probe.p_max + 2.0 * probe.p_max * k as f64 / (probe.np - 1) as f64;
                f(x, u, p);
            }
        }
    }
}

/// Estimated growth exponent in p of a nonnegative quantity: the base-2
/// log-ratio between samples at |p| = P and |p| = 2P, maximized over the
/// box. Values near 0 mean bounded, 2 means quadratic growth.
fn growth_exponent(
    prob: &ProblemSpec,
    probe: &ProbeBox,
    q: impl Fn(&ProblemSpec, f64, f64, f64) -> f64,
) -> f64 {
    const FLOOR: f64 = 1e-9;
    let p_lo = probe.p_max.max(16.0);
    let p_hi = 2.0 * p_lo;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..probe.nx {
        let x = X_END * i as f64 / (probe.nx - 1) as f64;
        for j in 0..probe.nu {
            let u = -probe.u_max + 2.0 * probe.u_max * j as f64 / (probe.nu - 1) as f64;
            for sign in [1.0, -1.0] {
                let v_lo = q(prob, x, u, sign * p_lo).abs().max(FLOOR);
                let v_hi = q(prob, x, u, sign * p_hi).abs().max(FLOOR);
                worst = worst.max((v_hi / v_lo).log2());
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------
// linearization, Morse index, eigenvalue oracle
// ---------------------------------------------------------------------

/// Coefficients of the eigenvalue problem lambda u = a* u_xx + b* u + c* u_x
/// along one equilibrium, evaluable at any x.
pub struct LinearizationCoeffs {
    solution: Arc<OdeSolution>,
    a_c: CompiledExpr,
    f_c: CompiledExpr,
    a_u: CompiledExpr,
    a_p: CompiledExpr,
    f_u: CompiledExpr,
    f_p: CompiledExpr,
}

impl LinearizationCoeffs {
    /// (a*, b*, c*) at x.
    pub fn coeffs(&self, x: f64) -> Result<(f64, f64, f64), FieldError> {
        let mut state = [0.0f64; 2];
        self.solution.eval_into(x, &mut state);
        let (u, p) = (state[0], state[1]);
        let a = self.a_c.eval(x, u, p);
        if !(a > 0.0) || !a.is_finite() {
            return Err(FieldError::Parabolicity { a });
        }
        let uxx = -self.f_c.eval(x, u, p) / a;
        let b = self.a_u.eval(x, u, p) * uxx + self.f_u.eval(x, u, p);
        let c = self.a_p.eval(x, u, p) * uxx + self.f_p.eval(x, u, p);
        if b.is_finite() && c.is_finite() && uxx.is_finite() {
            Ok((a, b, c))
        } else {
            Err(FieldError::Domain(
                "non-finite linearization coefficient".into(),
            ))
        }
    }
}

/// Build the linearization coefficients a*, b*, c* along an equilibrium
/// from the symbolic derivatives of a and f, with u_xx = -f/a.
pub fn linearization(
    prob: &ProblemSpec,
    eq: &EquilibriumProfile,
) -> Result<LinearizationCoeffs, ShootError> {
    Ok(LinearizationCoeffs {
        solution: Arc::clone(&eq.solution),
        a_c: CompiledExpr::new(&prob.a),
        f_c: CompiledExpr::new(&prob.f),
        a_u: CompiledExpr::new(&prob.a.differentiate(Var::U)?),
        a_p: CompiledExpr::new(&prob.a.differentiate(Var::P)?),
        f_u: CompiledExpr::new(&prob.f.differentiate(Var::U)?),
        f_p: CompiledExpr::new(&prob.f.differentiate(Var::P)?),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MorseData {
    pub morse: usize,
    pub angle_end: f64,
    pub margin: f64,
}

/// Morse index from the clockwise winding of the tangent system
/// (u_b, p_b)' = (p_b, -(b* u_b + c* p_b)/a*), started at (1, 0):
/// index = 1 + floor(nu(pi)/pi). The margin is the distance of nu(pi) to
/// the grid pi*Z; a small margin means the shooting manifold meets the
/// Neumann line almost tangentially, i.e. a near-zero eigenvalue.
pub fn morse_index(prob: &ProblemSpec, eq: &EquilibriumProfile) -> Result<MorseData, ShootError> {
    let lin = linearization(prob, eq)?;
    let sol = tangent_solution(prob, &lin, eq.b)?;
    let trace = unwind_angle(
        |x| (sol.eval_component(x, 0), sol.eval_component(x, 1)),
        0.0,
        X_END,
    )
    .map_err(|e| map_ivp(eq.b, e))?;
    let angle_end = trace.end();
    let margin = trace.end_margin_to_pi_grid();
    if margin < prob.hyperbolicity_margin {
        return Err(ShootError::NonHyperbolic {
            b: eq.b,
            detail: format!("tangent angle nu(pi) = {angle_end:.8} within {margin:.3e} of pi*Z"),
        });
    }
    let floor = (angle_end / PI).floor() as i64;
    let morse = floor + 1;
    if morse < 0 {
        return Err(ShootError::NonHyperbolic {
            b: eq.b,
            detail: format!("winding nu(pi) = {angle_end:.8} below -pi/2, outside theory"),
        });
    }
    Ok(MorseData {
        morse: morse as usize,
        angle_end,
        margin,
    })
}

fn tangent_solution(
    prob: &ProblemSpec,
    lin: &LinearizationCoeffs,
    b: f64,
) -> Result<OdeSolution, ShootError> {
    prob.integrator()
        .integrate(
            |x, y, dy| {
                let (a, bb, cc) = lin.coeffs(x)?;
                dy[0] = y[1];
                dy[1] = -(bb * y[0] + cc * y[1]) / a;
                Ok(())
            },
            &[1.0, 0.0],
            X_END,
        )
        .map_err(|e| map_ivp(b, e))
}

/// nu(pi) of the scalar clockwise-angle equation for the eigenvalue problem
/// at spectral parameter `lambda`:
///
///     nu' = sin^2(nu) + ((b* - lambda)/a*) cos^2(nu) - (c*/a*) sin nu cos nu
///
/// By Sturm oscillation this is decreasing in lambda; its value at
/// lambda = 0 reproduces the tangent winding.
pub fn prufer_endpoint(
    prob: &ProblemSpec,
    lin: &LinearizationCoeffs,
    lambda: f64,
) -> Result<f64, ShootError> {
    let sol = prob
        .integrator()
        .integrate(
            |x, y, dy| {
                let (a, bb, cc) = lin.coeffs(x)?;
                let (s, c) = y[0].sin_cos();
                dy[0] = s * s + ((bb - lambda) / a) * c * c - (cc / a) * s * c;
                Ok(())
            },
            &[0.0],
            X_END,
        )
        .map_err(|e| map_ivp(f64::NAN, e))?;
    Ok(sol.end_state()[0])
}

fn fd_matrix(lin: &LinearizationCoeffs, m: usize) -> Result<eigen::Tridiag, ShootError> {
    let h = X_END / (m - 1) as f64;
    let mut t = eigen::Tridiag {
        diag: vec![0.0; m],
        sub: vec![0.0; m - 1],
        sup: vec![0.0; m - 1],
    };
    for i in 0..m {
        let x = i as f64 * h;
        let (a, b, c) = lin
            .coeffs(x)
            .map_err(|e| ShootError::EigenSolveFailure(e.to_string()))?;
        let s = a / (h * h);
        let d = c / (2.0 * h);
        t.diag[i] = -2.0 * s + b;
        if i == 0 {
            t.sup[0] = 2.0 * s; // ghost u_{-1} = u_1
        } else if i == m - 1 {
            t.sub[m - 2] = 2.0 * s; // ghost u_m = u_{m-2}
        } else {
            t.sub[i - 1] = s - d;
            t.sup[i] = s + d;
        }
    }
    Ok(t)
}

/// Leading eigenvalues (descending) of the m-point central-difference
/// discretization of the linearization, with ghost-node Neumann closure.
/// The independent oracle for Morse indices.
pub fn eigenvalue_oracle(
    prob: &ProblemSpec,
    eq: &EquilibriumProfile,
    m: usize,
) -> Result<Vec<f64>, ShootError> {
    if m < MIN_ORACLE_M {
        return Err(ShootError::InvalidGrid(m));
    }
    let lin = linearization(prob, eq)?;
    let t = fd_matrix(&lin, m)?;
    let (d, e, _) = eigen::symmetrize(&t).map_err(ShootError::EigenSolveFailure)?;
    let mut eig = eigen::eigenvalues_symtri(&d, &e).map_err(ShootError::EigenSolveFailure)?;
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig.truncate(10);
    Ok(eig)
}

/// Top `count` eigenpairs of the discretized linearization; eigenvectors
/// are mapped back through the symmetrizing scaling, normalized to unit
/// sup-norm. Used to seed unstable directions in the PDE verifier.
pub fn eigenpairs(
    prob: &ProblemSpec,
    eq: &EquilibriumProfile,
    m: usize,
    count: usize,
) -> Result<Vec<(f64, Vec<f64>)>, ShootError> {
    if m < MIN_ORACLE_M {
        return Err(ShootError::InvalidGrid(m));
    }
    let lin = linearization(prob, eq)?;
    let t = fd_matrix(&lin, m)?;
    let (d, e, delta) = eigen::symmetrize(&t).map_err(ShootError::EigenSolveFailure)?;
    let mut eig = eigen::eigenvalues_symtri(&d, &e).map_err(ShootError::EigenSolveFailure)?;
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut out = Vec::new();
    for &lambda in eig.iter().take(count) {
        let v = eigen::eigenvector_symtri(&d, &e, lambda).map_err(ShootError::EigenSolveFailure)?;
        let mut w: Vec<f64> = v.iter().zip(&delta).map(|(vi, di)| vi / di).collect();
        let sup = w.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        if sup > 0.0 {
            for wi in &mut w {
                *wi /= sup;
            }
        }
        // orient: largest-magnitude component positive
        let (mut imax, mut vmax) = (0usize, 0.0f64);
        for (i, &wv) in w.iter().enumerate() {
            if wv.abs() > vmax {
                vmax = wv.abs();
                imax = i;
            }
        }
        if w[imax] < 0.0 {
            for wi in &mut w {
                *wi = -*wi;
            }
        }
        out.push((lambda, w));
    }
    Ok(out)
}
