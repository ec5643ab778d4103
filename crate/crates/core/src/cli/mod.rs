//! Problem-file ingestion, pipeline orchestration, and artifact emission.
//!
//! A problem file is flat key-value text (see `docs/problem-format.md`):
//!
//! ```text
//! # quasilinear cubic at lambda = 2
//! a = 1
//! f = lambda*u*(1-u^2)
//! param lambda = 2
//! window = -4 4        # optional, defaults to the dissipativity window
//! ```
//!
//! `run` drives the stage chain equilibria < permutation < graph < verify
//! (later stages imply the earlier ones) and writes report.json,
//! attractor.dot and profiles.csv into the output directory. Reruns with
//! the same configuration and seed are byte-identical.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::parse;
use crate::shoot::{
    dissipativity_window, eigenvalue_oracle, find_equilibria, DissipativityReport, ProbeBox,
    ProblemSpec, ShootError,
};
use crate::sturm::{
    build_permutation, compare_crosscheck, connection_graph, permutation_crosscheck,
    wolfrum_counterexamples, zero_matrix, SturmError,
};
use crate::verify::{
    confirm_heteroclinic, discretize_equilibria, evolve, grid_xs, zero_timeline, EvolveOptions,
    GridState, VerifyError, DEFAULT_GRID,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Problem {
        path: String,
        line: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("verification contradiction: {0}")]
    VerifyContradiction(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Shoot(#[from] ShootError),
    #[error(transparent)]
    Sturm(#[from] SturmError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Fixed exit-code taxonomy (documented in docs/cli.md): pipelines branch
/// on the failure class.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Shoot(ShootError::NonHyperbolic { .. }) => 3,
        CliError::Shoot(ShootError::TangencySuspected { .. }) => 6,
        CliError::Shoot(ShootError::NotDissipativeOnProbe { .. }) => 4,
        CliError::Shoot(ShootError::OracleMismatch { .. }) => 5,
        CliError::Sturm(SturmError::CrosscheckMismatch(_)) => 5,
        CliError::Sturm(SturmError::EndpointCollision { .. }) => 3,
        CliError::Sturm(SturmError::MultipleZeroSuspected { .. }) => 3,
        CliError::VerifyContradiction(_) => 5,
        CliError::Problem { .. } | CliError::Validation(_) | CliError::Io(_) => 2,
        _ => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Equilibria,
    Permutation,
    Graph,
    Verify,
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equilibria" => Ok(Stage::Equilibria),
            "permutation" => Ok(Stage::Permutation),
            "graph" => Ok(Stage::Graph),
            "verify" => Ok(Stage::Verify),
            other => Err(format!(
                "unknown stage `{other}` (expected equilibria|permutation|graph|verify)"
            )),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Equilibria => "equilibria",
            Stage::Permutation => "permutation",
            Stage::Graph => "graph",
            Stage::Verify => "verify",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: PathBuf,
    pub stage: Stage,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Verifier / oracle grid override.
    pub grid_m: Option<usize>,
    pub scan_points: Option<usize>,
    pub rtol: Option<f64>,
}

impl RunConfig {
    pub fn new(problem: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            problem: problem.into(),
            stage: Stage::Graph,
            out_dir: out_dir.into(),
            seed: 0,
            grid_m: None,
            scan_points: None,
            rtol: None,
        }
    }
}

/// Parsed problem file: the spec plus the echo data for the report.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub spec: ProblemSpec,
    /// Window came from the file (true) or is left to the dissipativity
    /// probe (false).
    pub explicit_window: bool,
    pub grid_m: usize,
    pub a_source: String,
    pub f_source: String,
}

pub fn load_problem(path: &Path) -> Result<LoadedProblem, CliError> {
    let text = std::fs::read_to_string(path)?;
    let loc = |line: usize, message: String| CliError::Problem {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut a_src: Option<(usize, String)> = None;
    let mut f_src: Option<(usize, String)> = None;
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    let mut numeric: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut window: Option<(f64, f64)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(loc(lineno, format!("expected `key = value`, got `{line}`")));
        };
        let key = key.trim();
        let value = value.trim().to_string();
        match key {
            "a" => a_src = Some((lineno, value)),
            "f" => f_src = Some((lineno, value)),
            "window" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(loc(lineno, "window takes two numbers".into()));
                }
                let lo: f64 = parts[0]
                    .parse()
                    .map_err(|_| loc(lineno, format!("bad number `{}`", parts[0])))?;
                let hi: f64 = parts[1]
                    .parse()
                    .map_err(|_| loc(lineno, format!("bad number `{}`", parts[1])))?;
                if !(lo < hi) {
                    return Err(loc(lineno, "window needs lo < hi".into()));
                }
                window = Some((lo, hi));
            }
            _ if key.starts_with("param ") || key.starts_with("param\t") => {
                let name = key["param".len()..].trim();
                if name.is_empty() {
                    return Err(loc(lineno, "param needs a name".into()));
                }
                let v: f64 = value
                    .parse()
                    .map_err(|_| loc(lineno, format!("bad number `{value}`")))?;
                params.insert(name.to_string(), v);
            }
            "scan_points" | "rtol" | "atol" | "hyperbolicity_margin" | "profile_points"
            | "blowup_bound" | "grid_m" => {
                numeric.insert(key.to_string(), (lineno, value));
            }
            other => {
                return Err(loc(lineno, format!("unknown key `{other}`")));
            }
        }
    }

    let (a_line, a_text) = a_src.ok_or_else(|| loc(0, "missing `a = ...`".into()))?;
    let (f_line, f_text) = f_src.ok_or_else(|| loc(0, "missing `f = ...`".into()))?;

    let a = parse(&a_text, &params).map_err(|e| loc(a_line, format!("in a: {e}")))?;
    let f = parse(&f_text, &params).map_err(|e| loc(f_line, format!("in f: {e}")))?;

    let mut spec = ProblemSpec::new(a, f);
    spec.params = params;
    let mut grid_m = DEFAULT_GRID;
    for (key, (lineno, value)) in &numeric {
        let bad = |_| loc(*lineno, format!("bad number `{value}`"));
        match key.as_str() {
            "scan_points" => spec.scan_points = value.parse().map_err(bad)?,
            "rtol" => spec.rtol = value.parse().map_err(bad)?,
            "atol" => spec.atol = value.parse().map_err(bad)?,
            "hyperbolicity_margin" => spec.hyperbolicity_margin = value.parse().map_err(bad)?,
            "profile_points" => spec.profile_points = value.parse().map_err(bad)?,
            "blowup_bound" => spec.blowup_bound = value.parse().map_err(bad)?,
            "grid_m" => grid_m = value.parse().map_err(bad)?,
            _ => unreachable!(),
        }
    }
    if spec.rtol <= 0.0 || spec.atol <= 0.0 || spec.hyperbolicity_margin <= 0.0 {
        return Err(CliError::Validation("tolerances must be positive".into()));
    }

    // strict parabolicity probe over a sampled box
    let amin = spec.parabolicity_min(4.0, 8.0, 9);
    if !(amin > 0.0) {
        return Err(CliError::Validation(format!(
            "parabolicity probe failed: min a = {amin:.4e} on the sampled box"
        )));
    }

    let explicit_window = window.is_some();
    if let Some(w) = window {
        spec.window = w;
    }
    Ok(LoadedProblem {
        spec,
        explicit_window,
        grid_m,
        a_source: a_text,
        f_source: f_text,
    })
}

// ---------------------------------------------------------------------
// report structures (field order fixes the serialized layout)
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ProblemEcho {
    pub a: String,
    pub f: String,
    pub params: BTreeMap<String, f64>,
    pub window: (f64, f64),
    pub scan_points: usize,
    pub rtol: f64,
    pub atol: f64,
    pub hyperbolicity_margin: f64,
    pub profile_points: usize,
    pub blowup_bound: f64,
    pub grid_m: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub label: usize,
    pub b: f64,
    pub u_end: f64,
    pub amplitude: f64,
    pub morse: usize,
    pub angle_end: f64,
    pub hyperbolic_margin: f64,
    pub oracle_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckReport {
    pub morse: Vec<usize>,
    pub zero_matrix: Vec<Vec<i64>>,
    pub matches: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WolfrumReport {
    pub pairs_checked: usize,
    pub counterexamples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfirmReport {
    pub source: usize,
    pub target: usize,
    pub confirmed: bool,
    pub witness_seed: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub grid_m: usize,
    pub confirmations: Vec<ConfirmReport>,
    pub observed_connections: Vec<(usize, usize)>,
    pub dropping_pairs_checked: usize,
    pub dropping_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub seed: u64,
    pub stage: String,
    pub problem: ProblemEcho,
    pub dissipativity: Option<DissipativityReport>,
    pub equilibria: Vec<EquilibriumReport>,
    pub sigma: Option<Vec<usize>>,
    pub zero_matrix: Option<Vec<Vec<i64>>>,
    pub edges: Option<Vec<(usize, usize)>>,
    pub transitive_closure: Option<Vec<(usize, usize)>>,
    pub crosscheck: Option<CrosscheckReport>,
    pub wolfrum: Option<WolfrumReport>,
    pub verify: Option<VerifyReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: Report,
    pub report_path: PathBuf,
    pub dot_path: Option<PathBuf>,
    pub profiles_path: PathBuf,
}

const VERIFY_EPS: f64 = 1e-3;
const VERIFY_RANDOM_SEEDS: usize = 2;
const DROPPING_PAIRS: usize = 5;

/// Run the pipeline up to the configured stage and emit artifacts.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let loaded = load_problem(&config.problem)?;
    let mut spec = loaded.spec;
    if let Some(n) = config.scan_points {
        spec.scan_points = n;
    }
    if let Some(r) = config.rtol {
        spec.rtol = r;
        spec.atol = r * 1e-2;
    }
    let grid_m = config.grid_m.unwrap_or(loaded.grid_m);
    let mut warnings: Vec<String> = Vec::new();

    // dissipativity: mandatory window source when the file has none
    let probe = ProbeBox::default();
    let dissipativity = match dissipativity_window(&spec, &probe) {
        Ok((window, report)) => {
            if !loaded.explicit_window {
                spec.window = window;
            }
            for c in &report.conditions {
                if !c.passed {
                    warnings.push(format!("growth condition `{}` failed: {}", c.name, c.detail));
                }
            }
            Some(report)
        }
        Err(e @ ShootError::NotDissipativeOnProbe { .. }) => {
            if loaded.explicit_window {
                warnings.push(format!(
                    "{e}; proceeding with the explicit window [{}, {}]",
                    spec.window.0, spec.window.1
                ));
                None
            } else {
                return Err(e.into());
            }
        }
        Err(e) => return Err(e.into()),
    };

    // stage: equilibria
    let scan = find_equilibria(&spec)?;
    warnings.extend(scan.warnings.iter().cloned());
    let equilibria = scan.equilibria;
    let eq_reports: Vec<EquilibriumReport> = equilibria
        .iter()
        .map(|eq| {
            let oracle = eigenvalue_oracle(&spec, eq, crate::shoot::ORACLE_GATE_M)?;
            Ok(EquilibriumReport {
                label: eq.label,
                b: eq.b,
                u_end: eq.u_end(),
                amplitude: eq.amplitude(),
                morse: eq.morse,
                angle_end: eq.angle_end,
                hyperbolic_margin: eq.hyperbolic_margin,
                oracle_eigenvalues: oracle,
            })
        })
        .collect::<Result<_, ShootError>>()?;

    let mut report = Report {
        seed: config.seed,
        stage: config.stage.to_string(),
        problem: ProblemEcho {
            a: spec.a().to_string(),
            f: spec.f().to_string(),
            params: spec.params.clone(),
            window: spec.window,
            scan_points: spec.scan_points,
            rtol: spec.rtol,
            atol: spec.atol,
            hyperbolicity_margin: spec.hyperbolicity_margin,
            profile_points: spec.profile_points,
            blowup_bound: spec.blowup_bound,
            grid_m,
        },
        dissipativity,
        equilibria: eq_reports,
        sigma: None,
        zero_matrix: None,
        edges: None,
        transitive_closure: None,
        crosscheck: None,
        wolfrum: None,
        verify: None,
        warnings: Vec::new(),
    };

    let mut dot: Option<String> = None;

    if config.stage >= Stage::Permutation {
        let sigma = build_permutation(&equilibria)?;
        warnings.extend(sigma.structural_warnings());
        let z = zero_matrix(&equilibria)?;
        warnings.extend(z.sanity_warnings(&equilibria));
        report.sigma = Some(sigma.as_slice().to_vec());
        report.zero_matrix = Some(z.rows());

        if config.stage >= Stage::Graph {
            let graph = connection_graph(&equilibria, &z);
            let closure = graph.transitive_closure();
            report.edges = Some(graph.edges.iter().map(|e| (e.source, e.target)).collect());
            report.transitive_closure = Some(closure.clone());

            let bad = wolfrum_counterexamples(&equilibria, &z);
            let pairs_checked = equilibria
                .iter()
                .flat_map(|i| equilibria.iter().map(move |j| (i, j)))
                .filter(|(i, j)| i.morse > j.morse)
                .count();
            report.wolfrum = Some(WolfrumReport {
                pairs_checked,
                counterexamples: bad.len(),
            });
            if !bad.is_empty() {
                return Err(SturmError::CrosscheckMismatch(format!(
                    "adjacency and cascade notions disagree on pairs {bad:?}"
                ))
                .into());
            }

            let cross = permutation_crosscheck(&sigma)?;
            compare_crosscheck(&cross, &equilibria, &z)?;
            report.crosscheck = Some(CrosscheckReport {
                morse: cross.morse.clone(),
                zero_matrix: cross.zero.rows(),
                matches: true,
            });

            dot = Some(render_dot(&graph));

            if config.stage >= Stage::Verify {
                let targets = discretize_equilibria(&spec, &equilibria, grid_m)?;
                let opts = EvolveOptions::default();
                let mut confirmations = Vec::new();
                let mut observed = Vec::new();
                for (k, edge) in graph.edges.iter().enumerate() {
                    let outcome = confirm_heteroclinic(
                        &spec,
                        &equilibria,
                        &targets,
                        edge.source,
                        edge.target,
                        VERIFY_EPS,
                        VERIFY_RANDOM_SEEDS,
                        config.seed.wrapping_add(k as u64),
                        &opts,
                    )?;
                    for (_, label) in &outcome.observed {
                        if *label != edge.source {
                            observed.push((edge.source, *label));
                        }
                    }
                    confirmations.push(ConfirmReport {
                        source: edge.source,
                        target: edge.target,
                        confirmed: outcome.is_confirmed(),
                        witness_seed: outcome.confirmed.clone(),
                    });
                }
                observed.sort_unstable();
                observed.dedup();
                for (s, t) in &observed {
                    if !closure.contains(&(*s, *t)) {
                        return Err(CliError::VerifyContradiction(format!(
                            "observed convergence {s} -> {t} is outside the predicted closure"
                        )));
                    }
                }

                // dropping spot check on random initial pairs
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let xs = grid_xs(grid_m);
                let drop_opts = EvolveOptions {
                    t_end: 2.0,
                    saves: 40,
                    stop_on_convergence: false,
                    ..EvolveOptions::default()
                };
                let mut violations = 0usize;
                for _ in 0..DROPPING_PAIRS {
                    let mut coef = || rng.gen_range(-0.5..0.5);
                    let (a0, a1, a2, a3) = (coef(), coef(), coef(), coef());
                    let (b0, b1, b2, b3) = (coef(), coef(), coef(), coef());
                    let ua: Vec<f64> = xs
                        .iter()
                        .map(|&x| a0 + a1 * x.cos() + a2 * (2.0 * x).cos() + a3 * (4.0 * x).cos())
                        .collect();
                    let ub: Vec<f64> = xs
                        .iter()
                        .map(|&x| b0 + b1 * x.cos() + b2 * (2.0 * x).cos() + b3 * (4.0 * x).cos())
                        .collect();
                    let ta = evolve(&spec, GridState::new(ua, 0.0), &targets, &drop_opts)?;
                    let tb = evolve(&spec, GridState::new(ub, 0.0), &targets, &drop_opts)?;
                    let timeline = zero_timeline(&ta, &tb)?;
                    violations += timeline.windows(2).filter(|w| w[1].1 > w[0].1).count();
                }
                if violations > 0 {
                    return Err(CliError::VerifyContradiction(format!(
                        "zero number of solution differences increased {violations} time(s)"
                    )));
                }

                report.verify = Some(VerifyReport {
                    grid_m,
                    confirmations,
                    observed_connections: observed,
                    dropping_pairs_checked: DROPPING_PAIRS,
                    dropping_violations: violations,
                });
            }
        }
    }

    report.warnings = warnings;

    // emission, strictly sequential
    std::fs::create_dir_all(&config.out_dir)?;
    let report_path = config.out_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    std::fs::write(&report_path, json)?;

    let profiles_path = config.out_dir.join("profiles.csv");
    std::fs::write(&profiles_path, render_profiles_csv(&equilibria))?;

    let dot_path = match dot {
        Some(text) => {
            let p = config.out_dir.join("attractor.dot");
            std::fs::write(&p, text)?;
            Some(p)
        }
        None => None,
    };

    Ok(RunSummary {
        report,
        report_path,
        dot_path,
        profiles_path,
    })
}

/// DOT rendering with nodes ranked by Morse index (sources on top).
fn render_dot(graph: &crate::sturm::ConnectionGraph) -> String {
    let mut out = String::from("digraph attractor {\n  rankdir=TB;\n  node [shape=circle];\n");
    let max_morse = graph.nodes.iter().map(|n| n.morse).max().unwrap_or(0);
    for level in (0..=max_morse).rev() {
        let members: Vec<&crate::sturm::GraphNode> = graph
            .nodes
            .iter()
            .filter(|n| n.morse == level)
            .collect();
        if members.is_empty() {
            continue;
        }
        out.push_str("  { rank=same;");
        for n in members {
            out.push_str(&format!(" e{} [label=\"u{} (i={})\"];", n.label, n.label, n.morse));
        }
        out.push_str(" }\n");
    }
    for e in &graph.edges {
        out.push_str(&format!("  e{} -> e{};\n", e.source, e.target));
    }
    out.push_str("}\n");
    out
}

/// Wide-format CSV: x plus one column per equilibrium profile.
fn render_profiles_csv(equilibria: &[crate::shoot::EquilibriumProfile]) -> String {
    let mut out = String::from("x");
    for eq in equilibria {
        out.push_str(&format!(",u_{}", eq.label));
    }
    out.push('\n');
    if let Some(first) = equilibria.first() {
        for (k, &x) in first.xs.iter().enumerate() {
            out.push_str(&format!("{x}"));
            for eq in equilibria {
                out.push_str(&format!(",{}", eq.u[k]));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests;
