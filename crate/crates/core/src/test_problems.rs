//! Shared fixtures for unit tests: cubic-family problems and cached scans.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::expr::parse;
use crate::shoot::{find_equilibria, ProblemSpec, ScanOutcome};

pub fn problem_from(a_text: &str, f_text: &str, params: &[(&str, f64)]) -> ProblemSpec {
    let params: BTreeMap<String, f64> =
        params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let a = parse(a_text, &params).expect("a parses");
    let f = parse(f_text, &params).expect("f parses");
    let mut p = ProblemSpec::new(a, f);
    p.params = params;
    p
}

/// Cubic problem u_t = u_xx + lambda u (1 - u^2), the workhorse example.
pub fn cubic_problem(lambda: f64) -> ProblemSpec {
    let mut p = problem_from("1", "lambda*u*(1-u^2)", &[("lambda", lambda)]);
    p.window = (-4.0, 4.0);
    p
}

/// Same equilibria with a quasilinear diffusion a and balanced reaction a*g.
pub fn quasilinear_cubic(lambda: f64, a_text: &str) -> ProblemSpec {
    let f_text = format!("({a_text})*(lambda*u*(1-u^2))");
    let mut p = problem_from(a_text, &f_text, &[("lambda", lambda)]);
    p.window = (-4.0, 4.0);
    p
}

pub fn linear_decay_problem() -> ProblemSpec {
    let mut p = problem_from("1", "-u", &[]);
    p.window = (-2.0, 2.0);
    p
}

/// Scan results cached per lambda (keyed by bit pattern) so the cubic
/// fixtures are computed once per test binary.
pub fn cubic_scan(lambda: f64) -> Arc<ScanOutcome> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ScanOutcome>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&lambda.to_bits()) {
        return Arc::clone(hit);
    }
    let scan = Arc::new(find_equilibria(&cubic_problem(lambda)).expect("cubic scan"));
    cache
        .lock()
        .unwrap()
        .insert(lambda.to_bits(), Arc::clone(&scan));
    scan
}
