//! Combinatorial structure of the attractor: the permutation matching
//! b-order to endpoint order, zero numbers of equilibria differences, the
//! adjacency relation, and the directed heteroclinic connection graph.
//!
//! Labels are 1-based and ordered by u(0) = b throughout, matching the
//! usual convention u_1 < ... < u_N along the shooting manifold.

use rayon::prelude::*;

use crate::shoot::EquilibriumProfile;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SturmError {
    #[error("equilibria {i} and {j} end at nearly the same value u(pi) = {value:.9}; configuration looks tangent")]
    EndpointCollision { i: usize, j: usize, value: f64 },
    #[error("difference of equilibria {i} and {j} has a suspected multiple zero at x = {x:.6} (|d| = {d:.3e}, |d'| = {dp:.3e})")]
    MultipleZeroSuspected {
        i: usize,
        j: usize,
        x: f64,
        d: f64,
        dp: f64,
    },
    #[error("profiles of {i} and {j} do not share a grid")]
    ProfileGridMismatch { i: usize, j: usize },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("permutation crosscheck mismatch: {0}")]
    CrosscheckMismatch(String),
}

/// Permutation sigma with u_{sigma(1)} < ... < u_{sigma(N)} at x = pi,
/// where labels 1..N are ordered by u(0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SturmPermutation {
    sigma: Vec<usize>,
}

impl SturmPermutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self, SturmError> {
        let n = sigma.len();
        let mut seen = vec![false; n + 1];
        for &s in &sigma {
            if s == 0 || s > n || seen[s] {
                return Err(SturmError::InvalidPermutation(format!(
                    "{sigma:?} is not a bijection on 1..={n}"
                )));
            }
            seen[s] = true;
        }
        Ok(SturmPermutation { sigma })
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    /// sigma(k) for 1-based k.
    pub fn at(&self, k: usize) -> usize {
        self.sigma[k - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.sigma
    }

    /// Position of label `l` in pi-order (1-based).
    pub fn inverse_at(&self, l: usize) -> usize {
        self.sigma.iter().position(|&s| s == l).unwrap() + 1
    }

    fn inverse(&self) -> Vec<usize> {
        let n = self.n();
        let mut inv = vec![0usize; n + 1];
        for (pos, &label) in self.sigma.iter().enumerate() {
            inv[label] = pos + 1;
        }
        inv
    }

    /// Warning-level structural checks: odd count and fixed endpoints.
    pub fn structural_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let n = self.n();
        if n % 2 == 0 {
            w.push(format!("even number of equilibria ({n})"));
        }
        if self.sigma.first() != Some(&1) {
            w.push("sigma(1) != 1".to_string());
        }
        if self.sigma.last() != Some(&n) {
            w.push(format!("sigma({n}) != {n}"));
        }
        w
    }
}

/// Build the permutation from the endpoint values u(pi).
pub fn build_permutation(
    equilibria: &[EquilibriumProfile],
) -> Result<SturmPermutation, SturmError> {
    let n = equilibria.len();
    let ends: Vec<f64> = equilibria.iter().map(|e| e.u_end()).collect();
    let scale = ends
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()))
        .max(equilibria.iter().map(|e| e.amplitude()).fold(0.0, f64::max));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ends[a].partial_cmp(&ends[b]).unwrap());
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (ends[b] - ends[a]).abs() <= 1e-8 * scale {
            return Err(SturmError::EndpointCollision {
                i: equilibria[a].label,
                j: equilibria[b].label,
                value: ends[a],
            });
        }
    }
    SturmPermutation::new(order.iter().map(|&idx| equilibria[idx].label).collect())
}

/// Matrix of zero numbers z(u_i - u_j); the diagonal carries the sentinel
/// -1 (the zero number of the identically vanishing difference).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroMatrix {
    n: usize,
    entries: Vec<i64>,
}

impl ZeroMatrix {
    pub fn filled(n: usize) -> ZeroMatrix {
        let mut entries = vec![0i64; n * n];
        for i in 0..n {
            entries[i * n + i] = -1;
        }
        ZeroMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry for 1-based labels.
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[(i - 1) * self.n + (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, z: i64) {
        self.entries[(i - 1) * self.n + (j - 1)] = z;
        self.entries[(j - 1) * self.n + (i - 1)] = z;
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        (0..self.n)
            .map(|i| self.entries[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    /// Soft sanity bound z(u_i - u_j) <= max(morse_i, morse_j) recorded as
    /// warnings, not failures.
    pub fn sanity_warnings(&self, equilibria: &[EquilibriumProfile]) -> Vec<String> {
        let mut w = Vec::new();
        for i in 1..=self.n {
            for j in i + 1..=self.n {
                let bound = equilibria[i - 1].morse.max(equilibria[j - 1].morse) as i64;
                if self.get(i, j) > bound {
                    w.push(format!(
                        "z(u_{i} - u_{j}) = {} exceeds max Morse index {bound}",
                        self.get(i, j)
                    ));
                }
            }
        }
        w
    }
}

const NOISE_FLOOR_FACTOR: f64 = 1e-9;
const REFINE_FACTOR: f64 = 1e-4;
const DERIV_TOL_FACTOR: f64 = 1e-8;

/// Count strict sign changes of u_i - u_j on the shared profile grid.
/// Samples below the noise floor never seed a sign change; every counted
/// crossing is refined with dense output and must be simple (the
/// difference of two distinct equilibria of the same flow cannot have a
/// double zero, so a flat crossing signals numerical trouble).
pub fn zero_number(
    eq_i: &EquilibriumProfile,
    eq_j: &EquilibriumProfile,
) -> Result<usize, SturmError> {
    assert_ne!(eq_i.label, eq_j.label, "zero number needs distinct equilibria");
    if eq_i.xs.len() != eq_j.xs.len() {
        return Err(SturmError::ProfileGridMismatch {
            i: eq_i.label,
            j: eq_j.label,
        });
    }
    let scale = eq_i
        .amplitude()
        .max(eq_j.amplitude())
        .max((eq_i.b - eq_j.b).abs());
    let floor = NOISE_FLOOR_FACTOR * scale;
    let refine_threshold = REFINE_FACTOR * scale;
    let pscale = eq_i
        .p
        .iter()
        .chain(eq_j.p.iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let dtol = DERIV_TOL_FACTOR * pscale;

    let d = |x: f64| eq_i.u_at(x) - eq_j.u_at(x);
    let dp = |x: f64| eq_i.p_at(x) - eq_j.p_at(x);

    // walk the solid samples; remember the x of the last solid one so the
    // interval of a potential crossing is known exactly
    let mut count = 0usize;
    let mut last: Option<(f64, f64)> = None; // (x, d) of last solid sample
    for k in 0..eq_i.xs.len() {
        let x = eq_i.xs[k];
        let val = eq_i.u[k] - eq_j.u[k];
        if val.abs() <= floor {
            continue;
        }
        if let Some((x_prev, d_prev)) = last {
            if d_prev.signum() != val.signum() {
                confirm_simple_crossing(eq_i, eq_j, &d, &dp, x_prev, x, dtol)?;
                count += 1;
            } else if (x - x_prev) > 1.5 * (eq_i.xs[1] - eq_i.xs[0])
                || val.abs() < refine_threshold
                || d_prev.abs() < refine_threshold
            {
                // same sign across a dip: make sure no pair of crossings or
                // a tangency hides between the solid samples
                check_same_sign_dip(eq_i, eq_j, &d, &dp, x_prev, x, floor, dtol)?;
            }
        }
        last = Some((x, val));
    }
    if last.is_none() {
        return Err(SturmError::MultipleZeroSuspected {
            i: eq_i.label,
            j: eq_j.label,
            x: 0.0,
            d: 0.0,
            dp: 0.0,
        });
    }
    Ok(count)
}

fn confirm_simple_crossing(
    eq_i: &EquilibriumProfile,
    eq_j: &EquilibriumProfile,
    d: &impl Fn(f64) -> f64,
    dp: &impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    dtol: f64,
) -> Result<(), SturmError> {
    let mut d_lo = d(lo);
    for _ in 0..80 {
        if (hi - lo) <= 1e-13 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let dm = d(mid);
        if dm == 0.0 {
            lo = mid;
            break;
        }
        if dm.signum() == d_lo.signum() {
            lo = mid;
            d_lo = dm;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let slope = dp(x);
    if slope.abs() <= dtol {
        return Err(SturmError::MultipleZeroSuspected {
            i: eq_i.label,
            j: eq_j.label,
            x,
            d: d(x).abs(),
            dp: slope.abs(),
        });
    }
    Ok(())
}

fn check_same_sign_dip(
    eq_i: &EquilibriumProfile,
    eq_j: &EquilibriumProfile,
    d: &impl Fn(f64) -> f64,
    dp: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    floor: f64,
    dtol: f64,
) -> Result<(), SturmError> {
    // dense sweep between the flanking solid samples
    const N: usize = 64;
    let mut min_abs = f64::INFINITY;
    let mut min_x = lo;
    let mut prev = d(lo);
    for k in 1..=N {
        let x = lo + (hi - lo) * k as f64 / N as f64;
        let v = d(x);
        if prev.signum() != v.signum() && prev != 0.0 && v != 0.0 {
            // a crossing pair hides here; the walk will have missed both.
            // Treat as suspected multiple structure: the grid is too
            // coarse to certify the count.
            return Err(SturmError::MultipleZeroSuspected {
                i: eq_i.label,
                j: eq_j.label,
                x,
                d: v.abs(),
                dp: dp(x).abs(),
            });
        }
        if v.abs() < min_abs {
            min_abs = v.abs();
            min_x = x;
        }
        prev = v;
    }
    if min_abs <= floor && dp(min_x).abs() <= dtol {
        return Err(SturmError::MultipleZeroSuspected {
            i: eq_i.label,
            j: eq_j.label,
            x: min_x,
            d: min_abs,
            dp: dp(min_x).abs(),
        });
    }
    Ok(())
}

/// Zero numbers for all pairs, computed in parallel.
pub fn zero_matrix(equilibria: &[EquilibriumProfile]) -> Result<ZeroMatrix, SturmError> {
    let n = equilibria.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    let computed: Vec<Result<(usize, usize, usize), SturmError>> = pairs
        .par_iter()
        .map(|&(i, j)| zero_number(&equilibria[i], &equilibria[j]).map(|z| (i, j, z)))
        .collect();
    let mut z = ZeroMatrix::filled(n);
    for r in computed {
        let (i, j, v) = r?;
        z.set(i + 1, j + 1, v as i64);
    }
    Ok(z)
}

/// Result of an adjacency test with the blocking witness, when any.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AdjacencyCheck {
    pub adjacent: bool,
    /// Label of the first blocking equilibrium when not adjacent.
    pub witness: Option<usize>,
    /// Labels strictly between the pair at x = 0 that were examined.
    pub candidates_checked: Vec<usize>,
}

/// Two equilibria are adjacent when no third equilibrium u_* with u_*(0)
/// strictly between their boundary values satisfies
/// z(u_i - u_*) = z(u_i - u_j) = z(u_j - u_*).
pub fn adjacent(i: usize, j: usize, z: &ZeroMatrix) -> AdjacencyCheck {
    assert_ne!(i, j);
    let (lo, hi) = (i.min(j), i.max(j));
    let zij = z.get(i, j);
    let mut candidates = Vec::new();
    let mut witness = None;
    for k in lo + 1..hi {
        candidates.push(k);
        if witness.is_none() && z.get(i, k) == zij && z.get(j, k) == zij {
            witness = Some(k);
        }
    }
    AdjacencyCheck {
        adjacent: witness.is_none(),
        witness,
        candidates_checked: candidates,
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GraphNode {
    pub label: usize,
    pub morse: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GraphEdge {
    pub source: usize,
    pub target: usize,
    pub check: AdjacencyCheck,
}

/// Directed heteroclinic graph: an edge i -> j for every adjacent pair
/// with morse(i) > morse(j). Only the direct edge set is stored; the
/// transitive closure is exposed separately.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConnectionGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl ConnectionGraph {
    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.edges
            .iter()
            .any(|e| e.source == source && e.target == target)
    }

    pub fn out_degree(&self, label: usize) -> usize {
        self.edges.iter().filter(|e| e.source == label).count()
    }

    /// Reachability pairs (source, target) under directed paths.
    pub fn transitive_closure(&self) -> Vec<(usize, usize)> {
        let n = self.nodes.len();
        let mut reach = vec![vec![false; n + 1]; n + 1];
        for e in &self.edges {
            reach[e.source][e.target] = true;
        }
        for k in 1..=n {
            for i in 1..=n {
                if reach[i][k] {
                    for j in 1..=n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        for i in 1..=n {
            for j in 1..=n {
                if reach[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Structural invariants: Morse index drops along every edge and the
    /// graph is acyclic. Violations are programming errors.
    pub fn validate(&self) {
        for e in &self.edges {
            let ms = self.nodes[e.source - 1].morse;
            let mt = self.nodes[e.target - 1].morse;
            assert!(
                ms > mt,
                "edge {} -> {} does not drop Morse index",
                e.source,
                e.target
            );
        }
        for &(i, j) in &self.transitive_closure() {
            assert!(i != j, "cycle through {i} in the connection graph");
        }
    }
}

/// Assemble the direct edge set: adjacency plus Morse drop.
pub fn connection_graph(equilibria: &[EquilibriumProfile], z: &ZeroMatrix) -> ConnectionGraph {
    let nodes: Vec<GraphNode> = equilibria
        .iter()
        .map(|e| GraphNode {
            label: e.label,
            morse: e.morse,
        })
        .collect();
    let mut edges = Vec::new();
    for src in equilibria {
        for tgt in equilibria {
            if src.morse > tgt.morse {
                let check = adjacent(src.label, tgt.label, z);
                if check.adjacent {
                    edges.push(GraphEdge {
                        source: src.label,
                        target: tgt.label,
                        check,
                    });
                }
            }
        }
    }
    let g = ConnectionGraph { nodes, edges };
    g.validate();
    g
}

/// Cascade reachability: a heteroclinic between a pair with Morse
/// difference n exists exactly when a chain of single-step links does,
/// where a link from `hi` down to `lo` (Morse difference 1) requires the
/// Morse permit z(hi - lo) = morse(lo) and the absence of a blocking
/// equilibrium between them at x = 0 with z(hi - *) = z(lo - *).
pub struct CascadeSearch<'a> {
    equilibria: &'a [EquilibriumProfile],
    z: &'a ZeroMatrix,
    /// memoized single-step links, indexed (hi-1)*n + (lo-1)
    link: Vec<Option<bool>>,
}

impl<'a> CascadeSearch<'a> {
    pub fn new(equilibria: &'a [EquilibriumProfile], z: &'a ZeroMatrix) -> Self {
        let n = equilibria.len();
        CascadeSearch {
            equilibria,
            z,
            link: vec![None; n * n],
        }
    }

    fn morse(&self, label: usize) -> usize {
        self.equilibria[label - 1].morse
    }

    /// Single-step heteroclinic test for morse(hi) = morse(lo) + 1.
    fn linked(&mut self, hi: usize, lo: usize) -> bool {
        let n = self.equilibria.len();
        let idx = (hi - 1) * n + (lo - 1);
        if let Some(v) = self.link[idx] {
            return v;
        }
        let morse_permit = self.z.get(hi, lo) == self.morse(lo) as i64;
        let blocked = morse_permit && {
            let (a, b) = (hi.min(lo), hi.max(lo));
            (a + 1..b).any(|k| self.z.get(hi, k) == self.z.get(lo, k))
        };
        let v = morse_permit && !blocked;
        self.link[idx] = Some(v);
        v
    }

    /// Does a cascade from `i` (higher Morse) down to `j` exist?
    /// False whenever morse(i) <= morse(j).
    pub fn cascadly_adjacent(&mut self, i: usize, j: usize) -> bool {
        if self.morse(i) <= self.morse(j) {
            return false;
        }
        if self.morse(i) == self.morse(j) + 1 {
            return self.linked(i, j);
        }
        let mid_level = self.morse(j) + 1;
        let mids: Vec<usize> = self
            .equilibria
            .iter()
            .filter(|e| e.morse == mid_level)
            .map(|e| e.label)
            .collect();
        mids.into_iter()
            .any(|v| self.linked(v, j) && self.cascadly_adjacent(i, v))
    }
}

/// Check the equivalence of the two adjacency notions on every
/// Morse-ordered pair; returns the list of counterexamples (empty on
/// healthy configurations). Entries are (source, target, adjacent,
/// cascadly_adjacent).
pub fn wolfrum_counterexamples(
    equilibria: &[EquilibriumProfile],
    z: &ZeroMatrix,
) -> Vec<(usize, usize, bool, bool)> {
    let mut cascade = CascadeSearch::new(equilibria, z);
    let mut bad = Vec::new();
    for i in equilibria {
        for j in equilibria {
            if i.morse > j.morse {
                let a = adjacent(i.label, j.label, z).adjacent;
                let c = cascade.cascadly_adjacent(i.label, j.label);
                if a != c {
                    bad.push((i.label, j.label, a, c));
                }
            }
        }
    }
    bad
}

/// Morse indices and zero numbers recovered from the permutation alone.
#[derive(Debug, Clone)]
pub struct Crosscheck {
    pub morse: Vec<usize>,
    pub zero: ZeroMatrix,
}

/// Recover Morse indices and the zero matrix from sigma.
///
/// Indices follow the alternating-sign recursion along the b-order. Zero
/// numbers are built per column k: the neighbor pair anchors at
/// z(k-1,k) = min(i_{k-1}, i_k); walking m downward the value is carried
/// unchanged while u_m stays on the same side of u_k at x = pi, and steps
/// by one when the side flips, the direction fixed by the parity of
/// i_m + z(m+1,k). The endpoint sign of the difference pins the parity of
/// every entry, which is verified as a consistency check.
pub fn permutation_crosscheck(sigma: &SturmPermutation) -> Result<Crosscheck, SturmError> {
    let n = sigma.n();
    let inv = sigma.inverse();

    let mut morse = vec![0i64; n + 1]; // 1-based
    for m in 1..n {
        let step = (inv[m + 1] as i64 - inv[m] as i64).signum();
        let parity = if m % 2 == 1 { 1 } else { -1 };
        morse[m + 1] = morse[m] + step * parity;
        if morse[m + 1] < 0 {
            return Err(SturmError::InvalidPermutation(format!(
                "Morse recursion goes negative at label {}",
                m + 1
            )));
        }
    }
    if morse[n] != 0 {
        return Err(SturmError::InvalidPermutation(format!(
            "Morse recursion ends at i_{n} = {} instead of 0",
            morse[n]
        )));
    }

    let mut zero = ZeroMatrix::filled(n);
    for k in 2..=n {
        let anchor = morse[k - 1].min(morse[k]);
        zero.set(k - 1, k, anchor);
        let side = |m: usize| (inv[k] as i64 - inv[m] as i64).signum();
        for m in (1..k - 1).rev() {
            let prev = zero.get(m + 1, k);
            let v = if side(m) == side(m + 1) {
                prev
            } else if (morse[m] + prev) % 2 == 1 {
                prev - 1
            } else {
                prev + 1
            };
            if v < 0 {
                return Err(SturmError::InvalidPermutation(format!(
                    "zero-number recursion goes negative at pair ({m}, {k})"
                )));
            }
            zero.set(m, k, v);
        }
        // sign of the difference at x = pi pins the parity: (-1)^z
        for m in 1..k {
            let z = zero.get(m, k);
            let expected_even = side(m) > 0;
            if (z % 2 == 0) != expected_even {
                return Err(SturmError::InvalidPermutation(format!(
                    "zero-number parity inconsistent at pair ({m}, {k})"
                )));
            }
        }
    }

    Ok(Crosscheck {
        morse: morse[1..].iter().map(|&v| v as usize).collect(),
        zero,
    })
}

/// Entry-wise comparison of the sigma-derived data against the
/// numerically computed Morse indices and zero matrix.
pub fn compare_crosscheck(
    cross: &Crosscheck,
    equilibria: &[EquilibriumProfile],
    z: &ZeroMatrix,
) -> Result<(), SturmError> {
    for (eq, &m) in equilibria.iter().zip(&cross.morse) {
        if eq.morse != m {
            return Err(SturmError::CrosscheckMismatch(format!(
                "Morse index of u_{}: sigma gives {m}, shooting gives {}",
                eq.label, eq.morse
            )));
        }
    }
    let n = equilibria.len();
    for i in 1..=n {
        for j in i + 1..=n {
            if cross.zero.get(i, j) != z.get(i, j) {
                return Err(SturmError::CrosscheckMismatch(format!(
                    "z(u_{i} - u_{j}): sigma gives {}, profiles give {}",
                    cross.zero.get(i, j),
                    z.get(i, j)
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
