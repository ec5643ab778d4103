//! Finite-difference discretization of the linearized operator
//!
//!     L u = a*(x) u_xx + b*(x) u + c*(x) u_x,   Neumann boundary,
//!
//! on a uniform m-point grid with ghost-node closure (u_{-1} = u_1,
//! u_{m} = u_{m-2}), and a symmetric-tridiagonal eigenvalue solver.
//!
//! The raw matrix is tridiagonal but nonsymmetric; with a* > 0 and a fine
//! enough grid both off-diagonals are positive, so a diagonal similarity
//! turns it into a symmetric tridiagonal matrix with the same spectrum.
//! Eigenvalues come from QL iteration with implicit shifts, selected
//! eigenvectors from inverse iteration mapped back through the scaling.

/// Tridiagonal matrix; `sub[i]` is the entry (i+1, i), `sup[i]` is (i, i+1).
#[derive(Debug, Clone)]
pub struct Tridiag {
    pub diag: Vec<f64>,
    pub sub: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }
}

/// Similarity scaling that symmetrizes `t`. Returns the symmetric diagonal
/// and off-diagonal plus the scaling vector delta with S = D A D^{-1},
/// D = diag(delta). Fails when an off-diagonal product is not positive.
pub fn symmetrize(t: &Tridiag) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), String> {
    let n = t.n();
    let mut delta = vec![1.0f64; n];
    let mut off = vec![0.0f64; n.saturating_sub(1)];
    for i in 1..n {
        let prod = t.sup[i - 1] * t.sub[i - 1];
        if !(prod > 0.0) || !prod.is_finite() {
            return Err(format!(
                "off-diagonal product {prod:.3e} at row {i} not positive; grid too coarse for the drift term"
            ));
        }
        delta[i] = delta[i - 1] * (t.sup[i - 1] / t.sub[i - 1]).sqrt();
        if !delta[i].is_finite() || delta[i] == 0.0 {
            return Err("similarity scaling overflowed".into());
        }
        off[i - 1] = prod.sqrt();
    }
    Ok((t.diag.clone(), off, delta))
}

/// All eigenvalues of a symmetric tridiagonal matrix by QL iteration with
/// implicit shifts. `off` has length n-1.
pub fn eigenvalues_symtri(diag: &[f64], off: &[f64]) -> Result<Vec<f64>, String> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(format!("QL iteration failed to converge at row {l}"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.abs().copysign(g));
            let mut s = 1.0f64;
            let mut c = 1.0f64;
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                f = (d[i] - g) * s + 2.0 * c * b;
                p = s * f;
                d[i + 1] = g + p;
                g = c * f - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(d)
}

/// Solve (T - shift I) x = rhs for symmetric tridiagonal T with partial
/// pivoting (the shifted matrix is near-singular by construction). Rows are
/// swapped whole, which introduces a second superdiagonal of fill-in.
fn solve_shifted(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut b: Vec<f64> = diag.iter().map(|&v| v - shift).collect(); // col i of row i
    let mut c1 = vec![0.0f64; n]; // col i+1 of row i
    let mut c2 = vec![0.0f64; n]; // col i+2 of row i (fill-in)
    for i in 0..n - 1 {
        c1[i] = off[i];
    }
    let mut x = rhs.to_vec();
    for i in 0..n - 1 {
        // `low` is the entry of row i+1 in column i that must be eliminated
        let mut low = off[i];
        if low.abs() > b[i].abs() {
            std::mem::swap(&mut b[i], &mut low);
            let t = c1[i];
            c1[i] = b[i + 1];
            b[i + 1] = t;
            let t = c2[i];
            c2[i] = c1[i + 1];
            c1[i + 1] = t;
            x.swap(i, i + 1);
        }
        if b[i] == 0.0 {
            return None;
        }
        let m = low / b[i];
        b[i + 1] -= m * c1[i];
        c1[i + 1] -= m * c2[i];
        x[i + 1] -= m * x[i];
    }
    if b[n - 1] == 0.0 {
        return None;
    }
    x[n - 1] /= b[n - 1];
    if n >= 2 {
        x[n - 2] = (x[n - 2] - c1[n - 2] * x[n - 1]) / b[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - c1[i] * x[i + 1] - c2[i] * x[i + 2]) / b[i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Eigenvector of the symmetric tridiagonal matrix for an already computed
/// eigenvalue, by inverse iteration. Normalized to unit 2-norm with the
/// largest-magnitude component positive.
pub fn eigenvector_symtri(diag: &[f64], off: &[f64], lambda: f64) -> Result<Vec<f64>, String> {
    let n = diag.len();
    let norm_t = diag
        .iter()
        .map(|v| v.abs())
        .chain(off.iter().map(|v| 2.0 * v.abs()))
        .fold(0.0f64, f64::max);
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 1e-3 * ((i * 2654435761) % 97) as f64)
        .collect();
    normalize(&mut v);
    let mut shift = lambda;
    for attempt in 0..6 {
        let mut ok = true;
        for _ in 0..3 {
            match solve_shifted(diag, off, shift, &v) {
                Some(mut w) => {
                    normalize(&mut w);
                    v = w;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            // orient deterministically
            let (mut imax, mut vmax) = (0usize, 0.0f64);
            for (i, &w) in v.iter().enumerate() {
                if w.abs() > vmax {
                    vmax = w.abs();
                    imax = i;
                }
            }
            if v[imax] < 0.0 {
                for w in &mut v {
                    *w = -*w;
                }
            }
            return Ok(v);
        }
        shift = lambda + norm_t * 1e-13 * 10f64.powi(attempt);
    }
    Err("inverse iteration broke down".into())
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Laplacian with Neumann ghost closure on m points: eigenvalues are
    /// -(2/h^2)(1 - cos(n h)), the discrete images of -n^2.
    fn neumann_laplacian(m: usize) -> Tridiag {
        let h = PI / (m - 1) as f64;
        let s = 1.0 / (h * h);
        let mut t = Tridiag {
            diag: vec![-2.0 * s; m],
            sub: vec![s; m - 1],
            sup: vec![s; m - 1],
        };
        t.sup[0] = 2.0 * s;
        t.sub[m - 2] = 2.0 * s;
        t
    }

    #[test]
    fn laplacian_eigenvalues_match_discrete_formula() {
        let m = 201;
        let t = neumann_laplacian(m);
        let (d, e, _) = symmetrize(&t).unwrap();
        let mut eig = eigenvalues_symtri(&d, &e).unwrap();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let h = PI / (m - 1) as f64;
        for n in 0..6 {
            let exact = -(2.0 / (h * h)) * (1.0 - (n as f64 * h).cos());
            assert!(
                (eig[n] - exact).abs() <= 1e-8 * (1.0 + exact.abs()),
                "n={n}: {} vs {exact}",
                eig[n]
            );
        }
    }

    #[test]
    fn eigenvector_of_second_mode_looks_like_cosine() {
        let m = 201;
        let t = neumann_laplacian(m);
        let (d, e, delta) = symmetrize(&t).unwrap();
        let mut eig = eigenvalues_symtri(&d, &e).unwrap();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let v = eigenvector_symtri(&d, &e, eig[1]).unwrap();
        // map back through the similarity scaling to the original matrix
        let w: Vec<f64> = v.iter().zip(&delta).map(|(vi, di)| vi / di).collect();
        let h = PI / (m - 1) as f64;
        let scale = w[0];
        for i in 0..m {
            let want = scale * (i as f64 * h).cos();
            assert!(
                (w[i] - want).abs() <= 1e-4 * scale.abs(),
                "node {i}: {} vs {want}",
                w[i]
            );
        }
    }

    #[test]
    fn pivoted_solver_handles_asymmetric_shift() {
        // small well-conditioned system sanity check: T x = rhs
        let diag = vec![4.0, 5.0, 6.0, 7.0];
        let off = vec![1.0, 2.0, 0.5];
        let rhs = vec![1.0, 0.0, -1.0, 2.0];
        let x = solve_shifted(&diag, &off, 0.0, &rhs).unwrap();
        // multiply back
        let n = diag.len();
        for i in 0..n {
            let mut acc = diag[i] * x[i];
            if i > 0 {
                acc += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += off[i] * x[i + 1];
            }
            assert!((acc - rhs[i]).abs() <= 1e-10, "row {i}: {acc}");
        }
    }
}
