use super::*;
use crate::test_problems::{cubic_scan, linear_decay_problem};

#[test]
fn permutation_single_equilibrium() {
    let scan = crate::shoot::find_equilibria(&linear_decay_problem()).unwrap();
    let sigma = build_permutation(&scan.equilibria).unwrap();
    assert_eq!(sigma.as_slice(), &[1]);
}

#[test]
fn permutation_of_constant_equilibria_is_identity() {
    // lambda = 0.5: three constant equilibria -1, 0, 1 keep their order
    let scan = cubic_scan(0.5);
    let sigma = build_permutation(&scan.equilibria).unwrap();
    assert_eq!(sigma.as_slice(), &[1, 2, 3]);
}

#[test]
fn permutation_for_five_equilibria_swaps_inner_pair() {
    let scan = cubic_scan(2.0);
    let sigma = build_permutation(&scan.equilibria).unwrap();
    assert_eq!(sigma.as_slice(), &[1, 4, 3, 2, 5]);

    // direct profile inspection: sorting endpoint values by hand gives the
    // same ordering
    let mut ends: Vec<(usize, f64)> = scan
        .equilibria
        .iter()
        .map(|e| (e.label, e.u_end()))
        .collect();
    ends.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let labels: Vec<usize> = ends.iter().map(|(l, _)| *l).collect();
    assert_eq!(labels, vec![1, 4, 3, 2, 5]);
}

#[test]
fn endpoint_collision_is_detected() {
    let scan = cubic_scan(2.0);
    let mut eqs = scan.equilibria.clone();
    // force two endpoint values together
    let target = eqs[1].u_end();
    if let Some(last) = eqs[3].u.last_mut() {
        *last = target;
    }
    match build_permutation(&eqs) {
        Err(SturmError::EndpointCollision { .. }) => {}
        other => panic!("expected EndpointCollision, got {other:?}"),
    }
}

#[test]
fn zero_numbers_for_five_equilibria() {
    let scan = cubic_scan(2.0);
    let eqs = &scan.equilibria;
    // constants 1 and -1 never meet
    assert_eq!(zero_number(&eqs[4], &eqs[0]).unwrap(), 0);
    // the center crosses the inner nonconstant equilibrium once
    assert_eq!(zero_number(&eqs[2], &eqs[3]).unwrap(), 1);
    // amplitude of the nonconstant pair stays below 1
    assert_eq!(zero_number(&eqs[0], &eqs[3]).unwrap(), 0);

    let z = zero_matrix(eqs).unwrap();
    let expected = [
        [-1, 0, 0, 0, 0],
        [0, -1, 1, 1, 0],
        [0, 1, -1, 1, 0],
        [0, 1, 1, -1, 0],
        [0, 0, 0, 0, -1],
    ];
    for i in 1..=5 {
        for j in 1..=5 {
            assert_eq!(
                z.get(i, j),
                expected[i - 1][j - 1],
                "z({i},{j}) = {}",
                z.get(i, j)
            );
        }
    }
    assert!(z.sanity_warnings(eqs).is_empty());
}

/// Independent oracle: plain sign scan of the dense difference at 100k
/// points, no refinement logic.
fn zero_scan_oracle(a: &crate::shoot::EquilibriumProfile, b: &crate::shoot::EquilibriumProfile) -> usize {
    let n = 100_000;
    let floor = 1e-9 * a.amplitude().max(b.amplitude()).max((a.b - b.b).abs());
    let mut count = 0;
    let mut prev: Option<f64> = None;
    for k in 0..=n {
        let x = crate::X_END * k as f64 / n as f64;
        let d = a.u_at(x) - b.u_at(x);
        if d.abs() <= floor {
            continue;
        }
        if let Some(p) = prev {
            if p.signum() != d.signum() {
                count += 1;
            }
        }
        prev = Some(d);
    }
    count
}

#[test]
fn zero_numbers_match_dense_sign_scan() {
    for lambda in [2.0, 5.0] {
        let scan = cubic_scan(lambda);
        let eqs = &scan.equilibria;
        let z = zero_matrix(eqs).unwrap();
        for i in 0..eqs.len() {
            for j in 0..eqs.len() {
                if i == j {
                    continue;
                }
                let oracle = zero_scan_oracle(&eqs[i], &eqs[j]);
                assert_eq!(
                    z.get(i + 1, j + 1),
                    oracle as i64,
                    "lambda {lambda}: pair ({}, {})",
                    i + 1,
                    j + 1
                );
            }
        }
    }
}

#[test]
fn adjacency_examples() {
    let scan = cubic_scan(2.0);
    let z = zero_matrix(&scan.equilibria).unwrap();

    // nothing between labels 3 and 4
    let check = adjacent(3, 4, &z);
    assert!(check.adjacent);
    assert!(check.candidates_checked.is_empty());

    // candidate 4 between 3 and 5 does not block: z(3,4) = 1 != z(3,5) = 0
    let check = adjacent(3, 5, &z);
    assert!(check.adjacent);
    assert_eq!(check.candidates_checked, vec![4]);

    // every interior equilibrium blocks the outer pair, e.g. the center:
    // z(1,3) = z(1,5) = z(3,5) = 0; the witness is the first one found
    let check = adjacent(1, 5, &z);
    assert!(!check.adjacent);
    assert_eq!(check.witness, Some(2));
    assert!(z.get(1, 3) == z.get(1, 5) && z.get(3, 5) == z.get(1, 5));
}

#[test]
fn connection_graph_examples() {
    let scan = crate::shoot::find_equilibria(&linear_decay_problem()).unwrap();
    let z = zero_matrix(&scan.equilibria).unwrap();
    let g = connection_graph(&scan.equilibria, &z);
    assert_eq!(g.nodes.len(), 1);
    assert!(g.edges.is_empty());

    let scan = cubic_scan(0.5);
    let z = zero_matrix(&scan.equilibria).unwrap();
    let g = connection_graph(&scan.equilibria, &z);
    assert_eq!(g.nodes.len(), 3);
    let mut edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.source, e.target)).collect();
    edges.sort_unstable();
    assert_eq!(edges, vec![(2, 1), (2, 3)]);

    let scan = cubic_scan(2.0);
    let z = zero_matrix(&scan.equilibria).unwrap();
    let g = connection_graph(&scan.equilibria, &z);
    let mut edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.source, e.target)).collect();
    edges.sort_unstable();
    assert_eq!(
        edges,
        vec![
            (2, 1),
            (2, 5),
            (3, 1),
            (3, 2),
            (3, 4),
            (3, 5),
            (4, 1),
            (4, 5)
        ]
    );
    // stable equilibria have no outgoing edges
    assert_eq!(g.out_degree(1), 0);
    assert_eq!(g.out_degree(5), 0);
}

#[test]
fn cascade_examples() {
    let scan = cubic_scan(2.0);
    let z = zero_matrix(&scan.equilibria).unwrap();
    let mut search = CascadeSearch::new(&scan.equilibria, &z);

    // single-step pair
    assert!(search.cascadly_adjacent(2, 1));
    // two-step cascade 3 -> {2 or 4} -> 1
    assert!(search.cascadly_adjacent(3, 1));
    // equal Morse indices: precondition fails
    assert!(!search.cascadly_adjacent(1, 5));
}

#[test]
fn wolfrum_equivalence_on_cubic_instances() {
    for lambda in [0.5, 2.0, 5.0] {
        let scan = cubic_scan(lambda);
        let z = zero_matrix(&scan.equilibria).unwrap();
        let bad = wolfrum_counterexamples(&scan.equilibria, &z);
        assert!(bad.is_empty(), "lambda {lambda}: {bad:?}");
    }
}

#[test]
fn crosscheck_recovers_morse_and_zero_numbers() {
    let sigma = SturmPermutation::new(vec![1]).unwrap();
    let cross = permutation_crosscheck(&sigma).unwrap();
    assert_eq!(cross.morse, vec![0]);

    let sigma = SturmPermutation::new(vec![1, 2, 3]).unwrap();
    let cross = permutation_crosscheck(&sigma).unwrap();
    assert_eq!(cross.morse, vec![0, 1, 0]);
    assert_eq!(cross.zero.get(1, 2), 0);
    assert_eq!(cross.zero.get(1, 3), 0);
    assert_eq!(cross.zero.get(2, 3), 0);

    let sigma = SturmPermutation::new(vec![1, 4, 3, 2, 5]).unwrap();
    let cross = permutation_crosscheck(&sigma).unwrap();
    assert_eq!(cross.morse, vec![0, 1, 2, 1, 0]);

    // full agreement with the numerically computed data
    for lambda in [0.5, 2.0, 5.0] {
        let scan = cubic_scan(lambda);
        let sigma = build_permutation(&scan.equilibria).unwrap();
        let z = zero_matrix(&scan.equilibria).unwrap();
        let cross = permutation_crosscheck(&sigma).unwrap();
        compare_crosscheck(&cross, &scan.equilibria, &z)
            .unwrap_or_else(|e| panic!("lambda {lambda}: {e}"));
    }
}

#[test]
fn crosscheck_rejects_non_sturm_permutations() {
    assert!(SturmPermutation::new(vec![1, 1, 3]).is_err());
    // Morse recursion goes negative immediately
    let mangled = SturmPermutation::new(vec![3, 2, 1]).unwrap();
    assert!(permutation_crosscheck(&mangled).is_err());
    // recursion fails to return to index 0 at the top label
    let mangled = SturmPermutation::new(vec![1, 3, 2, 4]).unwrap();
    assert!(permutation_crosscheck(&mangled).is_err());
}

#[test]
fn crosscheck_mismatch_is_reported() {
    let scan = cubic_scan(2.0);
    let z = zero_matrix(&scan.equilibria).unwrap();
    // wrong permutation for this problem (it is Sturm-consistent, but does
    // not match the computed Morse data)
    let sigma = SturmPermutation::new(vec![1, 2, 3, 4, 5]).unwrap();
    let cross = permutation_crosscheck(&sigma).unwrap();
    match compare_crosscheck(&cross, &scan.equilibria, &z) {
        Err(SturmError::CrosscheckMismatch(_)) => {}
        other => panic!("expected mismatch, got {other:?}"),
    }
}

#[test]
fn structural_warnings_fire_on_odd_shapes() {
    let sigma = SturmPermutation::new(vec![2, 1]).unwrap();
    let w = sigma.structural_warnings();
    assert_eq!(w.len(), 3, "{w:?}");
    let sigma = SturmPermutation::new(vec![1, 4, 3, 2, 5]).unwrap();
    assert!(sigma.structural_warnings().is_empty());
}
