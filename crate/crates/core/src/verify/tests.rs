use std::f64::consts::PI;

use super::*;
use crate::shoot::find_equilibria;
use crate::test_problems::{cubic_problem, cubic_scan, linear_decay_problem, problem_from};

fn cubic_targets(lambda: f64, m: usize) -> Vec<DiscreteEquilibrium> {
    let prob = cubic_problem(lambda);
    let scan = cubic_scan(lambda);
    discretize_equilibria(&prob, &scan.equilibria, m).unwrap()
}

fn short_opts(t_end: f64) -> EvolveOptions {
    EvolveOptions {
        t_end,
        saves: (t_end * 20.0).ceil() as usize,
        ..EvolveOptions::default()
    }
}

#[test]
fn equilibria_are_fixed_points_of_the_discrete_flow() {
    let prob = cubic_problem(2.0);
    let targets = cubic_targets(2.0, 201);
    // a constant and a genuinely nonconstant equilibrium
    for label in [5usize, 4] {
        let start = targets[label - 1].u.clone();
        let traj = evolve(
            &prob,
            GridState::new(start.clone(), 0.0),
            &[],
            &short_opts(1.0),
        )
        .unwrap();
        let (_, last) = traj.snapshots.last().unwrap();
        let drift = last
            .iter()
            .zip(&start)
            .fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
        assert!(drift <= 1e-6, "label {label}: drifted {drift:.3e}");
    }
}

#[test]
fn newton_refinement_moves_profile_by_grid_bias_only() {
    let targets = cubic_targets(2.0, 201);
    let scan = cubic_scan(2.0);
    let xs = grid_xs(201);
    // nonconstant equilibrium: refinement shifts by O(h^2), which at
    // m = 201 is around 1e-4, but never further
    let eq = &scan.equilibria[3];
    let interp: Vec<f64> = xs.iter().map(|&x| eq.u_at(x)).collect();
    let refined = &targets[3].u;
    let shift = interp
        .iter()
        .zip(refined)
        .fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
    assert!(shift > 1e-7, "refinement should matter: {shift:.3e}");
    assert!(shift < 1e-3, "refinement too large: {shift:.3e}");
    // constants are exact fixed points of the discretization already
    let c = &targets[4].u;
    assert!(c.iter().all(|&v| (v - 1.0).abs() <= 1e-12));
}

#[test]
fn linear_decay_matches_exact_rate() {
    let prob = linear_decay_problem();
    let scan = find_equilibria(&prob).unwrap();
    let targets = discretize_equilibria(&prob, &scan.equilibria, 201).unwrap();
    let u0 = vec![0.5; 201];
    let opts = EvolveOptions {
        t_end: 2.0,
        saves: 40,
        stop_on_convergence: false,
        ..EvolveOptions::default()
    };
    let traj = evolve(&prob, GridState::new(u0, 0.0), &targets, &opts).unwrap();
    for (t, u) in &traj.snapshots {
        let norm = u.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        let exact = 0.5 * (-t).exp();
        assert!(
            (norm - exact).abs() <= 0.05 * exact,
            "t = {t}: {norm} vs {exact}"
        );
    }
}

#[test]
fn constant_perturbation_flows_to_the_stable_state() {
    let prob = cubic_problem(2.0);
    let targets = cubic_targets(2.0, 201);
    let u0 = vec![0.01; 201];
    let traj = evolve(
        &prob,
        GridState::new(u0, 0.0),
        &targets,
        &EvolveOptions::default(),
    )
    .unwrap();
    assert_eq!(traj.converged_label().unwrap(), 5, "{:?}", traj.terminal);
}

#[test]
fn shifted_heat_solutions_have_constant_sign_difference() {
    let prob = problem_from("1", "0*u", &[]);
    let xs = grid_xs(101);
    let u0: Vec<f64> = xs.iter().map(|&x| 0.5 * (3.0 * x).cos()).collect();
    let shifted: Vec<f64> = u0.iter().map(|v| v + 1.0).collect();
    let opts = EvolveOptions {
        t_end: 1.0,
        saves: 20,
        stop_on_convergence: false,
        ..EvolveOptions::default()
    };
    let a = evolve(&prob, GridState::new(u0, 0.0), &[], &opts).unwrap();
    let b = evolve(&prob, GridState::new(shifted, 0.0), &[], &opts).unwrap();
    let timeline = zero_timeline(&a, &b).unwrap();
    assert!(timeline.iter().all(|&(_, z)| z == 0), "{timeline:?}");
}

#[test]
fn zero_number_of_difference_is_nonincreasing() {
    let prob = cubic_problem(2.0);
    let xs = grid_xs(201);
    // difference starts with five sign changes
    let u0a: Vec<f64> = xs.iter().map(|&x| 0.3 + 0.1 * (5.0 * x).cos()).collect();
    let u0b = vec![0.3; 201];
    let opts = EvolveOptions {
        t_end: 5.0,
        saves: 100,
        stop_on_convergence: false,
        ..EvolveOptions::default()
    };
    let a = evolve(&prob, GridState::new(u0a, 0.0), &[], &opts).unwrap();
    let b = evolve(&prob, GridState::new(u0b, 0.0), &[], &opts).unwrap();
    let timeline = zero_timeline(&a, &b).unwrap();
    assert_eq!(timeline[0].1, 5);
    for w in timeline.windows(2) {
        assert!(w[1].1 <= w[0].1, "dropped upward: {:?} -> {:?}", w[0], w[1]);
    }
    let final_z = timeline.last().unwrap().1;
    assert!(final_z <= 0, "five wiggles must be gone by t = 5: {final_z}");
}

#[test]
fn grid_mismatch_is_reported() {
    let prob = cubic_problem(2.0);
    let opts = short_opts(0.5);
    let a = evolve(&prob, GridState::new(vec![0.1; 101], 0.0), &[], &opts).unwrap();
    let b = evolve(&prob, GridState::new(vec![0.1; 201], 0.0), &[], &opts).unwrap();
    assert!(matches!(
        zero_timeline(&a, &b),
        Err(VerifyError::GridMismatch(_))
    ));
}

#[test]
fn heteroclinics_out_of_the_center_are_observed() {
    let prob = cubic_problem(2.0);
    let scan = cubic_scan(2.0);
    let targets = cubic_targets(2.0, 201);
    let opts = EvolveOptions::default();

    // center (morse 2) to the stable constant +1 via the positive
    // direction of the first eigenfunction
    let outcome =
        confirm_heteroclinic(&prob, &scan.equilibria, &targets, 3, 5, 1e-3, 2, 7, &opts).unwrap();
    let seed = outcome.confirmed.as_deref().expect("3 -> 5 not observed");
    assert!(seed.contains("phi_0") || seed.contains("random"), "{seed}");

    // center to the inner nonconstant equilibrium via the second direction
    let outcome =
        confirm_heteroclinic(&prob, &scan.equilibria, &targets, 3, 4, 1e-3, 2, 7, &opts).unwrap();
    assert!(outcome.is_confirmed(), "3 -> 4: {outcome:?}");
    assert!(outcome
        .confirmed
        .as_deref()
        .is_some_and(|s| s.contains("phi_1")));

    // stable equilibria cannot source a heteroclinic
    match confirm_heteroclinic(&prob, &scan.equilibria, &targets, 1, 5, 1e-3, 0, 7, &opts) {
        Err(VerifyError::NoUnstableDirections { label: 1 }) => {}
        other => panic!("expected NoUnstableDirections, got {other:?}"),
    }
}

#[test]
fn terminal_classification_survives_grid_doubling() {
    let prob = cubic_problem(2.0);
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for trial in 0..5 {
        let (c0, c1, c2) = (
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        );
        let mut labels = Vec::new();
        for m in [101usize, 201] {
            let targets = cubic_targets(2.0, m);
            let u0: Vec<f64> = grid_xs(m)
                .iter()
                .map(|&x| c0 + c1 * x.cos() + c2 * (2.0 * x).cos())
                .collect();
            let traj = evolve(
                &prob,
                GridState::new(u0, 0.0),
                &targets,
                &EvolveOptions::default(),
            )
            .unwrap();
            labels.push(traj.converged_label().unwrap());
        }
        assert_eq!(labels[0], labels[1], "trial {trial}: {labels:?}");
    }
}

#[test]
fn csv_export_has_header_and_rows() {
    let prob = linear_decay_problem();
    let traj = evolve(
        &prob,
        GridState::new(vec![0.25; 101], 0.0),
        &[],
        &short_opts(0.2),
    )
    .unwrap();
    let csv = snapshots_csv(&traj);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,u"));
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 3);
    assert!((PI - grid_xs(101)[100]).abs() < 1e-15);
}
