use std::f64::consts::PI;

use super::*;

fn ok_field(
    f: impl Fn(f64, &[f64], &mut [f64]),
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), FieldError> {
    move |x, y, dy| {
        f(x, y, dy);
        Ok(())
    }
}

#[test]
fn cosine_dense_accuracy() {
    let sol = Integrator::with_tol(1e-10, 1e-12)
        .integrate(
            ok_field(|_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            }),
            &[1.0, 0.0],
            PI,
        )
        .unwrap();
    assert!((sol.end_state()[0] + 1.0).abs() <= 1e-8);
    for i in 0..=200 {
        let x = PI * i as f64 / 200.0;
        let y = sol.eval(x);
        assert!((y[0] - x.cos()).abs() <= 1e-8, "u at {x}: {}", y[0]);
        assert!((y[1] + x.sin()).abs() <= 1e-8, "p at {x}: {}", y[1]);
    }
}

#[test]
fn constant_solution_stays_constant() {
    let sol = Integrator::default()
        .integrate(ok_field(|_, _, dy| dy.fill(0.0)), &[4.25, -3.0], PI)
        .unwrap();
    for i in 0..=50 {
        let x = PI * i as f64 / 50.0;
        assert_eq!(sol.eval(x), vec![4.25, -3.0]);
    }
}

#[test]
fn nonlinear_matches_fixed_step_oracle() {
    let field = |_: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = -2.0 * y[0] * (1.0 - y[0] * y[0]);
    };
    let oracle = rk4_fixed(field, &[0.5, 0.0], PI, 1_000_000);
    let sol = Integrator::with_tol(1e-10, 1e-12)
        .integrate(ok_field(field), &[0.5, 0.0], PI)
        .unwrap();
    assert!(
        (sol.end_state()[0] - oracle[0]).abs() <= 1e-7,
        "{} vs oracle {}",
        sol.end_state()[0],
        oracle[0]
    );
}

#[test]
fn halving_rtol_never_increases_cosine_error() {
    let mut rtol = 1e-4;
    let mut prev_err = f64::INFINITY;
    while rtol > 1e-11 {
        let sol = Integrator::with_tol(rtol, rtol * 1e-2)
            .integrate(
                ok_field(|_, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                }),
                &[1.0, 0.0],
                PI,
            )
            .unwrap();
        let err = (sol.end_state()[0] + 1.0).abs();
        assert!(
            err <= prev_err * (1.0 + 1e-9) + 1e-15,
            "error rose from {prev_err} to {err} at rtol {rtol}"
        );
        prev_err = err;
        rtol *= 0.5;
    }
}

#[test]
fn blow_up_is_reported() {
    // y' = y^2 from 1 escapes at x = 1 < pi
    let res = Integrator::default().integrate(
        ok_field(|_, y, dy| {
            dy[0] = y[0] * y[0];
        }),
        &[1.0],
        PI,
    );
    match res {
        Err(IvpError::BlowUp { x, .. }) => assert!((x - 1.0).abs() < 0.05, "x = {x}"),
        other => panic!("expected BlowUp, got {other:?}"),
    }
}

#[test]
fn unwind_pure_rotation_is_identity() {
    let trace = unwind_angle(|x| (x.cos(), -x.sin()), 0.0, PI).unwrap();
    for (&x, &nu) in trace.xs.iter().zip(&trace.nu) {
        assert!((nu - x).abs() <= 1e-12, "nu({x}) = {nu}");
    }
    assert!((trace.end() - PI).abs() <= 1e-12);
}

#[test]
fn unwind_constant_path_is_zero() {
    let trace = unwind_angle(|_| (1.0, 0.0), 0.0, PI).unwrap();
    assert!(trace.nu.iter().all(|&v| v == 0.0));
}

#[test]
fn unwind_negated_path_shifts_by_pi() {
    let path = |x: f64| ((2.0 * x).cos() + 0.2, -(2.0 * x).sin());
    let a = unwind_angle(path, 0.0, PI).unwrap();
    let b = unwind_angle(|x| (-path(x).0, -path(x).1), 0.0, PI).unwrap();
    let shift = b.at(0.0) - a.at(0.0);
    assert!((shift.abs() - PI).abs() <= 1e-12, "shift {shift}");
    for i in 0..=64 {
        let x = PI * i as f64 / 64.0;
        assert!(
            (b.at(x) - a.at(x) - shift).abs() <= 1e-9,
            "branch shift not constant at {x}"
        );
    }
}

#[test]
fn unwind_commutes_with_reparametrization() {
    let phase = |x: f64| x * x / PI;
    let a = unwind_angle(|x| (x.cos(), -x.sin()), 0.0, PI).unwrap();
    let b = unwind_angle(|x| (phase(x).cos(), -phase(x).sin()), 0.0, PI).unwrap();
    for i in 0..=64 {
        let x = PI * i as f64 / 64.0;
        assert!(
            (b.at(x) - a.at(phase(x))).abs() <= 1e-9,
            "mismatch at {x}: {} vs {}",
            b.at(x),
            a.at(phase(x))
        );
    }
}

#[test]
fn unwind_vanishing_path_is_an_error() {
    let res = unwind_angle(|x| (1.0 - 2.0 * x / PI, 0.0), 0.0, PI);
    assert!(matches!(res, Err(IvpError::PathVanishes { .. })));
}

/// Tangent path of the linearization u'' = -2u at the trivial equilibrium:
/// the winding nu(pi) lands strictly inside (pi, 2pi), which the Morse
/// formula 1 + floor(nu/pi) turns into index 2, matching the two positive
/// eigenvalues 2 - n^2 in {2, 1}.
#[test]
fn tangent_winding_of_constant_linearization() {
    let sol = Integrator::with_tol(1e-12, 1e-14)
        .integrate(
            ok_field(|_, y, dy| {
                dy[0] = y[1];
                dy[1] = -2.0 * y[0];
            }),
            &[1.0, 0.0],
            PI,
        )
        .unwrap();
    let trace = unwind_angle(|x| (sol.eval_component(x, 0), sol.eval_component(x, 1)), 0.0, PI)
        .unwrap();
    let nu_end = trace.end();
    assert!(
        nu_end > PI && nu_end < 2.0 * PI,
        "nu(pi) = {nu_end} outside (pi, 2pi)"
    );
    assert_eq!((nu_end / PI).floor() as i64 + 1, 2);

    // exact endpoint angle: (u,p)(pi) = (cos(s*pi), -s*sin(s*pi)), s = sqrt(2)
    let s = 2.0f64.sqrt();
    let exact = {
        let raw = (s * (s * PI).sin()).atan2((s * PI).cos());
        if raw < 0.0 {
            raw + 2.0 * PI
        } else {
            raw
        }
    };
    assert!((nu_end - exact).abs() <= 1e-9, "{nu_end} vs {exact}");
}

/// Direct integration of the scalar clockwise-angle equation
/// nu' = sin^2(nu) + (b/a) cos^2(nu) - (c/a) sin(nu) cos(nu)
/// agrees with unwinding of the Cartesian tangent system.
#[test]
fn prufer_equation_agrees_with_unwinding() {
    let (a, b, c) = (1.0, 2.0, 0.4);
    let sol = Integrator::with_tol(1e-12, 1e-14)
        .integrate(
            ok_field(|_, y, dy| {
                dy[0] = y[1];
                dy[1] = -(b * y[0] + c * y[1]) / a;
            }),
            &[1.0, 0.0],
            PI,
        )
        .unwrap();
    let trace = unwind_angle(|x| (sol.eval_component(x, 0), sol.eval_component(x, 1)), 0.0, PI)
        .unwrap();

    let prufer = Integrator::with_tol(1e-12, 1e-14)
        .integrate(
            ok_field(|_, y: &[f64], dy: &mut [f64]| {
                let (s, co) = y[0].sin_cos();
                dy[0] = s * s + (b / a) * co * co - (c / a) * s * co;
            }),
            &[0.0],
            PI,
        )
        .unwrap();
    assert!(
        (trace.end() - prufer.end_state()[0]).abs() <= 1e-6,
        "unwind {} vs prufer {}",
        trace.end(),
        prufer.end_state()[0]
    );
}
