use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;

fn no_params() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

fn p(text: &str) -> Expr {
    parse(text, &no_params()).expect("parse")
}

#[test]
fn parse_cubic_structure() {
    let e = p("u*(1-u^2)");
    let expected = Expr::Binary(
        BinOp::Mul,
        Box::new(Expr::Var(Var::U)),
        Box::new(Expr::Binary(
            BinOp::Sub,
            Box::new(Expr::Const(1.0)),
            Box::new(Expr::Pow(Box::new(Expr::Var(Var::U)), 2.0)),
        )),
    );
    assert_eq!(e, expected);
}

#[test]
fn parse_substitutes_parameters() {
    let mut params = BTreeMap::new();
    params.insert("lambda".to_string(), 2.0);
    let e = parse("lambda*u*(1-u^2)", &params).expect("parse");
    // lambda must appear as the constant 2
    match &e {
        Expr::Binary(BinOp::Mul, left, _) => match &**left {
            Expr::Binary(BinOp::Mul, lam, _) => assert_eq!(**lam, Expr::Const(2.0)),
            other => panic!("unexpected shape {other:?}"),
        },
        other => panic!("unexpected shape {other:?}"),
    }
    assert_eq!(e.eval(0.0, 2.0, 0.0).unwrap(), 2.0 * 2.0 * (1.0 - 4.0));
}

#[test]
fn parse_reports_syntax_and_unknown_identifier_together() {
    let err = parse("q*(1-u", &no_params()).unwrap_err();
    let syntax: Vec<_> = err
        .diagnostics
        .iter()
        .filter(|d| d.kind == DiagnosticKind::Syntax)
        .collect();
    let unknown: Vec<_> = err
        .diagnostics
        .iter()
        .filter(|d| d.kind == DiagnosticKind::UnknownIdentifier)
        .collect();
    assert_eq!(syntax.len(), 1, "{err}");
    assert_eq!(syntax[0].position, 6, "{err}");
    assert_eq!(unknown.len(), 1, "{err}");
    assert_eq!(unknown[0].position, 0, "{err}");
}

#[test]
fn parse_rejects_bad_arity_and_nonconstant_exponent() {
    let err = parse("sin(x,u)", &no_params()).unwrap_err();
    assert!(err
        .diagnostics
        .iter()
        .any(|d| d.kind == DiagnosticKind::Arity));

    let err = parse("u^x", &no_params()).unwrap_err();
    assert!(err
        .diagnostics
        .iter()
        .any(|d| d.kind == DiagnosticKind::Syntax));

    // constant arithmetic in an exponent is allowed
    let e = p("u^(3/2)");
    assert_eq!(e, Expr::Pow(Box::new(Expr::Var(Var::U)), 1.5));
}

#[test]
fn eval_examples() {
    let e = p("u*(1-u^2)");
    assert_eq!(e.eval(0.3, 0.0, -1.0).unwrap(), 0.0);
    assert_eq!(e.eval(0.3, 2.0, -1.0).unwrap(), -6.0);
    let singular = p("1/u");
    assert!(singular.eval(0.0, 0.0, 0.0).is_err());
    assert!(p("ln(u)").eval(0.0, -1.0, 0.0).is_err());
}

#[test]
fn derivative_of_cubic() {
    let e = p("u*(1-u^2)");
    let du = e.differentiate(Var::U).unwrap();
    for u in [-1.0, 0.0, 1.0, 2.0] {
        let got = du.eval(0.0, u, 0.0).unwrap();
        let want = 1.0 - 3.0 * u * u;
        assert!((got - want).abs() <= 1e-12, "u={u}: {got} vs {want}");
    }
    let dp = e.differentiate(Var::P).unwrap();
    assert_eq!(dp, Expr::Const(0.0));
}

#[test]
fn derivative_rejects_abs() {
    let e = p("abs(u)");
    assert!(e.differentiate(Var::U).is_err());
}

/// Central finite difference, the independent oracle for symbolic
/// derivatives.
fn fd_derivative(e: &Expr, var: Var, x: f64, u: f64, p: f64, h: f64) -> Option<f64> {
    let shift = |s: f64| match var {
        Var::X => e.eval(x + s, u, p),
        Var::U => e.eval(x, u + s, p),
        Var::P => e.eval(x, u, p + s),
    };
    let hi = shift(h).ok()?;
    let lo = shift(-h).ok()?;
    Some((hi - lo) / (2.0 * h))
}

#[test]
fn derivative_matches_finite_differences_at_random_points() {
    use rand::{Rng, SeedableRng};
    let exprs = [
        "u*(1-u^2)",
        "sin(u)*cos(x)+exp(u/4)",
        "tanh(u*p)+x^2",
        "sqrt(u^2+1.5)",
        "ln(u^2+2)",
        "(u+p)/(2+cos(x))",
        "u^3-2*u^2+p*u",
        "1+p^2/(1+p^2)",
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for text in exprs {
        let e = p(text);
        for var in [Var::X, Var::U, Var::P] {
            let sym = e.differentiate(var).unwrap();
            let mut checked = 0;
            while checked < 100 {
                let (x, u, pp) = (
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                );
                let (Ok(s), Some(fd)) = (sym.eval(x, u, pp), fd_derivative(&e, var, x, u, pp, 1e-6))
                else {
                    continue;
                };
                let tol = 1e-6 * s.abs().max(1.0);
                assert!(
                    (s - fd).abs() <= tol,
                    "{text} d/d{var} at ({x},{u},{pp}): sym {s} vs fd {fd}"
                );
                checked += 1;
            }
        }
    }
}

#[test]
fn compiled_matches_tree_eval() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for text in [
        "u*(1-u^2)",
        "1+p^2/(1+p^2)",
        "exp(-u^2)*sin(3*x)+tanh(p)",
        "(1+u^2)*2*u*(1-u^2)",
    ] {
        let e = p(text);
        let c = CompiledExpr::new(&e);
        for _ in 0..200 {
            let (x, u, pp) = (
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            if let Ok(v) = e.eval(x, u, pp) {
                let w = c.eval(x, u, pp);
                assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0), "{text}: {v} vs {w}");
            }
        }
    }
}

fn arb_expr(depth: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-1.0e3..1.0e3f64).prop_map(Expr::Const),
        prop_oneof![Just(Var::X), Just(Var::U), Just(Var::P)].prop_map(Expr::Var),
    ];
    leaf.prop_recursive(depth, 64, 8, |inner| {
        prop_oneof![
            (
                prop_oneof![
                    Just(UnaryOp::Neg),
                    Just(UnaryOp::Sin),
                    Just(UnaryOp::Cos),
                    Just(UnaryOp::Tan),
                    Just(UnaryOp::Exp),
                    Just(UnaryOp::Ln),
                    Just(UnaryOp::Tanh),
                    Just(UnaryOp::Abs),
                    Just(UnaryOp::Sqrt),
                ],
                inner.clone()
            )
                .prop_map(|(op, e)| match (op, e) {
                    // mirror the parser: a minus applied to a literal is its sign
                    (UnaryOp::Neg, Expr::Const(c)) => Expr::Const(-c),
                    (op, e) => Expr::Unary(op, Box::new(e)),
                }),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            (inner, prop_oneof![
                Just(-3.0),
                Just(-0.5),
                Just(0.0),
                Just(1.0),
                Just(2.0),
                Just(2.5),
                Just(7.0)
            ])
                .prop_map(|(b, e)| Expr::Pow(Box::new(b), e)),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_round_trip(e in arb_expr(8)) {
        let printed = e.to_string();
        let reparsed = parse(&printed, &no_params())
            .unwrap_or_else(|err| panic!("`{printed}` failed to re-parse: {err}"));
        prop_assert_eq!(&reparsed, &e, "printed `{}`", printed);
    }
}
