//! Expression trees for the coefficient functions a(x,u,p) and f(x,u,p),
//! where p stands for u_x.
//!
//! Supported grammar: the variables `x`, `u`, `p`, named parameters bound to
//! constants at parse time, `+ - * /`, `^` with a constant exponent, unary
//! minus, and the functions `sin cos tan exp ln tanh abs sqrt`. Trees are
//! immutable after construction and safe to evaluate concurrently.

mod compile;
mod parser;

pub use compile::CompiledExpr;
pub use parser::{parse, Diagnostic, DiagnosticKind, ParseError};

use std::fmt;

/// A variable of the problem: position, value, or slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    U,
    P,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X => write!(f, "x"),
            Var::U => write!(f, "u"),
            Var::P => write!(f, "p"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Tanh,
    Abs,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> Result<f64, DomainError> {
        let out = match self {
            UnaryOp::Neg => -v,
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Tan => v.tan(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Ln => {
                if v <= 0.0 {
                    return Err(DomainError::new(format!("ln of non-positive value {v}")));
                }
                v.ln()
            }
            UnaryOp::Tanh => v.tanh(),
            UnaryOp::Abs => v.abs(),
            UnaryOp::Sqrt => {
                if v < 0.0 {
                    return Err(DomainError::new(format!("sqrt of negative value {v}")));
                }
                v.sqrt()
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(DomainError::new(format!(
                "{}({v}) is not finite",
                self.name()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Expression tree. Powers carry a constant exponent so that symbolic
/// differentiation stays total.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
}

/// Evaluation hit a singular point or produced a non-finite value.
#[derive(Debug, Clone, thiserror::Error)]
#[error("domain error: {message}")]
pub struct DomainError {
    pub message: String,
}

impl DomainError {
    fn new(message: String) -> Self {
        DomainError { message }
    }
}

/// Symbolic differentiation was requested for an operator without a
/// derivative in the supported class (`abs`).
#[derive(Debug, Clone, thiserror::Error)]
#[error("cannot differentiate through {}", op.name())]
pub struct NonDifferentiable {
    pub op: UnaryOp,
}

impl Expr {
    // ---- smart constructors: constant folding plus 0/1 identities ----

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
        }
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        if op == UnaryOp::Neg {
            return Expr::neg(e);
        }
        if let Expr::Const(c) = e {
            if let Ok(v) = op.apply(c) {
                return Expr::Const(v);
            }
        }
        Expr::Unary(op, Box::new(e))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x + y).is_finite() => Expr::Const(x + y),
            (Expr::Const(c), e) if c == 0.0 => e,
            (e, Expr::Const(c)) if c == 0.0 => e,
            (a, b) => Expr::Binary(BinOp::Add, Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x - y).is_finite() => Expr::Const(x - y),
            (e, Expr::Const(c)) if c == 0.0 => e,
            (Expr::Const(c), e) if c == 0.0 => Expr::neg(e),
            (a, b) => Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x * y).is_finite() => Expr::Const(x * y),
            (Expr::Const(c), _) | (_, Expr::Const(c)) if c == 0.0 => Expr::Const(0.0),
            (Expr::Const(c), e) if c == 1.0 => e,
            (e, Expr::Const(c)) if c == 1.0 => e,
            (a, b) => Expr::Binary(BinOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if y != 0.0 && (x / y).is_finite() => {
                Expr::Const(x / y)
            }
            (e, Expr::Const(c)) if c == 1.0 => e,
            (Expr::Const(c), e) if c == 0.0 => {
                // 0/e stays 0; a genuine 0/0 only arises when e itself
                // evaluates to 0, which the unfolded form would also map
                // to 0 * (1/e) ambiguity -- keep the fold, it is the
                // documented 0-identity.
                let _ = e;
                Expr::Const(0.0)
            }
            (a, b) => Expr::Binary(BinOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(base: Expr, exponent: f64) -> Expr {
        if exponent == 1.0 {
            return base;
        }
        if exponent == 0.0 {
            return Expr::Const(1.0);
        }
        if let Expr::Const(c) = base {
            let v = c.powf(exponent);
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
        Expr::Pow(Box::new(base), exponent)
    }

    // ---- queries ----

    /// Does the tree mention the given variable?
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Unary(_, e) => e.depends_on(v),
            Expr::Binary(_, a, b) => a.depends_on(v) || b.depends_on(v),
            Expr::Pow(b, _) => b.depends_on(v),
        }
    }

    /// Constant value if the tree is a single constant node.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    // ---- evaluation ----

    /// Evaluate at (x,u,p). NaN or infinity anywhere is an error.
    pub fn eval(&self, x: f64, u: f64, p: f64) -> Result<f64, DomainError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::U) => u,
            Expr::Var(Var::P) => p,
            Expr::Unary(op, e) => op.apply(e.eval(x, u, p)?)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(x, u, p)?;
                let b = b.eval(x, u, p)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(DomainError::new(format!("division of {a} by zero")));
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(base, e) => base.eval(x, u, p)?.powf(*e),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DomainError::new("non-finite intermediate value".into()))
        }
    }

    // ---- differentiation ----

    /// Exact symbolic derivative with respect to `var`. Simplification is
    /// limited to constant folding and 0/1 identities.
    pub fn differentiate(&self, var: Var) -> Result<Expr, NonDifferentiable> {
        Ok(match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, e) => {
                let de = e.differentiate(var)?;
                let e = (**e).clone();
                match op {
                    UnaryOp::Neg => Expr::neg(de),
                    UnaryOp::Sin => Expr::mul(Expr::unary(UnaryOp::Cos, e), de),
                    UnaryOp::Cos => Expr::neg(Expr::mul(Expr::unary(UnaryOp::Sin, e), de)),
                    UnaryOp::Tan => Expr::mul(
                        Expr::add(
                            Expr::Const(1.0),
                            Expr::pow(Expr::unary(UnaryOp::Tan, e), 2.0),
                        ),
                        de,
                    ),
                    UnaryOp::Exp => Expr::mul(Expr::unary(UnaryOp::Exp, e), de),
                    UnaryOp::Ln => Expr::div(de, e),
                    UnaryOp::Tanh => Expr::mul(
                        Expr::sub(
                            Expr::Const(1.0),
                            Expr::pow(Expr::unary(UnaryOp::Tanh, e), 2.0),
                        ),
                        de,
                    ),
                    UnaryOp::Abs => return Err(NonDifferentiable { op: UnaryOp::Abs }),
                    UnaryOp::Sqrt => Expr::div(
                        de,
                        Expr::mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, e)),
                    ),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.differentiate(var)?;
                let db = b.differentiate(var)?;
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => Expr::add(da, db),
                    BinOp::Sub => Expr::sub(da, db),
                    BinOp::Mul => Expr::add(Expr::mul(da, b), Expr::mul(a, db)),
                    BinOp::Div => Expr::div(
                        Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                        Expr::pow(b, 2.0),
                    ),
                }
            }
            Expr::Pow(base, e) => {
                let db = base.differentiate(var)?;
                Expr::mul(
                    Expr::mul(Expr::Const(*e), Expr::pow((**base).clone(), e - 1.0)),
                    db,
                )
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 0, // printed parenthesized
            Expr::Const(_) | Expr::Var(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(..) => 5, // named functions print their own parens
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Pow(..) => 4,
        }
    }
}

/// Prints a form that re-parses to a structurally identical tree: children
/// are parenthesized whenever the grammar would otherwise regroup them.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "(-{})", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, e) => {
                write!(f, "-")?;
                child(f, e, e.precedence() < 3)
            }
            Expr::Unary(op, e) => write!(f, "{}({})", op.name(), e),
            Expr::Binary(op, a, b) => {
                let p = self.precedence();
                child(f, a, a.precedence() < p)?;
                write!(f, "{}", op.symbol())?;
                // left-associative grammar: equal precedence on the right
                // must be parenthesized to survive a round trip
                child(f, b, b.precedence() <= p)
            }
            Expr::Pow(base, e) => {
                child(f, base, base.precedence() <= 4)?;
                if *e < 0.0 {
                    write!(f, "^(-{})", -e)
                } else {
                    write!(f, "^{e}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
