//! Stack-machine form of an expression for tight inner loops (shooting
//! sweeps, method-of-lines stepping). Semantically identical to
//! [`Expr::eval`] except that domain failures surface as NaN/inf instead of
//! errors; callers in hot paths check finiteness of the result.

use super::{BinOp, Expr, UnaryOp, Var};

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    X,
    U,
    P,
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Tanh,
    Abs,
    Sqrt,
    Add,
    Sub,
    Mul,
    Div,
    Powi(i32),
    Powf(f64),
}

#[derive(Debug, Clone)]
pub struct CompiledExpr {
    prog: Vec<Instr>,
    max_stack: usize,
    const_value: Option<f64>,
}

const STACK: usize = 64;

impl CompiledExpr {
    pub fn new(e: &Expr) -> CompiledExpr {
        let mut prog = Vec::new();
        emit(e, &mut prog);
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for i in &prog {
            match i {
                Instr::Const(_) | Instr::X | Instr::U | Instr::P => depth += 1,
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div => depth -= 1,
                _ => {}
            }
            max_stack = max_stack.max(depth);
        }
        CompiledExpr {
            const_value: e.as_const(),
            prog,
            max_stack,
        }
    }

    /// The expression's value if it is a plain constant (lets callers hoist
    /// it out of grid loops).
    pub fn const_value(&self) -> Option<f64> {
        self.const_value
    }

    #[inline]
    pub fn eval(&self, x: f64, u: f64, p: f64) -> f64 {
        if let Some(c) = self.const_value {
            return c;
        }
        if self.max_stack <= STACK {
            let mut stack = [0.0f64; STACK];
            self.run(x, u, p, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.max_stack];
            self.run(x, u, p, &mut stack)
        }
    }

    #[inline]
    fn run(&self, x: f64, u: f64, p: f64, stack: &mut [f64]) -> f64 {
        let mut sp = 0usize;
        for ins in &self.prog {
            match *ins {
                Instr::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Instr::X => {
                    stack[sp] = x;
                    sp += 1;
                }
                Instr::U => {
                    stack[sp] = u;
                    sp += 1;
                }
                Instr::P => {
                    stack[sp] = p;
                    sp += 1;
                }
                Instr::Neg => stack[sp - 1] = -stack[sp - 1],
                Instr::Sin => stack[sp - 1] = stack[sp - 1].sin(),
                Instr::Cos => stack[sp - 1] = stack[sp - 1].cos(),
                Instr::Tan => stack[sp - 1] = stack[sp - 1].tan(),
                Instr::Exp => stack[sp - 1] = stack[sp - 1].exp(),
                Instr::Ln => stack[sp - 1] = stack[sp - 1].ln(),
                Instr::Tanh => stack[sp - 1] = stack[sp - 1].tanh(),
                Instr::Abs => stack[sp - 1] = stack[sp - 1].abs(),
                Instr::Sqrt => stack[sp - 1] = stack[sp - 1].sqrt(),
                Instr::Add => {
                    sp -= 1;
                    stack[sp - 1] += stack[sp];
                }
                Instr::Sub => {
                    sp -= 1;
                    stack[sp - 1] -= stack[sp];
                }
                Instr::Mul => {
                    sp -= 1;
                    stack[sp - 1] *= stack[sp];
                }
                Instr::Div => {
                    sp -= 1;
                    stack[sp - 1] /= stack[sp];
                }
                Instr::Powi(n) => stack[sp - 1] = stack[sp - 1].powi(n),
                Instr::Powf(e) => stack[sp - 1] = stack[sp - 1].powf(e),
            }
        }
        stack[sp - 1]
    }
}

fn emit(e: &Expr, prog: &mut Vec<Instr>) {
    match e {
        Expr::Const(c) => prog.push(Instr::Const(*c)),
        Expr::Var(Var::X) => prog.push(Instr::X),
        Expr::Var(Var::U) => prog.push(Instr::U),
        Expr::Var(Var::P) => prog.push(Instr::P),
        Expr::Unary(op, inner) => {
            emit(inner, prog);
            prog.push(match op {
                UnaryOp::Neg => Instr::Neg,
                UnaryOp::Sin => Instr::Sin,
                UnaryOp::Cos => Instr::Cos,
                UnaryOp::Tan => Instr::Tan,
                UnaryOp::Exp => Instr::Exp,
                UnaryOp::Ln => Instr::Ln,
                UnaryOp::Tanh => Instr::Tanh,
                UnaryOp::Abs => Instr::Abs,
                UnaryOp::Sqrt => Instr::Sqrt,
            });
        }
        Expr::Binary(op, a, b) => {
            emit(a, prog);
            emit(b, prog);
            prog.push(match op {
                BinOp::Add => Instr::Add,
                BinOp::Sub => Instr::Sub,
                BinOp::Mul => Instr::Mul,
                BinOp::Div => Instr::Div,
            });
        }
        Expr::Pow(base, e) => {
            emit(base, prog);
            if e.fract() == 0.0 && e.abs() <= 32.0 {
                prog.push(Instr::Powi(*e as i32));
            } else {
                prog.push(Instr::Powf(*e));
            }
        }
    }
}
