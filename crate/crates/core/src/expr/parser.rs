//! Recursive-descent parser for the coefficient grammar.
//!
//! The parser keeps going after the first problem so that a single run can
//! report unknown identifiers together with syntax defects; every issue is
//! returned as a position-annotated [`Diagnostic`].

use std::collections::BTreeMap;
use std::fmt;

use super::{BinOp, Expr, UnaryOp, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Syntax,
    UnknownIdentifier,
    Arity,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Byte offset into the source text.
    pub position: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::UnknownIdentifier => "unknown identifier",
            DiagnosticKind::Arity => "arity error",
        };
        write!(f, "{kind} at position {}: {}", self.position, self.message)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str, diags: &mut Vec<Diagnostic>) -> Vec<(Tok, usize)> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while lx.pos < lx.src.len() {
            let start = lx.pos;
            let c = lx.src[lx.pos];
            match c {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    lx.pos += 1;
                }
                b'+' => out.push((Tok::Plus, lx.bump())),
                b'-' => out.push((Tok::Minus, lx.bump())),
                b'*' => out.push((Tok::Star, lx.bump())),
                b'/' => out.push((Tok::Slash, lx.bump())),
                b'^' => out.push((Tok::Caret, lx.bump())),
                b'(' => out.push((Tok::LParen, lx.bump())),
                b')' => out.push((Tok::RParen, lx.bump())),
                b',' => out.push((Tok::Comma, lx.bump())),
                b'0'..=b'9' | b'.' => {
                    while lx.pos < lx.src.len()
                        && (lx.src[lx.pos].is_ascii_digit() || lx.src[lx.pos] == b'.')
                    {
                        lx.pos += 1;
                    }
                    // exponent part
                    if lx.pos < lx.src.len() && (lx.src[lx.pos] | 0x20) == b'e' {
                        let mut probe = lx.pos + 1;
                        if probe < lx.src.len() && (lx.src[probe] == b'+' || lx.src[probe] == b'-')
                        {
                            probe += 1;
                        }
                        if probe < lx.src.len() && lx.src[probe].is_ascii_digit() {
                            lx.pos = probe;
                            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_digit() {
                                lx.pos += 1;
                            }
                        }
                    }
                    let text = &src[start..lx.pos];
                    match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => out.push((Tok::Num(v), start)),
                        _ => diags.push(Diagnostic {
                            kind: DiagnosticKind::Syntax,
                            position: start,
                            message: format!("invalid number literal `{text}`"),
                        }),
                    }
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while lx.pos < lx.src.len()
                        && (lx.src[lx.pos].is_ascii_alphanumeric() || lx.src[lx.pos] == b'_')
                    {
                        lx.pos += 1;
                    }
                    out.push((Tok::Ident(src[start..lx.pos].to_string()), start));
                }
                other => {
                    diags.push(Diagnostic {
                        kind: DiagnosticKind::Syntax,
                        position: start,
                        message: format!("unexpected character `{}`", other as char),
                    });
                    lx.pos += 1;
                }
            }
        }
        out
    }

    fn bump(&mut self) -> usize {
        let p = self.pos;
        self.pos += 1;
        p
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end_pos: usize,
    params: &'a BTreeMap<String, f64>,
    diags: Vec<Diagnostic>,
}

const FUNCTIONS: &[(&str, UnaryOp)] = &[
    ("sin", UnaryOp::Sin),
    ("cos", UnaryOp::Cos),
    ("tan", UnaryOp::Tan),
    ("exp", UnaryOp::Exp),
    ("ln", UnaryOp::Ln),
    ("tanh", UnaryOp::Tanh),
    ("abs", UnaryOp::Abs),
    ("sqrt", UnaryOp::Sqrt),
];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks
            .get(self.at)
            .map(|&(_, p)| p)
            .unwrap_or(self.end_pos)
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(t, _)| t.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn syntax(&mut self, position: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            kind: DiagnosticKind::Syntax,
            position,
            message: message.into(),
        });
    }

    fn expr(&mut self) -> Expr {
        let mut acc = self.term();
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.advance();
                    let rhs = self.term();
                    acc = Expr::Binary(BinOp::Add, Box::new(acc), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.advance();
                    let rhs = self.term();
                    acc = Expr::Binary(BinOp::Sub, Box::new(acc), Box::new(rhs));
                }
                _ => return acc,
            }
        }
    }

    fn term(&mut self) -> Expr {
        let mut acc = self.unary();
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.advance();
                    let rhs = self.unary();
                    acc = Expr::Binary(BinOp::Mul, Box::new(acc), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.advance();
                    let rhs = self.unary();
                    acc = Expr::Binary(BinOp::Div, Box::new(acc), Box::new(rhs));
                }
                _ => return acc,
            }
        }
    }

    fn unary(&mut self) -> Expr {
        if let Some(Tok::Minus) = self.peek() {
            self.advance();
            let inner = self.unary();
            // the single fold the parser performs: a minus sign directly in
            // front of a literal is the literal's sign
            return match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
            };
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Expr {
        let mut base = self.primary();
        while let Some(Tok::Caret) = self.peek() {
            self.advance();
            let epos = self.pos();
            let exponent = self.exponent_operand();
            match Self::constant_exponent(&exponent) {
                Some(e) => base = Expr::Pow(Box::new(base), e),
                None => {
                    self.syntax(epos, "exponent must be a constant expression");
                }
            }
        }
        base
    }

    /// Operand of `^`: a primary with optional sign, so `u^-2` and
    /// `u^(3/2)` both work while `u^v` is rejected as non-constant.
    fn exponent_operand(&mut self) -> Expr {
        if let Some(Tok::Minus) = self.peek() {
            self.advance();
            let inner = self.exponent_operand();
            return match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
            };
        }
        self.primary()
    }

    fn constant_exponent(e: &Expr) -> Option<f64> {
        if e.depends_on(Var::X) || e.depends_on(Var::U) || e.depends_on(Var::P) {
            return None;
        }
        e.eval(0.0, 0.0, 0.0).ok().filter(|v| v.is_finite())
    }

    fn primary(&mut self) -> Expr {
        let pos = self.pos();
        match self.advance() {
            Some(Tok::Num(v)) => Expr::Const(v),
            Some(Tok::Ident(name)) => self.identifier(name, pos),
            Some(Tok::LParen) => {
                let inner = self.expr();
                self.expect_rparen();
                inner
            }
            Some(tok) => {
                self.syntax(pos, format!("expected expression, found `{tok:?}`"));
                Expr::Const(0.0)
            }
            None => {
                self.syntax(pos, "expected expression, found end of input");
                Expr::Const(0.0)
            }
        }
    }

    fn identifier(&mut self, name: String, pos: usize) -> Expr {
        if let Some(Tok::LParen) = self.peek() {
            // function call
            self.advance();
            let mut args = vec![self.expr()];
            while let Some(Tok::Comma) = self.peek() {
                self.advance();
                args.push(self.expr());
            }
            self.expect_rparen();
            let op = FUNCTIONS.iter().find(|(n, _)| *n == name).map(|&(_, op)| op);
            match op {
                Some(op) => {
                    if args.len() != 1 {
                        self.diags.push(Diagnostic {
                            kind: DiagnosticKind::Arity,
                            position: pos,
                            message: format!("{name} takes 1 argument, got {}", args.len()),
                        });
                    }
                    Expr::Unary(op, Box::new(args.swap_remove(0)))
                }
                None => {
                    self.diags.push(Diagnostic {
                        kind: DiagnosticKind::UnknownIdentifier,
                        position: pos,
                        message: format!("unknown function `{name}`"),
                    });
                    args.swap_remove(0)
                }
            }
        } else {
            match name.as_str() {
                "x" => Expr::Var(Var::X),
                "u" => Expr::Var(Var::U),
                "p" => Expr::Var(Var::P),
                _ => match self.params.get(&name) {
                    Some(&v) => Expr::Const(v),
                    None => {
                        self.diags.push(Diagnostic {
                            kind: DiagnosticKind::UnknownIdentifier,
                            position: pos,
                            message: format!("unknown identifier `{name}`"),
                        });
                        Expr::Const(0.0)
                    }
                },
            }
        }
    }

    fn expect_rparen(&mut self) {
        match self.peek() {
            Some(Tok::RParen) => {
                self.advance();
            }
            _ => {
                let pos = self.pos();
                self.syntax(pos, "expected `)`");
            }
        }
    }
}

/// Parse an infix expression over x, u, p and the given parameters.
/// Parameters are substituted by their values; every other identifier is
/// rejected. On failure all collected diagnostics are returned.
pub fn parse(text: &str, params: &BTreeMap<String, f64>) -> Result<Expr, ParseError> {
    let mut diags = Vec::new();
    let toks = Lexer::tokens(text, &mut diags);
    let mut parser = Parser {
        toks,
        at: 0,
        end_pos: text.len(),
        params,
        diags,
    };
    let expr = parser.expr();
    if parser.at < parser.toks.len() {
        let pos = parser.pos();
        parser.syntax(pos, "unexpected trailing input");
    }
    if parser.diags.is_empty() {
        Ok(expr)
    } else {
        Err(ParseError {
            diagnostics: parser.diags,
        })
    }
}
