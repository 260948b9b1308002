//! Scalar expression trees over the chart coordinates.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?            exponent must be constant
//! atom   := number | var | func '(' args ')' | '(' expr ')'
//! var    := x1..xn | y1..yn | t
//! func   := sqrt(e) | pow(e, c)           c constant
//! ```
//!
//! Integer exponents are evaluated by repeated multiplication so polynomial
//! models stay exact under jet arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Position coordinate `x^{i+1}` (zero based).
    X(usize),
    /// Direction coordinate `y^{i+1}` (zero based).
    Y(usize),
    /// Curve parameter.
    T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sqrt(Box<Expr>),
    PowI(Box<Expr>, i32),
    Pow(Box<Expr>, f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character '{0}' at offset {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("exponent must be a constant expression")]
    NonConstantExponent,
    #[error("expected '{0}' at offset {1}")]
    Expected(char, usize),
    #[error("variable {0} out of range for dimension {1}")]
    VarOutOfRange(String, usize),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { chars: src.chars().collect(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(ParseError::UnexpectedChar(p.chars[p.pos], p.pos));
        }
        Ok(e)
    }

    /// Parse and check that every coordinate index is below `dim`.
    pub fn parse_dim(src: &str, dim: usize) -> Result<Expr, ParseError> {
        let e = Expr::parse(src)?;
        for v in e.vars() {
            match v {
                Var::X(i) if i >= dim => return Err(ParseError::VarOutOfRange(format!("x{}", i + 1), dim)),
                Var::Y(i) if i >= dim => return Err(ParseError::VarOutOfRange(format!("y{}", i + 1), dim)),
                _ => {}
            }
        }
        Ok(e)
    }

    pub fn x(i: usize) -> Expr {
        Expr::Var(Var::X(i))
    }

    pub fn y(i: usize) -> Expr {
        Expr::Var(Var::Y(i))
    }

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Box::new(self))
    }

    pub fn powi(self, n: i32) -> Expr {
        Expr::PowI(Box::new(self), n)
    }

    /// Sum of expressions (zero for an empty list).
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms.into_iter().reduce(|a, b| a + b).unwrap_or(Expr::Const(0.0))
    }

    /// Distinct variables referenced, sorted.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Sqrt(a) | Expr::PowI(a, _) | Expr::Pow(a, _) => a.collect_vars(out),
        }
    }

    /// Polynomial in the position coordinates only (no `y`, `t`, division or roots).
    pub fn is_x_polynomial(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(Var::X(_)) => true,
            Expr::Var(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.is_x_polynomial() && b.is_x_polynomial(),
            Expr::Neg(a) => a.is_x_polynomial(),
            Expr::PowI(a, n) => *n >= 0 && a.is_x_polynomial(),
            Expr::Div(..) | Expr::Sqrt(_) | Expr::Pow(..) => false,
        }
    }

    /// Constant value, if the expression has no variables.
    pub fn const_value(&self) -> Option<f64> {
        if self.vars().is_empty() {
            Some(self.eval::<f64>(&[], &[], None))
        } else {
            None
        }
    }

    /// Evaluate over any scalar type. Missing variables evaluate to zero.
    pub fn eval<S: Scalar>(&self, x: &[S], y: &[S], t: Option<&S>) -> S {
        match self {
            Expr::Const(c) => S::from_f64(*c),
            Expr::Var(Var::X(i)) => x.get(*i).cloned().unwrap_or_else(S::zero),
            Expr::Var(Var::Y(i)) => y.get(*i).cloned().unwrap_or_else(S::zero),
            Expr::Var(Var::T) => t.cloned().unwrap_or_else(S::zero),
            Expr::Add(a, b) => match (&**a, &**b) {
                (Expr::Const(c), e) | (e, Expr::Const(c)) if *c == 0.0 => e.eval(x, y, t),
                _ => a.eval(x, y, t) + b.eval(x, y, t),
            },
            Expr::Sub(a, b) => a.eval(x, y, t) - b.eval(x, y, t),
            Expr::Mul(a, b) => match (&**a, &**b) {
                (Expr::Const(c), e) | (e, Expr::Const(c)) => e.eval(x, y, t).scale(*c),
                _ => a.eval(x, y, t) * b.eval(x, y, t),
            },
            Expr::Div(a, b) => match &**b {
                Expr::Const(c) => a.eval(x, y, t).scale(1.0 / c),
                _ => a.eval(x, y, t) / b.eval(x, y, t),
            },
            Expr::Neg(a) => -a.eval(x, y, t),
            Expr::Sqrt(a) => a.eval(x, y, t).sqrt(),
            Expr::PowI(a, n) => a.eval(x, y, t).powi(*n),
            Expr::Pow(a, p) => a.eval(x, y, t).powf(*p),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::PowI(..) | Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

macro_rules! expr_binop {
    ($tr:ident, $m:ident, $variant:ident) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}
expr_binop!(Add, add, Add);
expr_binop!(Sub, sub, Sub);
expr_binop!(Mul, mul, Mul);
expr_binop!(Div, div, Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::T => write!(f, "t"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " + ")?;
                wrap(f, b, 2)
            }
            Expr::Sub(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " - ")?;
                wrap(f, b, 2)
            }
            Expr::Mul(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "*")?;
                wrap(f, b, 3)
            }
            Expr::Div(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "/")?;
                wrap(f, b, 3)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 4)
            }
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::PowI(a, n) => {
                wrap(f, a, 5)?;
                write!(f, "^{n}")
            }
            Expr::Pow(a, p) => write!(f, "pow({a}, {p})"),
        }
    }
}

impl Serialize for Expr {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::Expected(c, self.pos))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    lhs = lhs + self.term()?;
                }
                Some('-') => {
                    self.pos += 1;
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    lhs = lhs * self.unary()?;
                }
                Some('/') => {
                    self.pos += 1;
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                e => -e,
            });
        }
        if self.peek() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            let p = exp.const_value().ok_or(ParseError::NonConstantExponent)?;
            return Ok(make_pow(base, p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let c = self.peek().ok_or(ParseError::UnexpectedEnd)?;
        if c == '(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(')')?;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let ident: String = self.chars[start..self.pos].iter().collect();
            return self.ident(ident);
        }
        Err(ParseError::UnexpectedChar(c, self.pos))
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < self.chars.len() && (self.chars[self.pos] == 'e' || self.chars[self.pos] == 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.chars.len() && (self.chars[self.pos] == '+' || self.chars[self.pos] == '-') {
                self.pos += 1;
            }
            if self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<f64>().map(Expr::Const).map_err(|_| ParseError::UnexpectedChar(self.chars[start], start))
    }

    fn ident(&mut self, ident: String) -> Result<Expr, ParseError> {
        match ident.as_str() {
            "sqrt" => {
                self.expect('(')?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e.sqrt())
            }
            "pow" => {
                self.expect('(')?;
                let e = self.expr()?;
                self.expect(',')?;
                let p = self.expr()?.const_value().ok_or(ParseError::NonConstantExponent)?;
                self.expect(')')?;
                Ok(make_pow(e, p))
            }
            "t" => Ok(Expr::Var(Var::T)),
            _ => {
                let (head, tail) = ident.split_at(1);
                match (head, tail.parse::<usize>()) {
                    ("x", Ok(i)) if i >= 1 => Ok(Expr::x(i - 1)),
                    ("y", Ok(i)) if i >= 1 => Ok(Expr::y(i - 1)),
                    _ => Err(ParseError::UnknownIdent(ident)),
                }
            }
        }
    }
}

fn make_pow(base: Expr, p: f64) -> Expr {
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        Expr::PowI(Box::new(base), p as i32)
    } else if p == 0.5 {
        base.sqrt()
    } else {
        Expr::Pow(Box::new(base), p)
    }
}
