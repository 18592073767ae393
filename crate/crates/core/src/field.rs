//! Scalar, covector and tensor fields on a chart.
//!
//! Fields are evaluated both on plain coordinates and on [`Jet`] coordinates so
//! that metrics built from them carry exact spatial derivatives. The [`Expr`]
//! type parses small closed-form expressions in the chart coordinates, e.g.
//! `"0.3*sin(2*pi*y)"`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};

/// A smooth scalar function of the two chart coordinates.
///
/// Implementations must be safe for concurrent evaluation.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn eval(&self, x: [f64; 2]) -> f64;
    fn eval_jet(&self, x: [Jet; 2]) -> Jet;
}

/// Dispatches field evaluation on the scalar type used by a generic formula.
pub trait FieldScalar: Scalar {
    fn eval_field(f: &dyn ScalarField, x: [Self; 2]) -> Self;
}

impl FieldScalar for f64 {
    #[inline]
    fn eval_field(f: &dyn ScalarField, x: [f64; 2]) -> f64 {
        f.eval(x)
    }
}

impl FieldScalar for Jet {
    #[inline]
    fn eval_field(f: &dyn ScalarField, x: [Jet; 2]) -> Jet {
        f.eval_jet(x)
    }
}

pub type FieldRef = Arc<dyn ScalarField>;

/// Scalar field backed by a closure; jets come from finite differences.
pub struct FnField<F> {
    name: String,
    f: F,
}

impl<F: Fn([f64; 2]) -> f64 + Send + Sync> FnField<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnField {
            name: name.into(),
            f,
        }
    }
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({})", self.name)
    }
}

impl<F: Fn([f64; 2]) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn eval(&self, x: [f64; 2]) -> f64 {
        (self.f)(x)
    }
    fn eval_jet(&self, x: [Jet; 2]) -> Jet {
        taylor_jet(&self.f, x)
    }
}

/// Composes the finite-difference Taylor expansion of `f` at `x.v` with the
/// jets `x`; exact to third order since `x - x.v` has no constant term.
pub fn taylor_jet<F: Fn([f64; 2]) -> f64>(f: &F, x: [Jet; 2]) -> Jet {
    let x0 = [x[0].v, x[1].v];
    let at = |a: f64, b: f64| f([x0[0] + a, x0[1] + b]);
    let f0 = f(x0);
    let h1 = 1e-5;
    let grad = [
        (at(h1, 0.0) - at(-h1, 0.0)) / (2.0 * h1),
        (at(0.0, h1) - at(0.0, -h1)) / (2.0 * h1),
    ];
    let hess_at = |a: f64, b: f64| {
        let h = 1e-4;
        let c = at(a, b);
        let uu = (at(a + h, b) - 2.0 * c + at(a - h, b)) / (h * h);
        let vv = (at(a, b + h) - 2.0 * c + at(a, b - h)) / (h * h);
        let uv = (at(a + h, b + h) - at(a + h, b - h) - at(a - h, b + h) + at(a - h, b - h))
            / (4.0 * h * h);
        [[uu, uv], [uv, vv]]
    };
    let hess = hess_at(0.0, 0.0);
    let h3 = 1e-3;
    let hu = [hess_at(h3, 0.0), hess_at(-h3, 0.0)];
    let hv = [hess_at(0.0, h3), hess_at(0.0, -h3)];
    let mut third = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let du = (hu[0][i][j] - hu[1][i][j]) / (2.0 * h3);
            let dv = (hv[0][i][j] - hv[1][i][j]) / (2.0 * h3);
            third[i][j][0] = du;
            third[i][j][1] = dv;
        }
    }
    let d = [x[0] - x0[0], x[1] - x0[1]];
    let mut out = Jet::constant(f0);
    for i in 0..2 {
        out += d[i] * grad[i];
        for j in 0..2 {
            out += d[i] * d[j] * (0.5 * hess[i][j]);
            for k in 0..2 {
                // symmetrized third derivative
                let t = (third[i][j][k] + third[i][k][j] + third[j][k][i]) / 3.0;
                out += d[i] * d[j] * d[k] * (t / 6.0);
            }
        }
    }
    out
}

/// Covector field `theta = t1 du + t2 dv`.
#[derive(Clone, Debug)]
pub struct CovectorField {
    pub c: [FieldRef; 2],
}

impl CovectorField {
    pub fn constant(t1: f64, t2: f64) -> Self {
        CovectorField {
            c: [Expr::constant(t1).into_ref(), Expr::constant(t2).into_ref()],
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0, 0.0)
    }

    pub fn parse(t1: &str, t2: &str) -> Result<Self> {
        Ok(CovectorField {
            c: [Expr::parse(t1)?.into_ref(), Expr::parse(t2)?.into_ref()],
        })
    }

    pub fn eval<S: FieldScalar>(&self, x: [S; 2]) -> [S; 2] {
        [S::eval_field(&*self.c[0], x), S::eval_field(&*self.c[1], x)]
    }
}

/// Vector field, same storage as a covector field.
pub type VectorField = CovectorField;

/// Symmetric 2x2 tensor field `[[g11, g12], [g12, g22]]`.
#[derive(Clone, Debug)]
pub struct SymTensorField {
    pub g11: FieldRef,
    pub g12: FieldRef,
    pub g22: FieldRef,
}

impl SymTensorField {
    pub fn constant(g11: f64, g12: f64, g22: f64) -> Self {
        SymTensorField {
            g11: Expr::constant(g11).into_ref(),
            g12: Expr::constant(g12).into_ref(),
            g22: Expr::constant(g22).into_ref(),
        }
    }

    pub fn identity() -> Self {
        Self::constant(1.0, 0.0, 1.0)
    }

    /// Round metric `dphi^2 + sin^2(phi) dtheta^2` in polar coordinates.
    pub fn round_sphere() -> Self {
        SymTensorField {
            g11: Expr::constant(1.0).into_ref(),
            g12: Expr::constant(0.0).into_ref(),
            g22: Expr::parse("sin(u)^2")
                .expect("static expression")
                .into_ref(),
        }
    }

    pub fn parse(g11: &str, g12: &str, g22: &str) -> Result<Self> {
        Ok(SymTensorField {
            g11: Expr::parse(g11)?.into_ref(),
            g12: Expr::parse(g12)?.into_ref(),
            g22: Expr::parse(g22)?.into_ref(),
        })
    }

    pub fn eval<S: FieldScalar>(&self, x: [S; 2]) -> [[S; 2]; 2] {
        let a = S::eval_field(&*self.g11, x);
        let b = S::eval_field(&*self.g12, x);
        let c = S::eval_field(&*self.g22, x);
        [[a, b], [b, c]]
    }
}

/// Parsed closed-form expression in the chart coordinates.
///
/// The first coordinate is spelled `x`, `u` or `phi`, the second `y`, `v` or
/// `theta`. Supported: numbers, `pi`, `+ - * / ^`, parentheses and the functions
/// `sin cos tan exp ln log sqrt`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn into_ref(self) -> FieldRef {
        Arc::new(self)
    }

    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected trailing input in {src:?} at token {}",
                p.pos
            )));
        }
        Ok(e)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn eval_generic<S: Scalar>(&self, x: [S; 2]) -> S {
        match self {
            Expr::Const(c) => S::cst(*c),
            Expr::Coord(i) => x[*i],
            Expr::Neg(a) => -a.eval_generic(x),
            Expr::Add(a, b) => a.eval_generic(x) + b.eval_generic(x),
            Expr::Sub(a, b) => a.eval_generic(x) - b.eval_generic(x),
            Expr::Mul(a, b) => a.eval_generic(x) * b.eval_generic(x),
            Expr::Div(a, b) => a.eval_generic(x) / b.eval_generic(x),
            Expr::Pow(a, b) => {
                let base = a.eval_generic(x);
                match b.as_constant() {
                    Some(p) if p.fract() == 0.0 && p.abs() < 64.0 => base.powi(p as i32),
                    Some(p) => base.powf(p),
                    None => (b.eval_generic(x) * base.ln()).exp(),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_generic(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.sin() / v.cos(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }
}

impl ScalarField for Expr {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self.eval_generic(x)
    }
    fn eval_jet(&self, x: [Jet; 2]) -> Jet {
        self.eval_generic(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse(format!("bad number {s:?}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!(
                "unexpected character {c:?} in {src:?}"
            )));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect_op(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected {c:?} at token {}",
                self.pos
            )))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            // right associative, binds tighter than unary minus on the left
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(fold_constants(exp))));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Tok::Op(c) => Err(Error::Parse(format!("unexpected operator {c:?}"))),
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "tan" => Some(Func::Tan),
                    "exp" => Some(Func::Exp),
                    "ln" | "log" => Some(Func::Ln),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "x" | "u" | "phi" => Ok(Expr::Coord(0)),
                    "y" | "v" | "theta" => Ok(Expr::Coord(1)),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    _ => Err(Error::Parse(format!("unknown identifier {name:?}"))),
                }
            }
        }
    }
}

fn fold_constants(e: Expr) -> Expr {
    match &e {
        Expr::Neg(a) => match a.as_constant() {
            Some(c) => Expr::Const(-c),
            None => e,
        },
        Expr::Pow(a, b) => match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(p)) if p.fract() == 0.0 && p.abs() < 64.0 => {
                Expr::Const(x.powi(p as i32))
            }
            (Some(x), Some(p)) => Expr::Const(x.powf(p)),
            _ => e,
        },
        _ => e,
    }
}
