//! Closed-form scalar fields on a chart: expression trees with a text
//! mini-language, exact symbolic partial derivatives and point evaluation.
//!
//! The grammar (whitespace insignificant, `^` binds tighter than unary minus):
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := "-" factor | base ("^" integer)?
//! base   := number | ident | "(" expr ")" | func "(" expr ")"
//! func   := "exp" | "ln" | "sin" | "cos"
//! ident  := "x" digit
//! ```
//!
//! Trees are immutable and cheaply shared; evaluation is pure, so fields can
//! be evaluated from many threads at once.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Coordinate chart: `dim` coordinates named `x1..xn` over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    dim: usize,
    bounds: Vec<(f64, f64)>,
}

impl Chart {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let dim = bounds.len();
        if !(1..=6).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim, 1, 6));
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::DegenerateBox(i));
            }
        }
        Ok(Chart { dim, bounds })
    }

    /// Symmetric box `[-r, r]^dim`.
    pub fn centered(dim: usize, r: f64) -> Result<Self> {
        Chart::new(vec![(-r, r); dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim
            && p.iter()
                .zip(&self.bounds)
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub(crate) fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        if !self.contains(p) {
            return Err(Error::PointOutsideChart);
        }
        Ok(())
    }

    /// Product chart: coordinates of `self` followed by those of `other`.
    pub fn product(&self, other: &Chart) -> Result<Chart> {
        let mut b = self.bounds.clone();
        b.extend_from_slice(&other.bounds);
        Chart::new(b)
    }
}

/// A closed-form scalar field, exactly differentiable.
#[derive(Debug, Clone)]
pub enum ScalarExpr {
    Const(f64),
    /// 0-based coordinate index, displayed as `x{i+1}`.
    Coord(usize),
    Add(Arc<ScalarExpr>, Arc<ScalarExpr>),
    Sub(Arc<ScalarExpr>, Arc<ScalarExpr>),
    Mul(Arc<ScalarExpr>, Arc<ScalarExpr>),
    Div(Arc<ScalarExpr>, Arc<ScalarExpr>),
    Pow(Arc<ScalarExpr>, i32),
    Exp(Arc<ScalarExpr>),
    Ln(Arc<ScalarExpr>),
    Sin(Arc<ScalarExpr>),
    Cos(Arc<ScalarExpr>),
}

use ScalarExpr::*;

impl ScalarExpr {
    pub fn constant(c: f64) -> Self {
        Const(c)
    }

    pub fn coord(i: usize) -> Self {
        Coord(i)
    }

    pub fn zero() -> Self {
        Const(0.0)
    }

    pub fn one() -> Self {
        Const(1.0)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Const(c) if *c == 0.0)
    }

    // Smart constructors: constant folding and 0/1 absorption only.
    // Correctness is defined by evaluation, not by canonical form.

    pub fn add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Const(x + y),
            (Some(0.0), None) => b,
            (None, Some(0.0)) => a,
            _ => Add(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn sub(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Const(x - y),
            (None, Some(0.0)) => a,
            (Some(0.0), None) => ScalarExpr::mul(Const(-1.0), b),
            _ => Sub(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Const(x * y),
            (Some(0.0), None) | (None, Some(0.0)) => Const(0.0),
            (Some(1.0), None) => b,
            (None, Some(1.0)) => a,
            _ => Mul(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn div(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
        match (a.as_const(), b.as_const()) {
            (_, Some(1.0)) => a,
            (Some(0.0), None) => Const(0.0),
            (Some(x), Some(y)) if y != 0.0 => Const(x / y),
            _ => Div(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn powi(a: ScalarExpr, n: i32) -> ScalarExpr {
        match n {
            0 => Const(1.0),
            1 => a,
            _ => match a.as_const() {
                Some(x) if x != 0.0 || n > 0 => Const(x.powi(n)),
                _ => Pow(Arc::new(a), n),
            },
        }
    }

    pub fn exp(a: ScalarExpr) -> ScalarExpr {
        match a.as_const() {
            Some(x) => Const(x.exp()),
            None => Exp(Arc::new(a)),
        }
    }

    pub fn ln(a: ScalarExpr) -> ScalarExpr {
        match a.as_const() {
            Some(x) if x > 0.0 => Const(x.ln()),
            _ => Ln(Arc::new(a)),
        }
    }

    pub fn sin(a: ScalarExpr) -> ScalarExpr {
        match a.as_const() {
            Some(x) => Const(x.sin()),
            None => Sin(Arc::new(a)),
        }
    }

    pub fn cos(a: ScalarExpr) -> ScalarExpr {
        match a.as_const() {
            Some(x) => Const(x.cos()),
            None => Cos(Arc::new(a)),
        }
    }

    /// Double-precision value at `p`. Division by zero and `ln` of a
    /// non-positive argument are reported with the offending subexpression.
    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        match self {
            Const(c) => Ok(*c),
            Coord(i) => p.get(*i).copied().ok_or(Error::DimensionMismatch {
                expected: *i + 1,
                got: p.len(),
            }),
            Add(a, b) => Ok(a.eval(p)? + b.eval(p)?),
            Sub(a, b) => Ok(a.eval(p)? - b.eval(p)?),
            Mul(a, b) => Ok(a.eval(p)? * b.eval(p)?),
            Div(a, b) => {
                let den = b.eval(p)?;
                if den == 0.0 {
                    return Err(Error::Domain {
                        expr: self.to_string(),
                        reason: "division by zero".into(),
                    });
                }
                Ok(a.eval(p)? / den)
            }
            Pow(a, n) => {
                let base = a.eval(p)?;
                if base == 0.0 && *n < 0 {
                    return Err(Error::Domain {
                        expr: self.to_string(),
                        reason: "zero raised to a negative power".into(),
                    });
                }
                Ok(base.powi(*n))
            }
            Exp(a) => Ok(a.eval(p)?.exp()),
            Ln(a) => {
                let arg = a.eval(p)?;
                if arg <= 0.0 {
                    return Err(Error::Domain {
                        expr: self.to_string(),
                        reason: format!("ln of non-positive value {arg}"),
                    });
                }
                Ok(arg.ln())
            }
            Sin(a) => Ok(a.eval(p)?.sin()),
            Cos(a) => Ok(a.eval(p)?.cos()),
        }
    }

    /// Exact symbolic partial derivative with respect to coordinate `i`.
    pub fn partial(&self, i: usize) -> ScalarExpr {
        match self {
            Const(_) => Const(0.0),
            Coord(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Add(a, b) => ScalarExpr::add(a.partial(i), b.partial(i)),
            Sub(a, b) => ScalarExpr::sub(a.partial(i), b.partial(i)),
            Mul(a, b) => ScalarExpr::add(
                ScalarExpr::mul(a.partial(i), (**b).clone()),
                ScalarExpr::mul((**a).clone(), b.partial(i)),
            ),
            Div(a, b) => {
                // (a' b - a b') / b^2
                let num = ScalarExpr::sub(
                    ScalarExpr::mul(a.partial(i), (**b).clone()),
                    ScalarExpr::mul((**a).clone(), b.partial(i)),
                );
                if num.is_zero() {
                    return Const(0.0);
                }
                ScalarExpr::div(num, ScalarExpr::powi((**b).clone(), 2))
            }
            Pow(a, n) => {
                let da = a.partial(i);
                if da.is_zero() {
                    return Const(0.0);
                }
                ScalarExpr::mul(
                    ScalarExpr::mul(Const(*n as f64), ScalarExpr::powi((**a).clone(), n - 1)),
                    da,
                )
            }
            Exp(a) => ScalarExpr::mul(ScalarExpr::exp((**a).clone()), a.partial(i)),
            Ln(a) => ScalarExpr::div(a.partial(i), (**a).clone()),
            Sin(a) => ScalarExpr::mul(ScalarExpr::cos((**a).clone()), a.partial(i)),
            Cos(a) => ScalarExpr::mul(
                ScalarExpr::mul(Const(-1.0), ScalarExpr::sin((**a).clone())),
                a.partial(i),
            ),
        }
    }

    /// Largest coordinate index used, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Const(_) => None,
            Coord(i) => Some(*i),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => match (a.max_coord(), b.max_coord())
            {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, None) => x,
                (None, y) => y,
            },
            Pow(a, _) | Exp(a) | Ln(a) | Sin(a) | Cos(a) => a.max_coord(),
        }
    }

    /// Replace coordinates by constants (freezing a slice through the chart).
    pub fn substitute(&self, assignments: &[(usize, f64)]) -> ScalarExpr {
        match self {
            Const(c) => Const(*c),
            Coord(i) => assignments
                .iter()
                .find(|(j, _)| j == i)
                .map(|(_, v)| Const(*v))
                .unwrap_or(Coord(*i)),
            Add(a, b) => ScalarExpr::add(a.substitute(assignments), b.substitute(assignments)),
            Sub(a, b) => ScalarExpr::sub(a.substitute(assignments), b.substitute(assignments)),
            Mul(a, b) => ScalarExpr::mul(a.substitute(assignments), b.substitute(assignments)),
            Div(a, b) => ScalarExpr::div(a.substitute(assignments), b.substitute(assignments)),
            Pow(a, n) => ScalarExpr::powi(a.substitute(assignments), *n),
            Exp(a) => ScalarExpr::exp(a.substitute(assignments)),
            Ln(a) => ScalarExpr::ln(a.substitute(assignments)),
            Sin(a) => ScalarExpr::sin(a.substitute(assignments)),
            Cos(a) => ScalarExpr::cos(a.substitute(assignments)),
        }
    }

    /// Renumber coordinates by `map[old] = new`; coordinates mapped to `None`
    /// must not occur in the expression.
    pub fn remap_coords(&self, map: &[Option<usize>]) -> Result<ScalarExpr> {
        Ok(match self {
            Const(c) => Const(*c),
            Coord(i) => {
                let new = map
                    .get(*i)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::Invalid(format!("coordinate x{} cannot be remapped", i + 1)))?;
                Coord(new)
            }
            Add(a, b) => ScalarExpr::add(a.remap_coords(map)?, b.remap_coords(map)?),
            Sub(a, b) => ScalarExpr::sub(a.remap_coords(map)?, b.remap_coords(map)?),
            Mul(a, b) => ScalarExpr::mul(a.remap_coords(map)?, b.remap_coords(map)?),
            Div(a, b) => ScalarExpr::div(a.remap_coords(map)?, b.remap_coords(map)?),
            Pow(a, n) => ScalarExpr::powi(a.remap_coords(map)?, *n),
            Exp(a) => ScalarExpr::exp(a.remap_coords(map)?),
            Ln(a) => ScalarExpr::ln(a.remap_coords(map)?),
            Sin(a) => ScalarExpr::sin(a.remap_coords(map)?),
            Cos(a) => ScalarExpr::cos(a.remap_coords(map)?),
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Add(..) | Sub(..) => 0,
            Mul(..) | Div(..) => 1,
            Pow(..) => 2,
            Const(c) if *c < 0.0 => 1, // prints with a leading minus
            _ => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.precedence();
        if p < min {
            write!(f, "(")?;
        }
        match self {
            Const(c) => {
                if *c == c.trunc() && c.abs() < 1e15 {
                    write!(f, "{}", *c as i64)?;
                } else {
                    write!(f, "{c:?}")?;
                }
            }
            Coord(i) => write!(f, "x{}", i + 1)?,
            Add(a, b) => {
                a.fmt_prec(f, 0)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 1)?;
            }
            Sub(a, b) => {
                a.fmt_prec(f, 0)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 1)?;
            }
            Mul(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 2)?;
            }
            Div(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " / ")?;
                b.fmt_prec(f, 2)?;
            }
            Pow(a, n) => {
                a.fmt_prec(f, 3)?;
                write!(f, "^{n}")?;
            }
            Exp(a) => write!(f, "exp({a})")?,
            Ln(a) => write!(f, "ln({a})")?,
            Sin(a) => write!(f, "sin({a})")?,
            Cos(a) => write!(f, "cos({a})")?,
        }
        if p < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Parse `text` against the mini-language grammar; coordinates must lie
/// within `chart.dim()`.
pub fn parse_expr(text: &str, chart: &Chart) -> Result<ScalarExpr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        dim: chart.dim(),
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = ScalarExpr::add(acc, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = ScalarExpr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = ScalarExpr::mul(acc, self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = ScalarExpr::div(acc, self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<ScalarExpr> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(ScalarExpr::mul(ScalarExpr::Const(-1.0), inner));
        }
        let base = self.base()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let n = self.integer()?;
            return Ok(ScalarExpr::powi(base, n));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.err("expected integer exponent"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<i32>()
            .map_err(|_| self.err("integer exponent out of range"))
    }

    fn base(&mut self) -> Result<ScalarExpr> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("expected expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(b'0'..=b'9') | Some(b'.') => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident_or_func(),
            Some(_) => Err(self.err("expected expression")),
        }
    }

    fn number(&mut self) -> Result<ScalarExpr> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(b'0'..=b'9')) {
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark; // not an exponent after all
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(ScalarExpr::Const)
            .map_err(|_| Error::Parse {
                offset: start,
                message: format!("invalid number literal `{text}`"),
            })
    }

    fn ident_or_func(&mut self) -> Result<ScalarExpr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "exp" | "ln" | "sin" | "cos" => {
                if !self.eat(b'(') {
                    return Err(self.err("expected `(` after function name"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(match name {
                    "exp" => ScalarExpr::exp(arg),
                    "ln" => ScalarExpr::ln(arg),
                    "sin" => ScalarExpr::sin(arg),
                    _ => ScalarExpr::cos(arg),
                })
            }
            _ => {
                let bytes = name.as_bytes();
                if bytes.len() == 2 && bytes[0] == b'x' && bytes[1].is_ascii_digit() {
                    let i = (bytes[1] - b'0') as usize;
                    if i == 0 || i > self.dim {
                        return Err(Error::Parse {
                            offset: start,
                            message: format!("coordinate {name} out of chart range (dim {})", self.dim),
                        });
                    }
                    Ok(ScalarExpr::Coord(i - 1))
                } else {
                    Err(Error::Parse {
                        offset: start,
                        message: format!("unknown identifier `{name}`"),
                    })
                }
            }
        }
    }
}

/// Finite complex polynomial `H(z,w) = sum c_pq z^p w^q`.
#[derive(Debug, Clone, Default)]
pub struct ComplexPoly2 {
    terms: Vec<((u32, u32), (f64, f64))>,
}

impl ComplexPoly2 {
    pub fn new(terms: Vec<((u32, u32), (f64, f64))>) -> Self {
        ComplexPoly2 { terms }
    }

    pub fn terms(&self) -> &[((u32, u32), (f64, f64))] {
        &self.terms
    }

    /// Expand `H(z,w)` with `z = x1 + s1*i*x2`, `w = x3 + s2*i*x4` into real
    /// and imaginary parts as scalar expressions on a 4-dimensional chart.
    pub fn expand(&self, s1: f64, s2: f64) -> (ScalarExpr, ScalarExpr) {
        let z = (ScalarExpr::coord(0), ScalarExpr::mul(Const(s1), Coord(1)));
        let w = (ScalarExpr::coord(2), ScalarExpr::mul(Const(s2), Coord(3)));
        let mut re = ScalarExpr::zero();
        let mut im = ScalarExpr::zero();
        for ((p, q), (cr, ci)) in &self.terms {
            let zp = cpow(&z, *p);
            let wq = cpow(&w, *q);
            let t = cmul(&zp, &wq);
            let t = cmul(&(Const(*cr), Const(*ci)), &t);
            re = ScalarExpr::add(re, t.0);
            im = ScalarExpr::add(im, t.1);
        }
        (re, im)
    }
}

type CExpr = (ScalarExpr, ScalarExpr);

fn cmul(a: &CExpr, b: &CExpr) -> CExpr {
    (
        ScalarExpr::sub(
            ScalarExpr::mul(a.0.clone(), b.0.clone()),
            ScalarExpr::mul(a.1.clone(), b.1.clone()),
        ),
        ScalarExpr::add(
            ScalarExpr::mul(a.0.clone(), b.1.clone()),
            ScalarExpr::mul(a.1.clone(), b.0.clone()),
        ),
    )
}

fn cpow(a: &CExpr, n: u32) -> CExpr {
    let mut acc = (ScalarExpr::one(), ScalarExpr::zero());
    for _ in 0..n {
        acc = cmul(&acc, a);
    }
    acc
}

/// Real part of `H(z,w)` (or of `H(z, conj w)` when `conjugate_w`) with
/// `z = x1 + i x2`, `w = x3 + i x4` on a 4-dimensional chart. The output is
/// bi-harmonic: both partial Laplacians vanish identically.
pub fn re_holomorphic(h: &ComplexPoly2, conjugate_w: bool, chart: &Chart) -> Result<ScalarExpr> {
    if chart.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: chart.dim(),
        });
    }
    let s2 = if conjugate_w { -1.0 } else { 1.0 };
    Ok(h.expand(1.0, s2).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chart4() -> Chart {
        Chart::centered(4, 2.0).unwrap()
    }

    #[test]
    fn parse_product_and_eval() {
        let e = parse_expr("x1*x3", &chart4()).unwrap();
        assert_eq!(e.eval(&[1.0, 0.0, 2.0, 0.0]).unwrap(), 2.0);
        assert_eq!(e.eval(&[1.0, 0.0, 1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn parse_exp_composite() {
        let e = parse_expr("exp(2*(x1*x3 - x2*x4))", &chart4()).unwrap();
        assert_eq!(e.eval(&[0.0; 4]).unwrap(), 1.0);
    }

    #[test]
    fn syntax_error_offset() {
        let err = parse_expr("x1 +", &chart4()).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_and_out_of_range() {
        assert!(matches!(
            parse_expr("y1 + 1", &chart4()),
            Err(Error::Parse { .. })
        ));
        let c2 = Chart::centered(2, 1.0).unwrap();
        assert!(matches!(
            parse_expr("x3", &c2),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unary_minus_binds_looser_than_pow() {
        let c = chart4();
        let e = parse_expr("-x1^2", &c).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0, 0.0, 0.0]).unwrap(), -4.0);
        let e = parse_expr("2 * -x1", &c).unwrap();
        assert_eq!(e.eval(&[1.5, 0.0, 0.0, 0.0]).unwrap(), -3.0);
    }

    #[test]
    fn partial_basic() {
        let c = chart4();
        let e = parse_expr("x1*x3", &c).unwrap();
        let d1 = e.partial(0);
        assert_eq!(d1.eval(&[5.0, 0.0, 7.0, 0.0]).unwrap(), 7.0);
        let d13 = e.partial(0).partial(2);
        assert_eq!(d13.eval(&[0.3, 0.1, -0.5, 0.9]).unwrap(), 1.0);

        let ex = parse_expr("exp(x1)", &c).unwrap();
        let v = ex.partial(0).eval(&[0.7, 0.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.7f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn partial_matches_central_differences() {
        let c = chart4();
        let exprs = [
            "exp(x1*x3) + sin(x2)*cos(x4)",
            "ln(2 + x1^2) / (1 + x4^2)",
            "x1^3 - 2*x2*x3 + x4^-2",
        ];
        let p = [0.4, -0.3, 0.8, 1.2];
        let h = 1e-5;
        for s in exprs {
            let e = parse_expr(s, &c).unwrap();
            for i in 0..4 {
                let exact = e.partial(i).eval(&p).unwrap();
                let mut pp = p;
                pp[i] += h;
                let up = e.eval(&pp).unwrap();
                pp[i] -= 2.0 * h;
                let dn = e.eval(&pp).unwrap();
                let fd = (up - dn) / (2.0 * h);
                let scale = exact.abs().max(1.0);
                assert!(
                    (exact - fd).abs() / scale < 1e-6,
                    "{s} d{i}: exact {exact} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn eval_domain_errors() {
        let c = chart4();
        let e = parse_expr("ln(x1)", &c).unwrap();
        match e.eval(&[0.0, 0.0, 0.0, 0.0]) {
            Err(Error::Domain { expr, .. }) => assert!(expr.contains("ln")),
            other => panic!("expected domain error, got {other:?}"),
        }
        let e = parse_expr("1/(x1 - 1)", &c).unwrap();
        assert!(e.eval(&[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn pythagorean_identity() {
        let c = chart4();
        let e = parse_expr("sin(x2)^2 + cos(x2)^2", &c).unwrap();
        for t in [-1.3, 0.0, 0.7, 1.9] {
            let v = e.eval(&[0.0, t, 0.0, 0.0]).unwrap();
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn re_holomorphic_zw() {
        let c = chart4();
        let h = ComplexPoly2::new(vec![((1, 1), (1.0, 0.0))]);
        let f = re_holomorphic(&h, false, &c).unwrap();
        let g = re_holomorphic(&h, true, &c).unwrap();
        let p = [0.3, -0.7, 1.1, 0.5];
        assert!((f.eval(&p).unwrap() - (p[0] * p[2] - p[1] * p[3])).abs() < 1e-15);
        assert!((g.eval(&p).unwrap() - (p[0] * p[2] + p[1] * p[3])).abs() < 1e-15);

        let hz = ComplexPoly2::new(vec![((1, 0), (1.0, 0.0))]);
        let fz = re_holomorphic(&hz, false, &c).unwrap();
        assert!((fz.eval(&p).unwrap() - p[0]).abs() < 1e-15);
        for i in 0..4 {
            assert!(fz.partial(i).partial(i).eval(&p).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn re_holomorphic_biharmonic() {
        let c = chart4();
        let h = ComplexPoly2::new(vec![
            ((2, 1), (0.5, -1.0)),
            ((0, 3), (-0.25, 0.0)),
            ((3, 2), (0.0, 2.0)),
        ]);
        for conj in [false, true] {
            let f = re_holomorphic(&h, conj, &c).unwrap();
            let lap1 = ScalarExpr::add(f.partial(0).partial(0), f.partial(1).partial(1));
            let lap2 = ScalarExpr::add(f.partial(2).partial(2), f.partial(3).partial(3));
            let pts = crate::sample::quasirandom_points(c.bounds(), 100, 11);
            for p in &pts {
                assert!(lap1.eval(p).unwrap().abs() < 1e-12);
                assert!(lap2.eval(p).unwrap().abs() < 1e-12);
            }
        }
    }

    // Random expression generator for property tests.
    fn arb_expr(depth: u32) -> BoxedStrategy<ScalarExpr> {
        let leaf = prop_oneof![
            (-3.0f64..3.0).prop_map(ScalarExpr::constant),
            (0usize..4).prop_map(ScalarExpr::coord),
        ];
        leaf.prop_recursive(depth, 64, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| ScalarExpr::add(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| ScalarExpr::sub(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| ScalarExpr::mul(a, b)),
                (inner.clone(), 1i32..4).prop_map(|(a, n)| ScalarExpr::powi(a, n)),
                inner.clone().prop_map(|a| ScalarExpr::sin(a)),
                inner.clone().prop_map(|a| ScalarExpr::cos(a)),
                // exp of a damped argument to avoid overflow in deep nests
                inner
                    .clone()
                    .prop_map(|a| ScalarExpr::exp(ScalarExpr::mul(ScalarExpr::constant(0.1), a))),
            ]
        })
        .boxed()
    }

    proptest! {
        #[test]
        fn mixed_partials_commute(e in arb_expr(6), i in 0usize..4, j in 0usize..4) {
            let dij = e.partial(i).partial(j);
            let dji = e.partial(j).partial(i);
            let pts = crate::sample::quasirandom_points(&[(-1.0, 1.0); 4], 16, 5);
            for p in &pts {
                let a = dij.eval(p).unwrap();
                let b = dji.eval(p).unwrap();
                let scale = a.abs().max(b.abs()).max(1.0);
                prop_assert!((a - b).abs() / scale < 1e-10);
            }
        }

        #[test]
        fn print_parse_round_trip(e in arb_expr(6)) {
            let chart = chart4();
            let text = e.to_string();
            let back = parse_expr(&text, &chart).unwrap();
            let pts = crate::sample::quasirandom_points(&[(-1.0, 1.0); 4], 100, 9);
            for p in &pts {
                let a = e.eval(p).unwrap();
                let b = back.eval(p).unwrap();
                let scale = a.abs().max(1.0);
                prop_assert!((a - b).abs() / scale < 1e-12, "text {} at {:?}: {} vs {}", text, p, a, b);
            }
        }
    }
}
