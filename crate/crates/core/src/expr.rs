//! Small expression language for scalar functions of `x` with exact first and
//! second derivatives.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          exponent must not contain x
//! atom  := number | 'x' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func  := 'exp' | 'log' | 'sqrt' | 'sin' | 'cos'
//! ```
//!
//! Evaluation propagates second-order jets `(f, f', f'')`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Value with first and second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<T> {
    pub v: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Scalar> Jet<T> {
    pub fn constant(v: T) -> Self {
        Jet { v, d1: T::zero(), d2: T::zero() }
    }

    pub fn variable(x: T) -> Self {
        Jet { v: x, d1: T::one(), d2: T::zero() }
    }

    fn add(self, o: Self) -> Self {
        Jet { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }

    fn sub(self, o: Self) -> Self {
        Jet { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2 }
    }

    fn neg(self) -> Self {
        Jet { v: -self.v, d1: -self.d1, d2: -self.d2 }
    }

    fn mul(self, o: Self) -> Self {
        let two = lit::<T>(2.0);
        Jet {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + two * self.d1 * o.d1 + self.v * o.d2,
        }
    }

    /// `g ∘ self` given `g`, `g'`, `g''` at `self.v`.
    pub fn compose(self, g: T, g1: T, g2: T) -> Self {
        Jet { v: g, d1: g1 * self.d1, d2: g2 * self.d1 * self.d1 + g1 * self.d2 }
    }

    fn recip(self) -> Self {
        let r = T::one() / self.v;
        self.compose(r, -r * r, lit::<T>(2.0) * r * r * r)
    }

    fn powc(self, c: T) -> Self {
        let one = T::one();
        let two = lit::<T>(2.0);
        if c == T::zero() {
            return Jet::constant(one);
        }
        if c.fract() == T::zero() && c.abs() <= lit(64.0) {
            let n = c.to_i32().unwrap_or(0);
            let g = self.v.powi(n);
            let g1 = c * self.v.powi(n - 1);
            let g2 = if n == 1 { T::zero() } else { c * (c - one) * self.v.powi(n - 2) };
            return self.compose(g, g1, g2);
        }
        let g = self.v.powf(c);
        self.compose(g, c * self.v.powf(c - one), c * (c - one) * self.v.powf(c - two))
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    fn sin(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.compose(s, c, -s)
    }

    fn cos(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.compose(c, -s, -c)
    }

    fn ln(self) -> Self {
        let r = T::one() / self.v;
        self.compose(self.v.ln(), r, -r * r)
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let half = lit::<T>(0.5);
        self.compose(s, half / s, -lit::<T>(0.25) / (s * self.v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

impl Node {
    fn has_x(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::X => true,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => a.has_x() || b.has_x(),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.has_x(),
        }
    }

    fn jet<T: Scalar>(&self, x: T) -> Jet<T> {
        match self {
            Node::Num(c) => Jet::constant(lit(*c)),
            Node::X => Jet::variable(x),
            Node::Add(a, b) => a.jet(x).add(b.jet(x)),
            Node::Sub(a, b) => a.jet(x).sub(b.jet(x)),
            Node::Mul(a, b) => a.jet(x).mul(b.jet(x)),
            Node::Div(a, b) => a.jet(x).mul(b.jet(x).recip()),
            Node::Neg(a) => a.jet(x).neg(),
            Node::Pow(a, c) => a.jet(x).powc(lit(*c)),
            Node::Call(Func::Exp, a) => a.jet(x).exp(),
            Node::Call(Func::Log, a) => a.jet(x).ln(),
            Node::Call(Func::Sqrt, a) => a.jet(x).sqrt(),
            Node::Call(Func::Sin, a) => a.jet(x).sin(),
            Node::Call(Func::Cos, a) => a.jet(x).cos(),
        }
    }
}

/// A parsed expression in the variable `x`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { s: src.as_bytes(), pos: 0 };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Expr { source: src.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval<T: Scalar>(&self, x: T) -> T {
        self.root.jet(x).v
    }

    pub fn jet<T: Scalar>(&self, x: T) -> Jet<T> {
        self.root.jet(x)
    }
}

/// A function of one variable that can report its second-order jet.
pub trait Smooth<T: Scalar>: Send + Sync {
    fn jet(&self, x: T) -> Jet<T>;

    fn value(&self, x: T) -> T {
        self.jet(x).v
    }
}

impl<T: Scalar> Smooth<T> for Expr {
    fn jet(&self, x: T) -> Jet<T> {
        self.root.jet(x)
    }
}

impl FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { offset: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let at = self.pos;
            let exponent = self.unary()?;
            if exponent.has_x() {
                return Err(Error::Parse { offset: at, msg: "exponent must not depend on x".into() });
            }
            let c = exponent.jet::<f64>(0.0).v;
            return Ok(Node::Pow(Box::new(base), c));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                let func = match word {
                    "x" => return Ok(Node::X),
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    "sqrt" => Func::Sqrt,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    _ => {
                        self.pos = start;
                        return Err(self.err(&format!("unknown identifier `{}`", word)));
                    }
                };
                if !self.eat(b'(') {
                    return Err(self.err("expected '(' after function name"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.s;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(&mut self.pos);
            if self.pos == exp_start {
                // `2exp(x)` style input is not supported; treat as a syntax error later
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map(Node::Num).map_err(|_| Error::Parse { offset: start, msg: format!("bad number `{}`", text) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn precedence_and_values() {
        let e = Expr::parse("1 + 2*x^2 - x/4").unwrap();
        assert!(close(e.eval(2.0), 1.0 + 8.0 - 0.5));
        let e = Expr::parse("-x^2").unwrap();
        assert!(close(e.eval(3.0), -9.0));
        let e = Expr::parse("2^-1 * x").unwrap();
        assert!(close(e.eval(3.0), 1.5));
        let e = Expr::parse("1.5e-1 + pi").unwrap();
        assert!(close(e.eval(0.0), 0.15 + std::f64::consts::PI));
    }

    #[test]
    fn jets_match_calculus() {
        let e = Expr::parse("exp(x) * x^3").unwrap();
        let x = 0.7f64;
        let j = e.jet(x);
        let ex = x.exp();
        assert!(close(j.v, ex * x.powi(3)));
        assert!(close(j.d1, ex * (x.powi(3) + 3.0 * x * x)));
        assert!(close(j.d2, ex * (x.powi(3) + 6.0 * x * x + 6.0 * x)));
        let e = Expr::parse("sqrt(1 + x^2) / log(2 + x)").unwrap();
        let h = 1e-4;
        let fd1 = (e.eval(x + h) - e.eval(x - h)) / (2.0 * h);
        let fd2 = (e.eval(x + h) - 2.0 * e.eval(x) + e.eval(x - h)) / (h * h);
        let j = e.jet(x);
        assert!((j.d1 - fd1).abs() < 1e-7 && (j.d2 - fd2).abs() < 1e-5);
    }

    #[test]
    fn trig_jets() {
        let j = Expr::parse("2*x + sin(x) - cos(2*x)").unwrap().jet(0.4f64);
        assert!(close(j.v, 0.8 + 0.4f64.sin() - 0.8f64.cos()));
        assert!(close(j.d1, 2.0 + 0.4f64.cos() + 2.0 * 0.8f64.sin()));
        assert!(close(j.d2, -0.4f64.sin() + 4.0 * 0.8f64.cos()));
    }

    #[test]
    fn integer_powers_of_negative_base() {
        let j = Expr::parse("x^3").unwrap().jet(-2.0f64);
        assert_eq!((j.v, j.d1, j.d2), (-8.0, 12.0, -12.0));
    }

    #[test]
    fn parse_errors_report_offset() {
        assert!(matches!(Expr::parse("x^x"), Err(Error::Parse { offset: 2, .. })));
        assert!(matches!(Expr::parse("tan(x)"), Err(Error::Parse { offset: 0, .. })));
        assert!(Expr::parse("(x + 1").is_err());
        assert!(Expr::parse("x x").is_err());
        assert!(Expr::parse("").is_err());
    }

    #[test]
    fn serde_as_string() {
        let e: Expr = serde_json::from_str("\"exp(-x)\"").unwrap();
        assert!(close(e.eval(1.0), (-1.0f64).exp()));
        assert_eq!(serde_json::to_string(&e).unwrap(), "\"exp(-x)\"");
    }
}
