//! A small expression language over one complex variable `z`.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = term , { ("+" | "-") , term } ;
//! term    = unary , { ("*" | "/") , unary } ;
//! unary   = ("-" | "+") , unary | power ;
//! power   = primary , [ "^" , unary ] ;          (* right associative *)
//! primary = number , [ "i" ] | "i" | "z" | "pi"
//!         | func , "(" , expr , ")" | "(" , expr , ")" ;
//! func    = "exp" | "log" | "sqrt" | "sin" | "cos" ;
//! number  = digit , { digit } , [ "." , { digit } ] , [ ("e" | "E") , [ "+" | "-" ] , digit , { digit } ] ;
//! ```
//!
//! A number immediately followed by `i` is an imaginary literal (`2i`, `0.5i`).
//! `log` and `sqrt` use principal branches.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Complex64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

fn c(re: f64) -> Expr {
    Expr::Const(Complex64::new(re, 0.0))
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(k) if *k == Complex64::new(v, 0.0))
}

/// Integer exponent if `e` is free of `z` and evaluates to a real integer of moderate size.
fn int_exponent(e: &Expr) -> Option<i32> {
    let k = match e {
        Expr::Const(k) => *k,
        _ if !e.has_var() => e.eval(Complex64::new(0.0, 0.0)).ok()?,
        _ => return None,
    };
    if k.im == 0.0 && k.re.fract() == 0.0 && k.re.abs() <= 1024.0 {
        Some(k.re as i32)
    } else {
        None
    }
}

// Smart constructors with light constant folding so derivatives stay readable.
fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(k) => Expr::Const(-k),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (a, b) if is_const(&a, 0.0) => b,
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) if is_const(&a, 0.0) => neg(b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (a, b) if is_const(&a, 0.0) || is_const(&b, 0.0) => c(0.0),
        (a, b) if is_const(&a, 1.0) => b,
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, b) if is_const(&a, 0.0) && !is_const(&b, 0.0) => c(0.0),
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 0.0) {
        return c(1.0);
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Expr::Pow(Box::new(a), Box::new(b))
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

fn checked(v: Complex64) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval("non-finite value".into()))
    }
}

fn powi(base: Complex64, n: i32) -> Result<Complex64> {
    if n < 0 && base == Complex64::new(0.0, 0.0) {
        return Err(Error::Eval("zero raised to a negative power".into()));
    }
    Ok(ipow(base, n))
}

/// Integer power by repeated squaring.
pub fn ipow(base: Complex64, n: i32) -> Complex64 {
    // repeated squaring keeps small integer powers exact
    let mut acc = Complex64::new(1.0, 0.0);
    let mut b = base;
    let mut e = n.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    if n < 0 {
        acc.inv()
    } else {
        acc
    }
}

impl Expr {
    pub fn has_var(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Var));
        found
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let v = match self {
            Expr::Const(k) => *k,
            Expr::Var => z,
            Expr::Neg(a) => -a.eval(z)?,
            Expr::Add(a, b) => a.eval(z)? + b.eval(z)?,
            Expr::Sub(a, b) => a.eval(z)? - b.eval(z)?,
            Expr::Mul(a, b) => a.eval(z)? * b.eval(z)?,
            Expr::Div(a, b) => {
                let den = b.eval(z)?;
                if den == Complex64::new(0.0, 0.0) {
                    return Err(Error::Eval("division by zero".into()));
                }
                a.eval(z)? / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval(z)?;
                match int_exponent(b) {
                    Some(n) => powi(base, n)?,
                    None => {
                        let e = b.eval(z)?;
                        if base == Complex64::new(0.0, 0.0) {
                            if e.re > 0.0 {
                                Complex64::new(0.0, 0.0)
                            } else {
                                return Err(Error::Eval("0 raised to a non-positive power".into()));
                            }
                        } else {
                            (e * base.ln()).exp()
                        }
                    }
                }
            }
            Expr::Call(f, a) => {
                let w = a.eval(z)?;
                match f {
                    Func::Exp => w.exp(),
                    Func::Log => {
                        if w == Complex64::new(0.0, 0.0) {
                            return Err(Error::Eval("log(0)".into()));
                        }
                        w.ln()
                    }
                    Func::Sqrt => w.sqrt(),
                    Func::Sin => w.sin(),
                    Func::Cos => w.cos(),
                }
            }
        };
        checked(v)
    }

    /// Symbolic derivative with respect to `z`.
    pub fn derivative(&self) -> Expr {
        match self {
            Expr::Const(_) => c(0.0),
            Expr::Var => c(1.0),
            Expr::Neg(a) => neg(a.derivative()),
            Expr::Add(a, b) => add(a.derivative(), b.derivative()),
            Expr::Sub(a, b) => sub(a.derivative(), b.derivative()),
            Expr::Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                ),
                pow((**b).clone(), c(2.0)),
            ),
            Expr::Pow(a, b) => {
                if let Expr::Const(k) = **b {
                    // d(u^k) = k u^(k-1) u'
                    let lowered = Expr::Const(k - 1.0);
                    mul(
                        mul(Expr::Const(k), pow((**a).clone(), lowered)),
                        a.derivative(),
                    )
                } else {
                    // d(u^v) = u^v (v' log u + v u'/u)
                    mul(
                        self.clone(),
                        add(
                            mul(b.derivative(), call(Func::Log, (**a).clone())),
                            div(mul((**b).clone(), a.derivative()), (**a).clone()),
                        ),
                    )
                }
            }
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let da = a.derivative();
                let outer = match f {
                    Func::Exp => call(Func::Exp, inner),
                    Func::Log => div(c(1.0), inner),
                    Func::Sqrt => div(c(0.5), call(Func::Sqrt, inner)),
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                };
                mul(outer, da)
            }
        }
    }

    /// `Some((a, b))` when the expression is exactly `a z + b`.
    pub fn affine(&self) -> Option<(Complex64, Complex64)> {
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Expr::Const(k) => Some((zero, *k)),
            Expr::Var => Some((Complex64::new(1.0, 0.0), zero)),
            Expr::Neg(a) => a.affine().map(|(p, q)| (-p, -q)),
            Expr::Add(a, b) => {
                let (p, q) = a.affine()?;
                let (r, s) = b.affine()?;
                Some((p + r, q + s))
            }
            Expr::Sub(a, b) => {
                let (p, q) = a.affine()?;
                let (r, s) = b.affine()?;
                Some((p - r, q - s))
            }
            Expr::Mul(a, b) => {
                let (p, q) = a.affine()?;
                let (r, s) = b.affine()?;
                if p == zero {
                    Some((q * r, q * s))
                } else if r == zero {
                    Some((p * s, q * s))
                } else {
                    None
                }
            }
            Expr::Div(a, b) => {
                let (p, q) = a.affine()?;
                let (r, s) = b.affine()?;
                if r == zero && s != zero {
                    Some((p / s, q / s))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var => {}
            Expr::Neg(a) | Expr::Call(_, a) => a.visit(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Non-analytic points that can be read off the tree structurally: zeros of
    /// affine arguments of `log`/`sqrt`, affine denominators and affine bases of
    /// negative or non-integer powers. Branch functions also report the
    /// direction of their principal cut.
    pub fn structural_singularities(&self) -> Vec<(Complex64, Option<Complex64>)> {
        let mut out = Vec::new();
        self.visit(&mut |e| match e {
            Expr::Call(Func::Log | Func::Sqrt, arg) => {
                if let Some((a, b)) = arg.affine() {
                    if a.norm() > 0.0 {
                        let dir = -Complex64::new(1.0, 0.0) / a;
                        out.push((-b / a, Some(dir / dir.norm())));
                    }
                }
            }
            Expr::Div(_, den) => {
                if let Some((a, b)) = den.affine() {
                    if a.norm() > 0.0 {
                        out.push((-b / a, None));
                    }
                }
            }
            Expr::Pow(base, ex) => {
                let integral = int_exponent(ex);
                if integral.is_none_or(|n| n < 0) {
                    if let Some((a, b)) = base.affine() {
                        if a.norm() > 0.0 {
                            let ray = if integral.is_none() {
                                let dir = -Complex64::new(1.0, 0.0) / a;
                                Some(dir / dir.norm())
                            } else {
                                None
                            };
                            out.push((-b / a, ray));
                        }
                    }
                }
            }
            _ => {}
        });
        out
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn fmt_real(x: f64) -> String {
    // Display for f64 is the shortest representation that round-trips.
    format!("{x}")
}

fn fmt_const(k: Complex64) -> String {
    if k.im == 0.0 {
        if k.re < 0.0 || (k.re == 0.0 && k.re.is_sign_negative()) {
            format!("({})", fmt_real(k.re))
        } else {
            fmt_real(k.re)
        }
    } else if k.re == 0.0 {
        if k.im < 0.0 {
            format!("(-{}i)", fmt_real(-k.im))
        } else {
            format!("{}i", fmt_real(k.im))
        }
    } else {
        let sign = if k.im < 0.0 { '-' } else { '+' };
        format!("({}{}{}i)", fmt_real(k.re), sign, fmt_real(k.im.abs()))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |e: &Expr, min: u8| -> String {
            if e.precedence() < min {
                format!("({e})")
            } else {
                format!("{e}")
            }
        };
        match self {
            Expr::Const(k) => write!(f, "{}", fmt_const(*k)),
            Expr::Var => write!(f, "z"),
            Expr::Neg(a) => write!(f, "-{}", wrap(a, 4)),
            Expr::Add(a, b) => write!(f, "{} + {}", wrap(a, 1), wrap(b, 2)),
            Expr::Sub(a, b) => write!(f, "{} - {}", wrap(a, 1), wrap(b, 2)),
            Expr::Mul(a, b) => write!(f, "{} * {}", wrap(a, 2), wrap(b, 3)),
            Expr::Div(a, b) => write!(f, "{} / {}", wrap(a, 2), wrap(b, 3)),
            Expr::Pow(a, b) => write!(f, "{}^{}", wrap(a, 5), wrap(b, 4)),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i] as char;
        if ch.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if ch.is_ascii_digit()
            || (ch == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let value: f64 = lit.parse().map_err(|_| Error::Parse {
                position: start,
                message: format!("malformed number '{lit}'"),
            })?;
            let imaginary = i < bytes.len()
                && bytes[i] == b'i'
                && !(i + 1 < bytes.len() && (bytes[i + 1] as char).is_ascii_alphanumeric());
            if imaginary {
                i += 1;
                out.push((Tok::Imag(value), start));
            } else {
                out.push((Tok::Num(value), start));
            }
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
            continue;
        }
        let tok = match ch {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(ch),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                return Err(Error::Parse {
                    position: start,
                    message: format!("unexpected character '{ch}'"),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.here(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
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
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
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
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some((tok, at)) = self.toks.get(self.pos).cloned() else {
            return self.error("unexpected end of expression");
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Const(Complex64::new(v, 0.0))),
            Tok::Imag(v) => Ok(Expr::Const(Complex64::new(0.0, v))),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => self.error("expected ')'"),
                }
            }
            Tok::Ident(name) => match name.as_str() {
                "z" => Ok(Expr::Var),
                "i" => Ok(Expr::Const(Complex64::new(0.0, 1.0))),
                "pi" => Ok(c(std::f64::consts::PI)),
                _ => match Func::from_name(&name) {
                    Some(func) => {
                        if self.peek() != Some(&Tok::LParen) {
                            return self.error(format!("expected '(' after {name}"));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(&Tok::RParen) {
                            return self.error("expected ')'");
                        }
                        self.pos += 1;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                    None => Err(Error::UnknownIdentifier { name, position: at }),
                },
            },
            Tok::Op(op) => Err(Error::Parse {
                position: at,
                message: format!("unexpected operator '{op}'"),
            }),
            Tok::RParen => Err(Error::Parse {
                position: at,
                message: "unexpected ')'".into(),
            }),
        }
    }
}

pub fn parse(text: &str) -> Result<Expr> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.error("trailing input");
    }
    Ok(e)
}
