//! Small arithmetic expression language for coefficient functions.
//!
//! Grammar (usual precedence, `^` right-associative):
//! `expr := term (('+'|'-') term)*`, `term := unary (('*'|'/') unary)*`,
//! `unary := '-' unary | power`, `power := atom ('^' unary)?`,
//! `atom := number | 'pi' | var | func '(' expr ')' | '(' expr ')'`.
//! Variables are `x1, x2, ...` (1-based spatial coordinates); functions are
//! `sin, cos, exp, ln, sqrt`.

use crate::error::{DbvpError, Result};
use crate::jet::Jet;
use num_complex::Complex64 as C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

/// Parsed expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    nvars: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> DbvpError {
        DbvpError::Config(format!(
            "expression '{}': {} at column {}",
            String::from_utf8_lossy(self.s),
            msg,
            self.pos + 1
        ))
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
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }
    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let e = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(e)));
        }
        Ok(base)
    }
    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len()
                    && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                if self.pos < self.s.len() && (self.s[self.pos] == b'e' || self.s[self.pos] == b'E') {
                    let save = self.pos;
                    self.pos += 1;
                    if self.pos < self.s.len() && (self.s[self.pos] == b'+' || self.s[self.pos] == b'-') {
                        self.pos += 1;
                    }
                    if self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    } else {
                        self.pos = save;
                    }
                }
                let txt = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                txt.parse::<f64>().map(Expr::Num).map_err(|_| self.err("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                let func = match name {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "ln" => Some(Func::Ln),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    if !self.eat(b'(') {
                        return Err(self.err("expected '(' after function name"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 && k <= self.nvars {
                            return Ok(Expr::Var(k - 1));
                        }
                        return Err(self.err(&format!("variable {name} out of range (n = {})", self.nvars)));
                    }
                }
                Err(self.err(&format!("unknown identifier '{name}'")))
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }
}

impl Expr {
    /// Parse `src` allowing variables `x1..x{nvars}`.
    pub fn parse(src: &str, nvars: usize) -> Result<Expr> {
        let mut p = Parser { s: src.as_bytes(), pos: 0, nvars };
        let e = p.expr()?;
        if p.peek().is_some() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Whether the expression depends on variable index `var` (0-based).
    pub fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(k) => *k == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    /// Constant value if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if (0..64).any(|v| self.depends_on(v)) {
            None
        } else {
            Some(self.eval(&[]))
        }
    }

    /// Real evaluation at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(k) => x[*k],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match b.as_integer() {
                    Some(n) => base.powi(n),
                    None => base.powf(b.eval(x)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    fn as_integer(&self) -> Option<i32> {
        match self {
            Expr::Num(v) if v.fract() == 0.0 && v.abs() < 64.0 => Some(*v as i32),
            Expr::Neg(a) => a.as_integer().map(|n| -n),
            _ => None,
        }
    }

    /// Jet evaluation: `x[k]` is the jet of coordinate k.
    pub fn eval_jet(&self, x: &[Jet]) -> Jet {
        let proto = &x[0];
        let c = |v: f64| Jet::constant(proto.nvars(), proto.order(), C64::new(v, 0.0));
        match self {
            Expr::Num(v) => c(*v),
            Expr::Var(k) => x[*k].clone(),
            Expr::Neg(a) => -a.eval_jet(x),
            Expr::Add(a, b) => &a.eval_jet(x) + &b.eval_jet(x),
            Expr::Sub(a, b) => &a.eval_jet(x) - &b.eval_jet(x),
            Expr::Mul(a, b) => &a.eval_jet(x) * &b.eval_jet(x),
            Expr::Div(a, b) => a.eval_jet(x).div(&b.eval_jet(x)),
            Expr::Pow(a, b) => {
                let base = a.eval_jet(x);
                match b.as_integer() {
                    Some(n) if n >= 0 => base.powi(n as u32),
                    Some(n) => base.powi((-n) as u32).recip(),
                    None => match b.as_constant() {
                        Some(p) => base.powf(p),
                        None => (&b.eval_jet(x) * &base.ln()).exp(),
                    },
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_jet(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }
}
