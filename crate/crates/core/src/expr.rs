//! Propensity expressions.
//!
//! Grammar (usual precedence, `^` binds tightest and is right associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | x<i> | name | min(e, e) | max(e, e) | hill(e, e, e) | '(' expr ')'
//! ```
//!
//! `x1..xd` are species counts, other names are parameters. Exponents and
//! the Hill coefficient must evaluate to integers so that every expression
//! stays rational. Predicates compare two expressions and combine with
//! `&&` / `||`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::scalar::{terminating_decimal, Scalar};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Min,
    Max,
    Hill,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Hill => "hill",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Hill => 3,
        }
    }
}

/// Parsed expression. `Var(i)` is the 0-based species index.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(BigRational),
    Var(usize),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, Error> {
        let mut p = Parser::new(src)?;
        let e = p.expr()?;
        p.expect_end()?;
        Ok(e)
    }

    pub fn num(v: i64) -> Expr {
        Expr::Num(BigRational::from_integer(v.into()))
    }

    pub fn param(name: &str) -> Expr {
        Expr::Param(name.to_string())
    }

    /// Largest species index referenced, plus one.
    pub fn var_bound(&self) -> usize {
        let mut m = 0;
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                m = m.max(i + 1);
            }
        });
        m
    }

    pub fn params(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Param(p) = e {
                if !out.contains(p) {
                    out.push(p.clone());
                }
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Param(_) => {}
            Expr::Neg(a) => a.visit(f),
            Expr::Bin(_, a, b) | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit(f)),
        }
    }

    /// Substitute parameter values, folding constant subtrees.
    pub fn bind<S: Scalar>(
        &self,
        params: &BTreeMap<String, BigRational>,
    ) -> Result<Bound<S>, Error> {
        let b = match self {
            Expr::Num(r) => Bound::Const(S::from_ratio(r)),
            Expr::Var(i) => Bound::Var(*i),
            Expr::Param(p) => {
                let v = params
                    .get(p)
                    .ok_or_else(|| Error::Validation(format!("unknown parameter `{p}`")))?;
                Bound::Const(S::from_ratio(v))
            }
            Expr::Neg(a) => Bound::Neg(Box::new(a.bind(params)?)),
            Expr::Bin(op, a, b) => Bound::Bin(*op, Box::new(a.bind(params)?), Box::new(b.bind(params)?)),
            Expr::Pow(a, b) => Bound::Pow(Box::new(a.bind(params)?), Box::new(b.bind(params)?)),
            Expr::Call(f, args) => Bound::Call(
                *f,
                args.iter().map(|a| a.bind(params)).collect::<Result<_, _>>()?,
            ),
        };
        Ok(b.fold())
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(r) => match terminating_decimal(r) {
                Some(s) => f.write_str(&s),
                None => write!(f, "({}/{})", r.numer(), r.denom()),
            },
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Param(p) => f.write_str(p),
            Expr::Neg(a) => {
                f.write_str("-")?;
                paren(f, a, a.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                paren(f, a, a.precedence() < p)?;
                f.write_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                })?;
                paren(f, b, b.precedence() <= p)
            }
            Expr::Pow(a, b) => {
                paren(f, a, a.precedence() <= 4)?;
                f.write_str("^")?;
                paren(f, b, b.precedence() < 3)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Expression with parameters substituted.
#[derive(Debug, Clone, PartialEq)]
pub enum Bound<S> {
    Const(S),
    Var(usize),
    Neg(Box<Bound<S>>),
    Bin(BinOp, Box<Bound<S>>, Box<Bound<S>>),
    Pow(Box<Bound<S>>, Box<Bound<S>>),
    Call(Func, Vec<Bound<S>>),
}

impl<S: Scalar> Bound<S> {
    fn fold(self) -> Self {
        let all_const = match &self {
            Bound::Const(_) | Bound::Var(_) => false,
            Bound::Neg(a) => matches!(**a, Bound::Const(_)),
            Bound::Bin(_, a, b) | Bound::Pow(a, b) => {
                matches!(**a, Bound::Const(_)) && matches!(**b, Bound::Const(_))
            }
            Bound::Call(_, args) => args.iter().all(|a| matches!(a, Bound::Const(_))),
        };
        if all_const {
            if let Ok(v) = self.eval(&[]) {
                return Bound::Const(v);
            }
        }
        self
    }

    pub fn as_const(&self) -> Option<&S> {
        match self {
            Bound::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[i64]) -> Result<S, Error> {
        Ok(match self {
            Bound::Const(v) => v.clone(),
            Bound::Var(i) => S::from_i64(*x.get(*i).ok_or_else(|| {
                Error::Evaluation(format!("x{} is out of range for a state of length {}", i + 1, x.len()))
            })?),
            Bound::Neg(a) => a.eval(x)?.neg(),
            Bound::Bin(op, a, b) => {
                let (a, b) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a
                        .div(&b)
                        .ok_or_else(|| Error::Evaluation("division by zero".into()))?,
                }
            }
            Bound::Pow(a, b) => {
                let n = integer(&b.eval(x)?, "exponent")?;
                a.eval(x)?
                    .powi(n)
                    .ok_or_else(|| Error::Evaluation("zero raised to a negative power".into()))?
            }
            Bound::Call(f, args) => {
                let v: Vec<S> = args.iter().map(|a| a.eval(x)).collect::<Result<_, _>>()?;
                match f {
                    Func::Min => v[0].min_of(&v[1]),
                    Func::Max => v[0].max_of(&v[1]),
                    Func::Hill => {
                        let n = integer(&v[2], "Hill coefficient")?;
                        let err = || Error::Evaluation("hill() is undefined here".into());
                        let xn = v[0].powi(n).ok_or_else(err)?;
                        let kn = v[1].powi(n).ok_or_else(err)?;
                        xn.div(&kn.add(&xn)).ok_or_else(err)?
                    }
                }
            }
        })
    }
}

fn integer<S: Scalar>(v: &S, what: &str) -> Result<i32, Error> {
    v.as_i32()
        .ok_or_else(|| Error::Evaluation(format!("{what} must be an integer, got {v:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

/// Boolean condition on a state, used for target sets such as `x2>=3`.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Cmp(CmpOp, Expr, Expr),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn parse(src: &str) -> Result<Predicate, Error> {
        let mut p = Parser::new(src)?;
        let e = p.predicate()?;
        p.expect_end()?;
        Ok(e)
    }

    /// Evaluate exactly. Parameters are not allowed in predicates.
    pub fn holds(&self, x: &[i64]) -> Result<bool, Error> {
        let empty = BTreeMap::new();
        Ok(match self {
            Predicate::Cmp(op, a, b) => {
                let a: BigRational = a.bind(&empty)?.eval(x)?;
                let b: BigRational = b.bind(&empty)?.eval(x)?;
                match op {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                }
            }
            Predicate::And(a, b) => a.holds(x)? && b.holds(x)?,
            Predicate::Or(a, b) => a.holds(x)? || b.holds(x)?,
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cmp(op, a, b) => {
                let op = match op {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Gt => ">",
                    CmpOp::Ge => ">=",
                    CmpOp::Eq => "==",
                    CmpOp::Ne => "!=",
                };
                write!(f, "{a} {op} {b}")
            }
            Predicate::And(a, b) => {
                let wrap = |p: &Predicate| matches!(p, Predicate::Or(..));
                write_pred(f, a, wrap(a))?;
                f.write_str(" && ")?;
                write_pred(f, b, !matches!(**b, Predicate::Cmp(..)))
            }
            Predicate::Or(a, b) => {
                write_pred(f, a, false)?;
                f.write_str(" || ")?;
                write_pred(f, b, matches!(**b, Predicate::Or(..)))
            }
        }
    }
}

fn write_pred(f: &mut fmt::Formatter<'_>, p: &Predicate, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({p})")
    } else {
        write!(f, "{p}")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(&'static str),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

fn parse_err(column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line: 1, column, message: message.into() }
}

impl Parser {
    fn new(src: &str) -> Result<Self, Error> {
        const OPS: [&str; 16] = [
            "&&", "||", "<=", ">=", "==", "!=", "<", ">", "+", "-", "*", "/", "^", "(", ")", ",",
        ];
        let chars: Vec<char> = src.chars().collect();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j], '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = crate::scalar::parse_decimal(&text)
                    .ok_or_else(|| parse_err(col, format!("bad number `{text}`")))?;
                toks.push((Tok::Num(v), col));
            } else if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            } else {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let op = OPS
                    .iter()
                    .find(|op| rest.starts_with(**op))
                    .ok_or_else(|| parse_err(col, format!("unexpected character `{c}`")))?;
                i += op.len();
                toks.push((Tok::Op(op), col));
            }
        }
        Ok(Parser { toks, pos: 0, end: chars.len() + 1 })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn eat(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: &str) -> Result<(), Error> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(parse_err(self.col(), format!("expected `{op}`")))
        }
    }

    fn expect_end(&self) -> Result<(), Error> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(parse_err(self.col(), "unexpected trailing input")),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, Error> {
        let mut lhs = self.conjunction()?;
        while self.eat("||") {
            lhs = Predicate::Or(Box::new(lhs), Box::new(self.conjunction()?));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Predicate, Error> {
        let mut lhs = self.comparison()?;
        while self.eat("&&") {
            lhs = Predicate::And(Box::new(lhs), Box::new(self.comparison()?));
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<Predicate, Error> {
        if matches!(self.peek(), Some(Tok::Op("("))) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(p) = self.predicate() {
                if self.eat(")") {
                    return Ok(p);
                }
            }
            self.pos = save;
        }
        let a = self.expr()?;
        let op = match self.peek() {
            Some(Tok::Op("<")) => CmpOp::Lt,
            Some(Tok::Op("<=")) => CmpOp::Le,
            Some(Tok::Op(">")) => CmpOp::Gt,
            Some(Tok::Op(">=")) => CmpOp::Ge,
            Some(Tok::Op("==")) => CmpOp::Eq,
            Some(Tok::Op("!=")) => CmpOp::Ne,
            _ => return Err(parse_err(self.col(), "expected a comparison operator")),
        };
        self.pos += 1;
        Ok(Predicate::Cmp(op, a, self.expr()?))
    }

    fn expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, Error> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat("^") {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, Error> {
        let col = self.col();
        let tok = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        match tok {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Op("(")) => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let func = match name.as_str() {
                    "min" => Some(Func::Min),
                    "max" => Some(Func::Max),
                    "hill" => Some(Func::Hill),
                    _ => None,
                };
                if let Some(func) = func {
                    if self.eat("(") {
                        let mut args = vec![self.expr()?];
                        while self.eat(",") {
                            args.push(self.expr()?);
                        }
                        self.expect(")")?;
                        if args.len() != func.arity() {
                            return Err(parse_err(
                                col,
                                format!("{} takes {} arguments", func.name(), func.arity()),
                            ));
                        }
                        return Ok(Expr::Call(func, args));
                    }
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx == 0 {
                        return Err(parse_err(col, "species are numbered from x1"));
                    }
                    return Ok(Expr::Var(idx - 1));
                }
                Ok(Expr::Param(name))
            }
            Some(Tok::Op(op)) => Err(parse_err(col, format!("unexpected `{op}`"))),
            None => Err(parse_err(col, "unexpected end of expression")),
        }
    }
}
