//! Numeric backends for rate evaluation.
//!
//! Everything in the expression language is closed over the rationals, so
//! each rate can be evaluated either in `f64` or exactly in [`BigRational`].

use std::cmp::Ordering;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Arithmetic needed by the evaluator.
pub trait Scalar: Clone + Debug + PartialOrd + Send + Sync {
    fn zero() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_ratio(r: &BigRational) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    /// `None` on division by zero.
    fn div(&self, o: &Self) -> Option<Self>;
    fn neg(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_negative(&self) -> bool;
    /// `Some(n)` when the value is an integer that fits in `i32`.
    fn as_i32(&self) -> Option<i32>;
    fn to_f64(&self) -> f64;

    fn one() -> Self {
        Self::from_i64(1)
    }

    fn powi(&self, n: i32) -> Option<Self> {
        let mut acc = Self::one();
        for _ in 0..n.unsigned_abs() {
            acc = acc.mul(self);
        }
        if n < 0 {
            Self::one().div(&acc)
        } else {
            Some(acc)
        }
    }

    fn min_of(&self, o: &Self) -> Self {
        if o < self {
            o.clone()
        } else {
            self.clone()
        }
    }

    fn max_of(&self, o: &Self) -> Self {
        if o > self {
            o.clone()
        } else {
            self.clone()
        }
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(r: &BigRational) -> Self {
        ratio_to_f64(r)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Option<Self> {
        (*o != 0.0).then(|| self / o)
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_negative(&self) -> bool {
        *self < 0.0
    }
    fn as_i32(&self) -> Option<i32> {
        (self.fract() == 0.0 && self.abs() <= i32::MAX as f64).then_some(*self as i32)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn powi(&self, n: i32) -> Option<Self> {
        if *self == 0.0 && n < 0 {
            None
        } else {
            Some(f64::powi(*self, n))
        }
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(r: &BigRational) -> Self {
        r.clone()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Option<Self> {
        (!Zero::is_zero(o)).then(|| self / o)
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn as_i32(&self) -> Option<i32> {
        if self.is_integer() {
            self.to_integer().to_i32()
        } else {
            None
        }
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
}

/// Nearest `f64` to an exact rational (via the decimal-free route in num).
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    ToPrimitive::to_f64(r).unwrap_or_else(|| {
        if Signed::is_negative(r) {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Parse a decimal literal such as `12`, `0.25` or `1.5e-3` exactly.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(digits);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

/// Parse `p/q`, a decimal, or an integer exactly.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p = parse_decimal(p.trim())?;
            let q = parse_decimal(q.trim())?;
            (!Zero::is_zero(&q)).then(|| p / q)
        }
        None => parse_decimal(s),
    }
}

/// Exact rational for a finite `f64`, taken from its shortest round-trip
/// decimal so that `0.1` becomes `1/10`.
pub fn rational_from_f64(v: f64) -> Option<BigRational> {
    v.is_finite().then(|| parse_decimal(&format!("{v:e}")))?
}

/// Decimal expansion if the denominator only has factors 2 and 5.
pub fn terminating_decimal(r: &BigRational) -> Option<String> {
    let mut q = r.denom().clone();
    let (two, five) = (BigInt::from(2), BigInt::from(5));
    let (mut a, mut b) = (0usize, 0usize);
    while (&q % &two).is_zero() {
        q /= &two;
        a += 1;
    }
    while (&q % &five).is_zero() {
        q /= &five;
        b += 1;
    }
    if !q.is_one() {
        return None;
    }
    let places = a.max(b);
    if places == 0 {
        return Some(r.numer().to_string());
    }
    let scaled = (r * BigRational::from_integer(num_traits::pow(BigInt::from(10), places)))
        .to_integer();
    let neg = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = format!("{digits:0>width$}", width = places + 1);
    let (int, frac) = digits.split_at(digits.len() - places);
    Some(format!("{}{int}.{frac}", if neg { "-" } else { "" }))
}

/// Comparison of computed rates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// Exact rational comparison.
    Exact,
    /// `a <= b` accepted when `a - b <= max(abs, rel * max(|a|, |b|))`.
    Float { rel: f64, abs: f64 },
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Float { rel: 1e-9, abs: 1e-12 }
    }
}

impl Tolerance {
    pub fn le(&self, a: f64, b: f64) -> bool {
        match *self {
            Tolerance::Exact => a <= b,
            Tolerance::Float { rel, abs } => a - b <= abs.max(rel * a.abs().max(b.abs())),
        }
    }

    pub fn le_exact(&self, a: &BigRational, b: &BigRational) -> bool {
        a.cmp(b) != Ordering::Greater
    }
}
