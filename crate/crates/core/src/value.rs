//! Numbers and literal values.
//!
//! `Num` keeps literals exact (big rationals) and only degrades to `f64`
//! when a floating-point operand enters the computation (normal samples,
//! `real(..)` literals). Equality, ordering and hashing on `Num` and `Value`
//! are *structural*: `Rat(1/2)` and `Real(0.5)` are distinct keys. Numeric
//! comparison across the two representations goes through [`Num::cmp_num`].

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite floating-point result")]
    NonFinite,
    #[error("malformed number literal `{0}`")]
    BadLiteral(String),
}

#[derive(Debug, Clone)]
pub enum Num {
    Rat(BigRational),
    Real(f64),
}

impl Num {
    pub fn zero() -> Self {
        Num::Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Num::Rat(BigRational::one())
    }

    pub fn int(v: i64) -> Self {
        Num::Rat(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Num::Rat(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn real(v: f64) -> Self {
        Num::Real(v)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Num::Rat(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Rat(r) => rat_to_f64(r),
            Num::Real(v) => *v,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Rat(r) => r.is_zero(),
            Num::Real(v) => *v == 0.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Num::Rat(r) => r.is_negative(),
            Num::Real(v) => *v < 0.0,
        }
    }

    pub fn is_integer(&self) -> bool {
        match self {
            Num::Rat(r) => r.is_integer(),
            Num::Real(v) => v.fract() == 0.0,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Num::Rat(r) => Some(r),
            Num::Real(_) => None,
        }
    }

    fn real_checked(v: f64) -> Result<Num, NumError> {
        if v.is_finite() {
            Ok(Num::Real(v))
        } else {
            Err(NumError::NonFinite)
        }
    }

    pub fn add(&self, o: &Num) -> Result<Num, NumError> {
        match (self, o) {
            (Num::Rat(a), Num::Rat(b)) => Ok(Num::Rat(a + b)),
            _ => Num::real_checked(self.to_f64() + o.to_f64()),
        }
    }

    pub fn sub(&self, o: &Num) -> Result<Num, NumError> {
        match (self, o) {
            (Num::Rat(a), Num::Rat(b)) => Ok(Num::Rat(a - b)),
            _ => Num::real_checked(self.to_f64() - o.to_f64()),
        }
    }

    pub fn mul(&self, o: &Num) -> Result<Num, NumError> {
        match (self, o) {
            (Num::Rat(a), Num::Rat(b)) => Ok(Num::Rat(a * b)),
            _ => Num::real_checked(self.to_f64() * o.to_f64()),
        }
    }

    pub fn div(&self, o: &Num) -> Result<Num, NumError> {
        if o.is_zero() {
            return Err(NumError::DivisionByZero);
        }
        match (self, o) {
            (Num::Rat(a), Num::Rat(b)) => Ok(Num::Rat(a / b)),
            _ => Num::real_checked(self.to_f64() / o.to_f64()),
        }
    }

    pub fn neg(&self) -> Num {
        match self {
            Num::Rat(a) => Num::Rat(-a),
            Num::Real(v) => Num::Real(-v),
        }
    }

    /// Numeric comparison; mixes exact and floating operands through `f64`.
    pub fn cmp_num(&self, o: &Num) -> Ordering {
        match (self, o) {
            (Num::Rat(a), Num::Rat(b)) => a.cmp(b),
            _ => self.to_f64().total_cmp(&o.to_f64()),
        }
    }

    pub fn num_eq(&self, o: &Num) -> bool {
        self.cmp_num(o) == Ordering::Equal
    }

    /// Sum of an iterator, staying exact while every term is exact.
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a Num>) -> Num {
        let mut exact = BigRational::zero();
        let mut real: Option<f64> = None;
        for n in items {
            match (n, real.as_mut()) {
                (Num::Rat(r), None) => exact += r,
                (n, Some(acc)) => *acc += n.to_f64(),
                (Num::Real(v), None) => real = Some(rat_to_f64(&exact) + v),
            }
        }
        match real {
            Some(v) => Num::Real(v),
            None => Num::Rat(exact),
        }
    }

    /// Parse a decimal literal (`12`, `0.95`, `1.5e-3`) as an exact rational.
    pub fn parse_decimal(text: &str) -> Result<Num, NumError> {
        let bad = || NumError::BadLiteral(text.to_string());
        let (mantissa, exp) = match text.find(['e', 'E']) {
            Some(i) => (&text[..i], text[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (text, 0),
        };
        let (neg, mantissa) = match mantissa.strip_prefix('-') {
            Some(m) => (true, m),
            None => (false, mantissa),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let mut numer = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad())?;
        if neg {
            numer = -numer;
        }
        let scale = exp - frac_part.len() as i32;
        let ten = BigInt::from(10);
        let r = if scale >= 0 {
            BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
        };
        Ok(Num::Rat(r))
    }

    /// Decimal rendering if the rational terminates in base ten.
    pub fn terminating_decimal(r: &BigRational) -> Option<String> {
        let mut d = r.denom().clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let (mut twos, mut fives) = (0usize, 0usize);
        while d.is_even() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if !d.is_one() {
            return None;
        }
        let places = twos.max(fives);
        let scaled = r * BigRational::from_integer(num_traits::pow(BigInt::from(10), places));
        let n = scaled.to_integer();
        let neg = n.is_negative();
        let digits = n.abs().to_string();
        if places == 0 {
            return Some(if neg { format!("-{digits}") } else { digits });
        }
        let padded = format!("{digits:0>width$}", width = places + 1);
        let (i, f) = padded.split_at(padded.len() - places);
        Some(format!("{}{i}.{f}", if neg { "-" } else { "" }))
    }
}

fn rat_to_f64(r: &BigRational) -> f64 {
    // both parts exact in f64: a single correctly rounded division
    const EXACT: i64 = 1 << 53;
    if let (Some(n), Some(d)) = (r.numer().to_i64(), r.denom().to_i64()) {
        if n.unsigned_abs() <= EXACT as u64 && d <= EXACT {
            return n as f64 / d as f64;
        }
    }
    r.to_f64().unwrap_or_else(|| {
        // numerator/denominator beyond f64 range individually
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

impl From<i64> for Num {
    fn from(v: i64) -> Self {
        Num::int(v)
    }
}

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Num {}

impl PartialOrd for Num {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Num {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => a.cmp(b),
            (Num::Real(a), Num::Real(b)) => a.total_cmp(b),
            (Num::Rat(_), Num::Real(_)) => self
                .to_f64()
                .total_cmp(&other.to_f64())
                .then(Ordering::Less),
            (Num::Real(_), Num::Rat(_)) => self
                .to_f64()
                .total_cmp(&other.to_f64())
                .then(Ordering::Greater),
        }
    }
}

impl Hash for Num {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Num::Rat(r) => {
                0u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
            Num::Real(v) => {
                1u8.hash(state);
                v.to_bits().hash(state);
            }
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Rat(r) => match Num::terminating_decimal(r) {
                Some(s) => f.write_str(&s),
                None => write!(f, "{}/{}", r.numer(), r.denom()),
            },
            Num::Real(v) => write!(f, "{v:?}"),
        }
    }
}

/// A literal value a variable can hold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Num(Num),
    /// Member of a named finite enumeration, e.g. `red`.
    Sym(String),
}

impl Value {
    pub fn int(v: i64) -> Self {
        Value::Num(Num::int(v))
    }

    pub fn sym(s: impl Into<String>) -> Self {
        Value::Sym(s.into())
    }

    pub fn as_num(&self) -> Option<&Num> {
        match self {
            Value::Num(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Num(_) => "number",
            Value::Sym(_) => "symbol",
        }
    }

    /// Semantic equality used by the `=` operator: numbers compare by value.
    pub fn semantic_eq(&self, other: &Value) -> Option<bool> {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => Some(a.num_eq(b)),
            (Value::Bool(a), Value::Bool(b)) => Some(a == b),
            (Value::Sym(a), Value::Sym(b)) => Some(a == b),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Sym(s) => serde_json::Value::String(s.clone()),
            Value::Num(n) => serde_json::json!(n.to_f64()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Num(n) => write!(f, "{n}"),
            Value::Sym(s) => f.write_str(s),
        }
    }
}
