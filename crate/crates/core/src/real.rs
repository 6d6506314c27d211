//! Real scalars: exact sums of rational multiples of square roots, symbolic
//! constants such as `e^-3`, and the adaptive precision policy that decides
//! comparisons between them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::{Dyadic, Interval};
use crate::error::{Error, Result};

pub const CAP_ENV: &str = "MULTAPPROX_PREC_CAP";
pub const DEFAULT_CAP: u32 = 16384;
pub const START_BITS: u32 = 128;

/// Precision schedule: start at 128 bits and double until the cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Precision {
    start: u32,
    cap: u32,
}

impl Precision {
    pub fn new(start: u32, cap: u32) -> Self {
        let cap = cap.max(64);
        Precision { start: start.clamp(64, cap), cap }
    }

    /// Reads the cap from `MULTAPPROX_PREC_CAP`, once per process.
    pub fn from_env() -> Self {
        static CAP: OnceLock<u32> = OnceLock::new();
        let cap = *CAP.get_or_init(|| {
            std::env::var(CAP_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .unwrap_or(DEFAULT_CAP)
        });
        Self::new(START_BITS, cap)
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    /// Runs `f` at increasing precision while it reports [`Error::Indeterminate`].
    pub fn refine<T>(&self, context: &str, mut f: impl FnMut(u32) -> Result<T>) -> Result<T> {
        let mut bits = self.start;
        loop {
            match f(bits) {
                Err(Error::Indeterminate) => {
                    if bits >= self.cap {
                        return Err(Error::PrecisionExhausted { bits, context: context.to_string() });
                    }
                    bits = bits.saturating_mul(2).min(self.cap);
                }
                other => return other,
            }
        }
    }
}

impl Default for Precision {
    fn default() -> Self {
        Self::from_env()
    }
}

/// Turn a certified comparison into a refinement signal.
pub fn decided(v: Option<bool>) -> Result<bool> {
    v.ok_or(Error::Indeterminate)
}

const TRIAL_LIMIT: u64 = 1_000_000;

/// Writes `n = s²·r` with `r` squarefree.
pub fn squarefree_decompose(n: &BigInt) -> Result<(BigInt, BigInt)> {
    if n.is_negative() {
        return Err(Error::Invalid(format!("negative radicand {n}")));
    }
    if n.is_zero() {
        return Ok((BigInt::zero(), BigInt::zero()));
    }
    let mut rest = n.clone();
    let mut square = BigInt::one();
    let mut core = BigInt::one();
    let mut p = 2u64;
    while p <= TRIAL_LIMIT {
        let bp = BigInt::from(p);
        if &bp * &bp > rest {
            break;
        }
        let mut e = 0;
        while (&rest % &bp).is_zero() {
            rest /= &bp;
            e += 1;
        }
        for _ in 0..e / 2 {
            square *= &bp;
        }
        if e % 2 == 1 {
            core *= &bp;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if rest > BigInt::one() {
        let bound = BigInt::from(TRIAL_LIMIT);
        let r = rest.sqrt();
        if &r * &r == rest {
            square *= r;
        } else if rest > &bound * &bound * &bound {
            return Err(Error::Invalid(format!("radicand {n} too large to factor")));
        } else {
            // every prime factor of `rest` exceeds the trial bound, so at most two remain
            core *= rest;
        }
    }
    Ok((square, core))
}

fn smallest_factor(n: &BigInt) -> BigInt {
    let mut p = 2u64;
    while p <= TRIAL_LIMIT {
        let bp = BigInt::from(p);
        if &bp * &bp > *n {
            break;
        }
        if (n % &bp).is_zero() {
            return bp;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    n.clone()
}

/// Exact element `Σ r_D·√D` of a multi-quadratic field; `D` runs over
/// squarefree positive integers and `D = 1` holds the rational part.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Surd {
    terms: BTreeMap<BigInt, BigRational>,
}

impl Surd {
    pub fn zero() -> Self {
        Surd::default()
    }

    pub fn from_rational(r: BigRational) -> Self {
        let mut s = Surd::zero();
        s.push(BigInt::one(), r);
        s
    }

    pub fn from_int<T: Into<BigInt>>(v: T) -> Self {
        Self::from_rational(BigRational::from_integer(v.into()))
    }

    /// `(a + b√d)/c`.
    pub fn quad(a: BigInt, b: BigInt, c: BigInt, d: BigInt) -> Result<Self> {
        if c.is_zero() {
            return Err(Error::Invalid("zero denominator".into()));
        }
        let (square, core) = squarefree_decompose(&d)?;
        let mut s = Surd::from_rational(BigRational::new(a, c.clone()));
        if !core.is_zero() {
            s.push(core, BigRational::new(b * square, c));
        }
        Ok(s)
    }

    /// `√n` for a non-negative integer.
    pub fn sqrt_int(n: &BigInt) -> Result<Self> {
        Self::quad(BigInt::zero(), BigInt::one(), BigInt::one(), n.clone())
    }

    fn push(&mut self, radicand: BigInt, coef: BigRational) {
        if coef.is_zero() {
            return;
        }
        let entry = self.terms.entry(radicand.clone()).or_insert_with(BigRational::zero);
        *entry += coef;
        if entry.is_zero() {
            self.terms.remove(&radicand);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BigInt, &BigRational)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_rational(&self) -> bool {
        self.terms.keys().all(|d| d.is_one())
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        if self.is_rational() {
            Some(self.rational_part())
        } else {
            None
        }
    }

    pub fn rational_part(&self) -> BigRational {
        self.terms.get(&BigInt::one()).cloned().unwrap_or_else(BigRational::zero)
    }

    /// `(a, b, c, d)` with value `(a + b√d)/c` when at most one root occurs.
    pub fn as_quad(&self) -> Option<(BigInt, BigInt, BigInt, BigInt)> {
        let roots: Vec<_> = self.terms.iter().filter(|(d, _)| !d.is_one()).collect();
        let r = self.rational_part();
        match roots.as_slice() {
            [] => Some((r.numer().clone(), BigInt::zero(), r.denom().clone(), BigInt::zero())),
            [(d, coef)] => {
                let c = r.denom().lcm(coef.denom());
                let a = r.numer() * (&c / r.denom());
                let b = coef.numer() * (&c / coef.denom());
                Some((a, b, c, (*d).clone()))
            }
            _ => None,
        }
    }

    pub fn neg(&self) -> Surd {
        Surd { terms: self.terms.iter().map(|(d, r)| (d.clone(), -r)).collect() }
    }

    pub fn add(&self, o: &Surd) -> Surd {
        let mut s = self.clone();
        for (d, r) in &o.terms {
            s.push(d.clone(), r.clone());
        }
        s
    }

    pub fn sub(&self, o: &Surd) -> Surd {
        self.add(&o.neg())
    }

    pub fn add_int(&self, n: &BigInt) -> Surd {
        let mut s = self.clone();
        s.push(BigInt::one(), BigRational::from_integer(n.clone()));
        s
    }

    pub fn scale(&self, k: &BigRational) -> Surd {
        if k.is_zero() {
            return Surd::zero();
        }
        Surd { terms: self.terms.iter().map(|(d, r)| (d.clone(), r * k)).collect() }
    }

    pub fn mul_int(&self, k: &BigInt) -> Surd {
        self.scale(&BigRational::from_integer(k.clone()))
    }

    pub fn mul(&self, o: &Surd) -> Surd {
        let mut s = Surd::zero();
        for (d1, r1) in &self.terms {
            for (d2, r2) in &o.terms {
                let g = d1.gcd(d2);
                let radicand = (d1 / &g) * (d2 / &g);
                s.push(radicand, r1 * r2 * BigRational::from_integer(g));
            }
        }
        s
    }

    /// Division, exact when the divisor is rational.
    pub fn div_rational(&self, k: &BigRational) -> Result<Surd> {
        if k.is_zero() {
            return Err(Error::OutOfDomain("division by zero".into()));
        }
        Ok(self.scale(&k.recip()))
    }

    /// `1/x` by multiplying with conjugates until the denominator is
    /// rational; `None` for zero or radicands too large to factor.
    pub fn recip(&self) -> Option<Surd> {
        if self.is_zero() {
            return None;
        }
        let mut num = Surd::from_int(1);
        let mut den = self.clone();
        for _ in 0..64 {
            let Some(d) = den.terms.keys().find(|d| !d.is_one()) else {
                let r = den.as_rational()?;
                return Some(num.scale(&r.recip()));
            };
            let p = smallest_factor(d);
            let conj = Surd {
                terms: den
                    .terms
                    .iter()
                    .map(|(d, r)| (d.clone(), if (d % &p).is_zero() { -r } else { r.clone() }))
                    .collect(),
            };
            num = num.mul(&conj);
            den = den.mul(&conj);
        }
        None
    }

    pub fn enclose(&self, prec: u32) -> Interval {
        let w = prec + 8;
        let mut acc = Interval::zero(w);
        for (d, r) in &self.terms {
            let coef = Interval::from_rational(r, w);
            let term = if d.is_one() {
                coef
            } else {
                &coef * &Interval::from_bigint(d, w).sqrt().expect("positive radicand")
            };
            acc = &acc + &term;
        }
        acc.round_to(prec)
    }

    pub fn to_f64(&self) -> f64 {
        self.enclose(96).mid_f64()
    }

    /// Exact sign.
    pub fn signum(&self) -> i32 {
        if self.is_zero() {
            return 0;
        }
        if let Some(r) = self.as_rational() {
            return if r.is_positive() { 1 } else { -1 };
        }
        let iv = self.enclose(128);
        if iv.is_positive() {
            1
        } else if iv.is_negative() {
            -1
        } else {
            self.signum_by_splitting()
        }
    }

    // x = A + B√p with A, B free of √p; compare A² with pB² when signs differ
    fn signum_by_splitting(&self) -> i32 {
        let radicand = self.terms.keys().find(|d| !d.is_one()).expect("irrational");
        let p = smallest_factor(radicand);
        let mut a = Surd::zero();
        let mut b = Surd::zero();
        for (d, r) in &self.terms {
            if (d % &p).is_zero() {
                b.push(d / &p, r.clone());
            } else {
                a.push(d.clone(), r.clone());
            }
        }
        let (sa, sb) = (a.signum(), b.signum());
        if sb == 0 || sa == sb {
            return sa;
        }
        if sa == 0 {
            return sb;
        }
        let diff = a.mul(&a).sub(&b.mul(&b).mul_int(&p));
        let sd = diff.signum();
        if sa > 0 {
            sd
        } else {
            -sd
        }
    }

    pub fn cmp_exact(&self, o: &Surd) -> Ordering {
        self.sub(o).signum().cmp(&0)
    }

    pub fn abs(&self) -> Surd {
        if self.signum() < 0 {
            self.neg()
        } else {
            self.clone()
        }
    }

    pub fn floor(&self) -> BigInt {
        if let Some(r) = self.as_rational() {
            return r.floor().to_integer();
        }
        let mut n = self.enclose(128).mid().floor();
        while self.add_int(&-&n).signum() < 0 {
            n -= 1;
        }
        while self.add_int(&-(&n + BigInt::one())).signum() >= 0 {
            n += 1;
        }
        n
    }

    /// Distance to the nearest integer, exactly.
    pub fn dist_to_z(&self) -> Surd {
        let frac = self.add_int(&-self.floor());
        let other = frac.neg().add_int(&BigInt::one());
        if frac.cmp_exact(&other) == Ordering::Greater {
            other
        } else {
            frac
        }
    }

    /// Nearest integer, halves rounded up.
    pub fn round(&self) -> BigInt {
        self.add(&Surd::from_rational(BigRational::new(1.into(), 2.into()))).floor()
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (d, r) in &self.terms {
            let neg = r.is_negative();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            first = false;
            let a = r.abs();
            if d.is_one() {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "sqrt({d})")?;
            } else if a.is_integer() {
                write!(f, "{a}*sqrt({d})")?;
            } else {
                write!(f, "{}*sqrt({d})/{}", a.numer(), a.denom())?;
            }
        }
        Ok(())
    }
}

/// Parses a decimal literal such as `-12.5e-3` exactly.
pub fn parse_decimal(s: &str) -> Result<BigRational> {
    let err = || Error::Parse(format!("bad decimal literal `{s}`"));
    let s = s.trim();
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().map_err(|_| err())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all: String = format!("{int_part}{frac_part}");
    let n: BigInt = all.parse().map_err(|_| err())?;
    let scale = exponent - frac_part.len() as i64;
    if scale.abs() > 100_000 {
        return Err(err());
    }
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Ok(r)
}

/// Symbolic real constant, evaluated by interval enclosure.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(Surd),
    E,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Sqrt(Box<Expr>),
    Dist(Box<Expr>),
}

impl Expr {
    pub fn parse(s: &str) -> Result<Expr> {
        let tokens = tokenize(s)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!("trailing input in `{s}`")));
        }
        Ok(e)
    }

    pub fn enclose(&self, prec: u32) -> Result<Interval> {
        let w = prec + 4;
        let v = match self {
            Expr::Num(s) => s.enclose(w),
            Expr::E => Interval::e(w),
            Expr::Neg(a) => -&a.enclose(w)?,
            Expr::Add(a, b) => &a.enclose(w)? + &b.enclose(w)?,
            Expr::Sub(a, b) => &a.enclose(w)? - &b.enclose(w)?,
            Expr::Mul(a, b) => &a.enclose(w)? * &b.enclose(w)?,
            Expr::Div(a, b) => a.enclose(w)?.div(&b.enclose(w)?)?,
            Expr::Pow(a, b) => {
                let base = a.enclose(w)?;
                match b.as_integer() {
                    Some(k) => {
                        let k_abs = k.unsigned_abs();
                        let k32 = u32::try_from(k_abs)
                            .map_err(|_| Error::OutOfDomain("exponent too large".into()))?;
                        let p = base.powi(k32);
                        if k < 0 {
                            p.recip()?
                        } else {
                            p
                        }
                    }
                    None => checked_exp(&(&b.enclose(w)? * &base.ln()?))?,
                }
            }
            Expr::Exp(a) => checked_exp(&a.enclose(w)?)?,
            Expr::Ln(a) => a.enclose(w)?.ln()?,
            Expr::Sqrt(a) => a.enclose(w)?.sqrt()?,
            Expr::Dist(a) => interval_dist(&a.enclose(w)?),
        };
        Ok(v.round_to(prec))
    }

    fn as_integer(&self) -> Option<i64> {
        match self {
            Expr::Num(s) => s.as_rational().filter(|r| r.is_integer()).and_then(|r| r.to_integer().to_i64()),
            Expr::Neg(a) => a.as_integer().map(|k| -k),
            _ => None,
        }
    }

    fn level(&self) -> u8 {
        match self {
            Expr::Num(s) => {
                if s.terms.len() > 1 || s.signum() < 0 {
                    1
                } else if s.as_rational().is_some_and(|r| !r.is_integer()) || !s.is_rational() {
                    2
                } else {
                    5
                }
            }
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_level: u8) -> fmt::Result {
        if self.level() < min_level {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(s) => write!(f, "{s}"),
            Expr::E => write!(f, "e"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_at(f, 4)
            }
            Expr::Add(a, b) => {
                a.write_at(f, 1)?;
                write!(f, " + ")?;
                b.write_at(f, 2)
            }
            Expr::Sub(a, b) => {
                a.write_at(f, 1)?;
                write!(f, " - ")?;
                b.write_at(f, 2)
            }
            Expr::Mul(a, b) => {
                a.write_at(f, 2)?;
                write!(f, "*")?;
                b.write_at(f, 3)
            }
            Expr::Div(a, b) => {
                a.write_at(f, 2)?;
                write!(f, "/")?;
                b.write_at(f, 3)
            }
            Expr::Pow(a, b) => {
                a.write_at(f, 5)?;
                write!(f, "^")?;
                b.write_at(f, 3)
            }
            Expr::Exp(a) => func(f, "exp", a),
            Expr::Ln(a) => func(f, "ln", a),
            Expr::Sqrt(a) => func(f, "sqrt", a),
            Expr::Dist(a) => func(f, "dist", a),
        }
    }
}

fn func(f: &mut fmt::Formatter<'_>, name: &str, a: &Expr) -> fmt::Result {
    write!(f, "{name}(")?;
    a.write_at(f, 0)?;
    write!(f, ")")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

fn checked_exp(x: &Interval) -> Result<Interval> {
    if x.magnitude() > 40 {
        return Err(Error::OutOfDomain("exponential argument too large".into()));
    }
    Ok(x.exp())
}

/// Enclosure of `‖x‖` for every `x` in the interval.
pub fn interval_dist(x: &Interval) -> Interval {
    let prec = x.prec();
    let fl = x.lo().floor();
    let lo_d = &(x - &Interval::from_bigint(&fl, prec)).max(&Interval::zero(prec));
    if x.hi().floor() == fl {
        let one = Interval::one(prec);
        lo_d.min(&(&one - lo_d))
    } else {
        let half = Dyadic::new(BigInt::one(), -1);
        let upper = x.width().min(half);
        Interval::new(Dyadic::zero(), upper.max(Dyadic::zero()), prec)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(BigRational),
    Ident(String),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
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
            // scientific exponent only when digits follow
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit: String = chars[start..i].iter().collect();
            out.push(Token::Num(parse_decimal(&lit)?));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{c}` in `{s}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = fold(if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            });
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = fold(if c == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            });
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(fold(Expr::Neg(Box::new(self.unary()?))))
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
            let exponent = self.unary()?;
            return Ok(fold(Expr::Pow(Box::new(base), Box::new(exponent))));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(r) => Ok(Expr::Num(Surd::from_rational(r))),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) => {
                if name == "e" {
                    return Ok(Expr::E);
                }
                self.expect('(')?;
                let arg = Box::new(self.expr()?);
                self.expect(')')?;
                let e = match name.as_str() {
                    "exp" => Expr::Exp(arg),
                    "ln" | "log" => Expr::Ln(arg),
                    "sqrt" => Expr::Sqrt(arg),
                    "dist" => Expr::Dist(arg),
                    _ => return Err(Error::Parse(format!("unknown function `{name}`"))),
                };
                Ok(fold(e))
            }
            Token::Op(c) => Err(Error::Parse(format!("unexpected `{c}`"))),
        }
    }
}

/// Collapses operations on exact numbers that stay exact.
fn fold(e: Expr) -> Expr {
    use Expr::*;
    let num = |x: &Expr| match x {
        Num(s) => Some(s.clone()),
        _ => None,
    };
    match &e {
        Neg(a) => num(a).map(|s| Num(s.neg())),
        Add(a, b) => num(a).zip(num(b)).map(|(x, y)| Num(x.add(&y))),
        Sub(a, b) => num(a).zip(num(b)).map(|(x, y)| Num(x.sub(&y))),
        Mul(a, b) => num(a).zip(num(b)).map(|(x, y)| Num(x.mul(&y))),
        Div(a, b) => num(a)
            .zip(num(b).and_then(|y| y.as_rational()).filter(|r| !r.is_zero()))
            .map(|(x, r)| Num(x.scale(&r.recip()))),
        Pow(a, b) => match (num(a), b.as_integer()) {
            (Some(x), Some(k)) if (0..=64).contains(&k) => {
                let mut acc = Surd::from_int(1);
                for _ in 0..k {
                    acc = acc.mul(&x);
                }
                Some(Num(acc))
            }
            (Some(x), Some(k)) if (-64..0).contains(&k) => x.as_rational().filter(|r| !r.is_zero()).map(|r| {
                let p = num_traits::pow(r.recip(), k.unsigned_abs() as usize);
                Num(Surd::from_rational(p))
            }),
            _ => None,
        },
        Sqrt(a) => num(a).and_then(|x| x.as_rational()).and_then(|r| {
            if r.is_negative() {
                return None;
            }
            // √(p/q) = √(pq)/q
            let pq = r.numer() * r.denom();
            Surd::sqrt_int(&pq).ok().map(|s| Num(s.scale(&BigRational::new(1.into(), r.denom().clone()))))
        }),
        Dist(a) => num(a).map(|x| Num(x.dist_to_z())),
        _ => None,
    }
    .unwrap_or(e)
}

/// A real scalar: either exact, or a symbolic constant enclosed on demand at
/// any requested precision.
#[derive(Clone, Debug, PartialEq)]
pub enum CertifiedReal {
    Exact(Surd),
    Symbolic(Arc<Expr>),
}

impl CertifiedReal {
    pub fn from_surd(s: Surd) -> Self {
        CertifiedReal::Exact(s)
    }

    pub fn from_rational(r: BigRational) -> Self {
        CertifiedReal::Exact(Surd::from_rational(r))
    }

    pub fn from_int<T: Into<BigInt>>(v: T) -> Self {
        CertifiedReal::Exact(Surd::from_int(v))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Self::from_rational(BigRational::new(n.into(), d.into()))
    }

    /// Exact value of a finite float.
    pub fn from_f64(x: f64) -> Self {
        let d = Dyadic::from_f64(x).expect("finite float");
        Self::from_rational(d.to_rational())
    }

    pub fn from_expr(e: Expr) -> Self {
        match e {
            Expr::Num(s) => CertifiedReal::Exact(s),
            other => CertifiedReal::Symbolic(Arc::new(other)),
        }
    }

    /// Euler's number.
    pub fn e() -> Self {
        Self::from_expr(Expr::E)
    }

    /// Parses an arithmetic expression such as `e^-3`, `1/20` or `sqrt(5)`.
    pub fn parse_expr(s: &str) -> Result<Self> {
        Ok(Self::from_expr(Expr::parse(s)?))
    }

    /// Parses one entry of the target grammar: `rational a/b`,
    /// `quad a b c D` meaning `(a+b√D)/c`, `dec <digits>`, or an expression.
    pub fn parse_entry(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut words = s.split_whitespace();
        let head = words.next().ok_or_else(|| Error::Parse("empty entry".into()))?;
        let rest: Vec<&str> = words.collect();
        let int = |w: &str| w.parse::<BigInt>().map_err(|_| Error::Parse(format!("bad integer `{w}` in `{s}`")));
        match head {
            "rational" => {
                let [body] = rest.as_slice() else {
                    return Err(Error::Parse(format!("`rational` takes one argument: `{s}`")));
                };
                let r = match body.split_once('/') {
                    Some((n, d)) => {
                        let d = int(d)?;
                        if d.is_zero() {
                            return Err(Error::Parse(format!("zero denominator in `{s}`")));
                        }
                        BigRational::new(int(n)?, d)
                    }
                    None => BigRational::from_integer(int(body)?),
                };
                Ok(Self::from_rational(r))
            }
            "quad" => {
                let [a, b, c, d] = rest.as_slice() else {
                    return Err(Error::Parse(format!("`quad` takes four integers: `{s}`")));
                };
                let d = int(d)?;
                if d.is_negative() {
                    return Err(Error::Parse(format!("negative radicand in `{s}`")));
                }
                let c = int(c)?;
                if c.is_zero() {
                    return Err(Error::Parse(format!("zero denominator in `{s}`")));
                }
                Surd::quad(int(a)?, int(b)?, c, d).map(Self::Exact)
            }
            "dec" => {
                let [digits] = rest.as_slice() else {
                    return Err(Error::Parse(format!("`dec` takes one literal: `{s}`")));
                };
                Ok(Self::from_rational(parse_decimal(digits)?))
            }
            _ => Self::parse_expr(s),
        }
    }

    /// Canonical text in the entry grammar.
    pub fn entry_string(&self) -> String {
        match self {
            CertifiedReal::Exact(s) => match s.as_quad() {
                Some((a, _, c, d)) if d.is_zero() => {
                    if c.is_one() {
                        format!("rational {a}")
                    } else {
                        format!("rational {a}/{c}")
                    }
                }
                Some((a, b, c, d)) => format!("quad {a} {b} {c} {d}"),
                None => s.to_string(),
            },
            CertifiedReal::Symbolic(e) => e.to_string(),
        }
    }

    pub fn exact(&self) -> Option<&Surd> {
        match self {
            CertifiedReal::Exact(s) => Some(s),
            CertifiedReal::Symbolic(_) => None,
        }
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        self.exact().and_then(|s| s.as_rational())
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            CertifiedReal::Exact(s) => Expr::Num(s.clone()),
            CertifiedReal::Symbolic(e) => (**e).clone(),
        }
    }

    pub fn enclose(&self, prec: u32) -> Result<Interval> {
        match self {
            CertifiedReal::Exact(s) => Ok(s.enclose(prec)),
            CertifiedReal::Symbolic(e) => e.enclose(prec),
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.enclose(96).map(|iv| iv.mid_f64()).unwrap_or(f64::NAN)
    }

    /// Certified sign, refining precision as needed.
    pub fn signum(&self, precision: &Precision) -> Result<i32> {
        if let CertifiedReal::Exact(s) = self {
            return Ok(s.signum());
        }
        precision.refine("sign of a symbolic constant", |bits| {
            let iv = self.enclose(bits)?;
            if iv.is_positive() {
                Ok(1)
            } else if iv.is_negative() {
                Ok(-1)
            } else if iv.is_point() {
                Ok(0)
            } else {
                Err(Error::Indeterminate)
            }
        })
    }

    pub fn cmp(&self, o: &CertifiedReal, precision: &Precision) -> Result<Ordering> {
        let d = self.sub(o);
        Ok(d.signum(precision)?.cmp(&0))
    }

    fn binary(&self, o: &CertifiedReal, exact: impl Fn(&Surd, &Surd) -> Option<Surd>, sym: fn(Box<Expr>, Box<Expr>) -> Expr) -> CertifiedReal {
        if let (CertifiedReal::Exact(a), CertifiedReal::Exact(b)) = (self, o) {
            if let Some(s) = exact(a, b) {
                return CertifiedReal::Exact(s);
            }
        }
        Self::from_expr(sym(Box::new(self.to_expr()), Box::new(o.to_expr())))
    }

    pub fn add(&self, o: &CertifiedReal) -> CertifiedReal {
        self.binary(o, |a, b| Some(a.add(b)), Expr::Add)
    }

    pub fn sub(&self, o: &CertifiedReal) -> CertifiedReal {
        self.binary(o, |a, b| Some(a.sub(b)), Expr::Sub)
    }

    pub fn mul(&self, o: &CertifiedReal) -> CertifiedReal {
        self.binary(o, |a, b| Some(a.mul(b)), Expr::Mul)
    }

    pub fn div(&self, o: &CertifiedReal) -> CertifiedReal {
        self.binary(
            o,
            |a, b| b.recip().map(|r| a.mul(&r)),
            Expr::Div,
        )
    }

    pub fn neg(&self) -> CertifiedReal {
        match self {
            CertifiedReal::Exact(s) => CertifiedReal::Exact(s.neg()),
            CertifiedReal::Symbolic(e) => Self::from_expr(Expr::Neg(Box::new((**e).clone()))),
        }
    }

    pub fn exp(&self) -> CertifiedReal {
        if self.exact().is_some_and(|s| s.is_zero()) {
            return Self::from_int(1);
        }
        Self::from_expr(Expr::Exp(Box::new(self.to_expr())))
    }

    pub fn ln(&self) -> CertifiedReal {
        if self.as_rational().is_some_and(|r| r.is_one()) {
            return Self::from_int(0);
        }
        Self::from_expr(Expr::Ln(Box::new(self.to_expr())))
    }

    pub fn dist_to_z(&self) -> CertifiedReal {
        match self {
            CertifiedReal::Exact(s) => CertifiedReal::Exact(s.dist_to_z()),
            CertifiedReal::Symbolic(e) => Self::from_expr(Expr::Dist(Box::new((**e).clone()))),
        }
    }

    pub fn is_zero_exact(&self) -> bool {
        self.exact().is_some_and(|s| s.is_zero())
    }
}

impl fmt::Display for CertifiedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.entry_string())
    }
}

impl Serialize for CertifiedReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.entry_string())
    }
}

impl<'de> Deserialize<'de> for CertifiedReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CertifiedReal::parse_entry(&s).map_err(serde::de::Error::custom)
    }
}

impl From<i64> for CertifiedReal {
    fn from(v: i64) -> Self {
        Self::from_int(v)
    }
}
