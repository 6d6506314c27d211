//! Dyadic numbers `m·2^e` and closed intervals with outward rounding.
//!
//! Every operation on [`Interval`] returns an enclosure of the exact result:
//! lower ends are rounded toward −∞ and upper ends toward +∞ at the working
//! precision (number of mantissa bits) carried by the operands.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact binary fraction `man · 2^exp`, kept with an odd mantissa.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    man: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic { man: BigInt::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        Dyadic { man: BigInt::one(), exp: 0 }
    }

    pub fn new(man: BigInt, exp: i64) -> Self {
        if man.is_zero() {
            return Self::zero();
        }
        let tz = man.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            Dyadic { man: man >> tz, exp: exp + tz as i64 }
        } else {
            Dyadic { man, exp }
        }
    }

    pub fn from_int<T: Into<BigInt>>(v: T) -> Self {
        Self::new(v.into(), 0)
    }

    /// Exact value of a finite float.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let m = BigInt::from(m);
        Some(Self::new(if negative { -m } else { m }, e))
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.man
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.man.is_zero()
    }

    pub fn signum(&self) -> i32 {
        match self.man.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    /// `k` such that `2^(k-1) <= |self| < 2^k`; `i64::MIN` for zero.
    pub fn magnitude(&self) -> i64 {
        if self.is_zero() {
            i64::MIN
        } else {
            self.man.bits() as i64 + self.exp
        }
    }

    pub fn neg(&self) -> Self {
        Dyadic { man: -&self.man, exp: self.exp }
    }

    pub fn abs(&self) -> Self {
        Dyadic { man: self.man.abs(), exp: self.exp }
    }

    pub fn add(&self, o: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        let e = self.exp.min(o.exp);
        let a = &self.man << (self.exp - e) as usize;
        let b = &o.man << (o.exp - e) as usize;
        Dyadic::new(a + b, e)
    }

    pub fn sub(&self, o: &Dyadic) -> Dyadic {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Dyadic) -> Dyadic {
        Dyadic::new(&self.man * &o.man, self.exp + o.exp)
    }

    /// Multiply by `2^k`.
    pub fn scale2(&self, k: i64) -> Dyadic {
        if self.is_zero() {
            return self.clone();
        }
        Dyadic { man: self.man.clone(), exp: self.exp + k }
    }

    /// Round to at most `prec` mantissa bits, toward +∞ if `up` else −∞.
    pub fn round(&self, prec: u32, up: bool) -> Dyadic {
        let bits = self.man.bits();
        if bits <= prec as u64 {
            return self.clone();
        }
        let s = (bits - prec as u64) as usize;
        let m = if up { -((-&self.man) >> s) } else { &self.man >> s };
        Dyadic::new(m, self.exp + s as i64)
    }

    /// Quotient rounded to `prec` bits in the requested direction.
    pub fn div_round(&self, o: &Dyadic, prec: u32, up: bool) -> Dyadic {
        assert!(!o.is_zero(), "division by zero dyadic");
        if self.is_zero() {
            return Self::zero();
        }
        let k = (prec as i64 + 2 + o.man.bits() as i64 - self.man.bits() as i64).max(0);
        let num = &self.man << k as usize;
        let (q, r) = num.div_mod_floor(&o.man);
        let q = if up && !r.is_zero() { q + 1 } else { q };
        Dyadic::new(q, self.exp - o.exp - k).round(prec, up)
    }

    pub fn floor(&self) -> BigInt {
        if self.exp >= 0 {
            &self.man << self.exp as usize
        } else {
            &self.man >> (-self.exp) as usize
        }
    }

    pub fn ceil(&self) -> BigInt {
        -(self.neg().floor())
    }

    pub fn to_rational(&self) -> BigRational {
        if self.exp >= 0 {
            BigRational::from_integer(&self.man << self.exp as usize)
        } else {
            BigRational::new(self.man.clone(), BigInt::one() << (-self.exp) as usize)
        }
    }

    /// Nearest-ish float (error below two ulps).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.man.bits();
        let (m, e) = if bits > 64 {
            let s = bits - 64;
            (&self.man >> s as usize, self.exp + s as i64)
        } else {
            (self.man.clone(), self.exp)
        };
        ldexp(m.to_f64().unwrap_or(f64::NAN), e)
    }

    /// Largest float not above the value.
    pub fn to_f64_down(&self) -> f64 {
        let mut f = self.to_f64();
        while let Some(d) = Dyadic::from_f64(f) {
            if d <= *self {
                return f;
            }
            f = f.next_down();
        }
        f
    }

    /// Smallest float not below the value.
    pub fn to_f64_up(&self) -> f64 {
        // `+ 0.0` turns the negated zero back into `0.0`
        -self.neg().to_f64_down() + 0.0
    }
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}

impl Ord for Dyadic {
    fn cmp(&self, o: &Self) -> Ordering {
        let (s1, s2) = (self.signum(), o.signum());
        if s1 != s2 {
            return s1.cmp(&s2);
        }
        if s1 == 0 {
            return Ordering::Equal;
        }
        let (m1, m2) = (self.magnitude(), o.magnitude());
        if m1 != m2 {
            let c = m1.cmp(&m2);
            return if s1 > 0 { c } else { c.reverse() };
        }
        let e = self.exp.min(o.exp);
        let a = &self.man << (self.exp - e) as usize;
        let b = &o.man << (o.exp - e) as usize;
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.to_f64())
    }
}

/// Closed interval `[lo, hi]` with dyadic ends and a working precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    lo: Dyadic,
    hi: Dyadic,
    prec: u32,
}

impl Interval {
    pub fn new(lo: Dyadic, hi: Dyadic, prec: u32) -> Self {
        debug_assert!(lo <= hi, "inverted interval");
        Interval { lo: lo.round(prec, false), hi: hi.round(prec, true), prec }
    }

    pub fn point(x: Dyadic, prec: u32) -> Self {
        Self::new(x.clone(), x, prec)
    }

    pub fn zero(prec: u32) -> Self {
        Self::point(Dyadic::zero(), prec)
    }

    pub fn one(prec: u32) -> Self {
        Self::point(Dyadic::one(), prec)
    }

    pub fn from_i64(v: i64, prec: u32) -> Self {
        Self::point(Dyadic::from_int(v), prec)
    }

    pub fn from_bigint(v: &BigInt, prec: u32) -> Self {
        Self::point(Dyadic::from_int(v.clone()), prec)
    }

    pub fn from_f64(x: f64, prec: u32) -> Self {
        Self::point(Dyadic::from_f64(x).expect("finite float"), prec.max(53))
    }

    pub fn from_rational(r: &BigRational, prec: u32) -> Self {
        let n = Dyadic::from_int(r.numer().clone());
        let d = Dyadic::from_int(r.denom().clone());
        if d == Dyadic::one() {
            return Self::point(n, prec);
        }
        Interval { lo: n.div_round(&d, prec, false), hi: n.div_round(&d, prec, true), prec }
    }

    /// Smallest interval containing both.
    pub fn hull(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo.clone().min(o.lo.clone()),
            hi: self.hi.clone().max(o.hi.clone()),
            prec: self.prec.max(o.prec),
        }
    }

    pub fn lo(&self) -> &Dyadic {
        &self.lo
    }

    pub fn hi(&self) -> &Dyadic {
        &self.hi
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn with_prec(&self, prec: u32) -> Interval {
        Interval::new(self.lo.clone(), self.hi.clone(), prec)
    }

    pub fn mid(&self) -> Dyadic {
        self.lo.add(&self.hi).scale2(-1)
    }

    pub fn width(&self) -> Dyadic {
        self.hi.sub(&self.lo)
    }

    pub fn mid_f64(&self) -> f64 {
        self.mid().to_f64()
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.to_f64_down()
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.to_f64_up()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.lo.signum() <= 0 && self.hi.signum() >= 0
    }

    pub fn contains(&self, x: &Dyadic) -> bool {
        self.lo <= *x && *x <= self.hi
    }

    pub fn is_positive(&self) -> bool {
        self.lo.signum() > 0
    }

    pub fn is_negative(&self) -> bool {
        self.hi.signum() < 0
    }

    /// Certified `self < o`, `None` when the enclosures overlap.
    pub fn lt(&self, o: &Interval) -> Option<bool> {
        if self.hi < o.lo {
            Some(true)
        } else if self.lo >= o.hi {
            Some(false)
        } else {
            None
        }
    }

    /// Certified `self <= o`.
    pub fn le(&self, o: &Interval) -> Option<bool> {
        if self.hi <= o.lo {
            Some(true)
        } else if self.lo > o.hi {
            Some(false)
        } else {
            None
        }
    }

    pub fn gt(&self, o: &Interval) -> Option<bool> {
        o.lt(self)
    }

    pub fn ge(&self, o: &Interval) -> Option<bool> {
        o.le(self)
    }

    /// Upper bound on `log2 |x|` over the interval.
    pub fn magnitude(&self) -> i64 {
        self.lo.magnitude().max(self.hi.magnitude())
    }

    pub fn abs_upper(&self) -> Dyadic {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn round_to(&self, prec: u32) -> Interval {
        Interval { lo: self.lo.round(prec, false), hi: self.hi.round(prec, true), prec }
    }

    /// Enlarge by `r >= 0` on both sides.
    pub fn widen(&self, r: &Dyadic) -> Interval {
        Interval::new(self.lo.sub(r), self.hi.add(r), self.prec)
    }

    pub fn abs(&self) -> Interval {
        if self.lo.signum() >= 0 {
            self.clone()
        } else if self.hi.signum() <= 0 {
            -self
        } else {
            Interval { lo: Dyadic::zero(), hi: self.abs_upper(), prec: self.prec }
        }
    }

    pub fn max(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo.clone().max(o.lo.clone()),
            hi: self.hi.clone().max(o.hi.clone()),
            prec: self.prec.max(o.prec),
        }
    }

    pub fn min(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo.clone().min(o.lo.clone()),
            hi: self.hi.clone().min(o.hi.clone()),
            prec: self.prec.max(o.prec),
        }
    }

    pub fn sqr(&self) -> Interval {
        let a = self.abs();
        let lo = a.lo.mul(&a.lo);
        let hi = a.hi.mul(&a.hi);
        Interval::new(lo, hi, self.prec)
    }

    pub fn powi(&self, n: u32) -> Interval {
        let mut acc = Interval::one(self.prec);
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    pub fn scale2(&self, k: i64) -> Interval {
        Interval { lo: self.lo.scale2(k), hi: self.hi.scale2(k), prec: self.prec }
    }

    pub fn div_int(&self, j: u64) -> Interval {
        let d = Dyadic::from_int(j);
        Interval {
            lo: self.lo.div_round(&d, self.prec, false),
            hi: self.hi.div_round(&d, self.prec, true),
            prec: self.prec,
        }
    }

    pub fn recip(&self) -> Result<Interval> {
        if self.contains_zero() {
            return Err(Error::Indeterminate);
        }
        let one = Dyadic::one();
        Ok(Interval {
            lo: one.div_round(&self.hi, self.prec, false),
            hi: one.div_round(&self.lo, self.prec, true),
            prec: self.prec,
        })
    }

    pub fn div(&self, o: &Interval) -> Result<Interval> {
        if o.contains_zero() {
            return Err(Error::Indeterminate);
        }
        let prec = self.prec.max(o.prec);
        let cands = [
            (&self.lo, &o.lo),
            (&self.lo, &o.hi),
            (&self.hi, &o.lo),
            (&self.hi, &o.hi),
        ];
        let lo = cands.iter().map(|(a, b)| a.div_round(b, prec, false)).min().unwrap();
        let hi = cands.iter().map(|(a, b)| a.div_round(b, prec, true)).max().unwrap();
        Ok(Interval { lo, hi, prec })
    }

    pub fn exp(&self) -> Interval {
        let lo = exp_point(&self.lo, self.prec).lo;
        let hi = exp_point(&self.hi, self.prec).hi;
        Interval { lo, hi, prec: self.prec }
    }

    pub fn ln(&self) -> Result<Interval> {
        if self.lo.signum() <= 0 {
            return Err(if self.hi.signum() <= 0 {
                Error::OutOfDomain("logarithm of a non-positive number".into())
            } else {
                Error::Indeterminate
            });
        }
        let lo = ln_point(&self.lo, self.prec).lo;
        let hi = ln_point(&self.hi, self.prec).hi;
        Ok(Interval { lo, hi, prec: self.prec })
    }

    pub fn sqrt(&self) -> Result<Interval> {
        if self.hi.signum() < 0 {
            return Err(Error::OutOfDomain("square root of a negative number".into()));
        }
        let lo = if self.lo.signum() <= 0 {
            Dyadic::zero()
        } else {
            sqrt_round(&self.lo, self.prec, false)
        };
        let hi = sqrt_round(&self.hi, self.prec, true);
        Ok(Interval { lo, hi, prec: self.prec })
    }

    /// Euler's number.
    pub fn e(prec: u32) -> Interval {
        Interval::one(prec).exp()
    }

    pub fn ln2(prec: u32) -> Interval {
        ln2(prec)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.17e}, {:.17e}]", self.lo_f64(), self.hi_f64())
    }
}

impl Add for &Interval {
    type Output = Interval;
    fn add(self, o: &Interval) -> Interval {
        let prec = self.prec.max(o.prec);
        Interval {
            lo: self.lo.add(&o.lo).round(prec, false),
            hi: self.hi.add(&o.hi).round(prec, true),
            prec,
        }
    }
}

impl Sub for &Interval {
    type Output = Interval;
    fn sub(self, o: &Interval) -> Interval {
        let prec = self.prec.max(o.prec);
        Interval {
            lo: self.lo.sub(&o.hi).round(prec, false),
            hi: self.hi.sub(&o.lo).round(prec, true),
            prec,
        }
    }
}

impl Mul for &Interval {
    type Output = Interval;
    fn mul(self, o: &Interval) -> Interval {
        let prec = self.prec.max(o.prec);
        if self.lo.signum() >= 0 && o.lo.signum() >= 0 {
            return Interval {
                lo: self.lo.mul(&o.lo).round(prec, false),
                hi: self.hi.mul(&o.hi).round(prec, true),
                prec,
            };
        }
        let p = [
            self.lo.mul(&o.lo),
            self.lo.mul(&o.hi),
            self.hi.mul(&o.lo),
            self.hi.mul(&o.hi),
        ];
        let lo = p.iter().min().unwrap().round(prec, false);
        let hi = p.iter().max().unwrap().round(prec, true);
        Interval { lo, hi, prec }
    }
}

impl Neg for &Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: self.hi.neg(), hi: self.lo.neg(), prec: self.prec }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        &self + &o
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        &self - &o
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        &self * &o
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        -&self
    }
}

fn exp_point(x: &Dyadic, prec: u32) -> Interval {
    if x.is_zero() {
        return Interval::one(prec);
    }
    let mag = x.magnitude();
    assert!(mag <= 48, "exp argument too large for dyadic evaluation: {x}");
    // reduce to |y| < 2^-12, then square back up
    let s = (mag + 12).max(0) as u32;
    let w = prec + 40 + s;
    let y = Interval::point(x.scale2(-(s as i64)), w);
    let mut sum = Interval::one(w);
    let mut term = Interval::one(w);
    let mut j = 1u64;
    loop {
        term = (&term * &y).div_int(j);
        sum = &sum + &term;
        if term.magnitude() < -(w as i64) - 4 {
            break;
        }
        j += 1;
    }
    // tail is bounded by |term| since |y| < 2^-12
    sum = sum.widen(&term.abs_upper());
    for _ in 0..s {
        sum = sum.sqr();
    }
    sum.round_to(prec)
}

fn atanh_series(z: &Interval) -> Interval {
    let w = z.prec;
    let z2 = z.sqr();
    let mut sum = z.clone();
    let mut pow = z.clone();
    let mut j = 1u64;
    loop {
        pow = &pow * &z2;
        let term = pow.div_int(2 * j + 1);
        sum = &sum + &term;
        if term.magnitude() < -(w as i64) - 4 {
            break;
        }
        j += 1;
    }
    // geometric tail with ratio z² <= 1/9
    sum.widen(&pow.abs_upper())
}

fn ln2(prec: u32) -> Interval {
    static CACHE: OnceLock<Mutex<HashMap<u32, Interval>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&prec) {
        return v.clone();
    }
    let w = prec + 20;
    let third = Interval::one(w).div_int(3);
    let v = atanh_series(&third).scale2(1).round_to(prec);
    cache.lock().unwrap().insert(prec, v.clone());
    v
}

fn ln_point(x: &Dyadic, prec: u32) -> Interval {
    debug_assert!(x.signum() > 0);
    let mut k = x.magnitude() - 1;
    let mut m = x.scale2(-k);
    let three_halves = Dyadic::new(BigInt::from(3), -1);
    if m >= three_halves {
        k += 1;
        m = m.scale2(-1);
    }
    let kbits = 64 - k.unsigned_abs().leading_zeros();
    let w = prec + 30 + kbits;
    let mi = Interval::point(m, w);
    let one = Interval::one(w);
    let z = (&mi - &one).div(&(&mi + &one)).expect("m + 1 > 0");
    let ln_m = if z.is_point() && z.lo.is_zero() {
        Interval::zero(w)
    } else {
        atanh_series(&z).scale2(1)
    };
    let res = &(&ln2(w) * &Interval::from_i64(k, w)) + &ln_m;
    res.round_to(prec)
}

fn sqrt_round(x: &Dyadic, prec: u32, up: bool) -> Dyadic {
    // x = man·2^exp; make the exponent even and give the radicand 2·prec bits
    let mut man = x.man.clone();
    let mut exp = x.exp;
    let want = 2 * prec as i64 + 4;
    let have = man.bits() as i64;
    let mut shift = (want - have).max(0);
    if (exp - shift) % 2 != 0 {
        shift += 1;
    }
    man <<= shift as usize;
    exp -= shift;
    let r = man.sqrt();
    let exact = &r * &r == man;
    let r = if up && !exact { r + 1 } else { r };
    Dyadic::new(r, exp / 2).round(prec, up)
}
