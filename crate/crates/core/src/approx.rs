//! Fractional-part products, multiplicative defect scans, approximability
//! membership and sums of reciprocals.
//!
//! Every scan runs a certified `f64` prefilter first; only values that
//! could still be the minimum are re-evaluated exactly (for quadratic and
//! rational inputs) or by interval refinement.

use std::cmp::Ordering;
use std::ops::ControlFlow;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dyadic::{Dyadic, Interval};
use crate::error::{Error, Result};
use crate::float::Bounds;
use crate::real::{CertifiedReal, Precision, Surd};

/// Height function `h` in the defect `q·h(q)·∏‖qα_i‖`.
///
/// `log⁺x` stands for `log max{x, e}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum HeightSpec {
    /// `(log⁺x)^(l-1) · log⁺log⁺x`.
    #[serde(rename = "h_l")]
    Log { l: u32 },
    /// `Log { l }` evaluated at `max{x, e^beta}`.
    #[serde(rename = "h_l_beta")]
    LogBeta { l: u32, beta: CertifiedReal },
    #[serde(rename = "constant")]
    Constant { c: CertifiedReal },
    /// `(log⁺x)^k`.
    #[serde(rename = "power_log")]
    PowerLog { k: u32 },
}

impl HeightSpec {
    pub fn constant_one() -> Self {
        HeightSpec::Constant { c: CertifiedReal::from_int(1) }
    }

    pub fn validate(&self, precision: &Precision) -> Result<()> {
        match self {
            HeightSpec::Log { l } | HeightSpec::LogBeta { l, .. } if *l == 0 => {
                Err(Error::Invalid("height index l must be positive".into()))
            }
            HeightSpec::LogBeta { beta, .. } if beta.signum(precision)? < 0 => {
                Err(Error::Invalid("beta must be non-negative".into()))
            }
            HeightSpec::Constant { c } if c.signum(precision)? <= 0 => {
                Err(Error::Invalid("constant height must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Exponent `λ` with `h(cx) <= c^λ h(x)` for all `c >= 1`.
    pub fn sub_homogeneity(&self) -> u32 {
        match self {
            HeightSpec::Log { l } | HeightSpec::LogBeta { l, .. } => *l,
            HeightSpec::Constant { .. } => 0,
            HeightSpec::PowerLog { k } => *k,
        }
    }

    /// `log h(x)` from an enclosure of `y = log x`.
    pub fn log_at(&self, y: &Interval) -> Result<Interval> {
        let prec = y.prec();
        let one = Interval::one(prec);
        let log_core = |l: u32, y: &Interval| -> Result<Interval> {
            let lp = y.max(&one);
            let ln_lp = lp.ln()?;
            let llp = ln_lp.max(&one);
            Ok(&(&Interval::from_i64(l as i64 - 1, prec) * &ln_lp) + &llp.ln()?)
        };
        match self {
            HeightSpec::Log { l } => log_core(*l, y),
            HeightSpec::LogBeta { l, beta } => log_core(*l, &y.max(&beta.enclose(prec)?)),
            HeightSpec::Constant { c } => c.enclose(prec)?.ln(),
            HeightSpec::PowerLog { k } => Ok(&Interval::from_i64(*k as i64, prec) * &y.max(&one).ln()?),
        }
    }

    pub fn log_at_f64(&self, y: f64) -> f64 {
        let core = |l: u32, y: f64| {
            let lp = y.max(1.0);
            (l as f64 - 1.0) * lp.ln() + lp.ln().max(1.0).ln()
        };
        match self {
            HeightSpec::Log { l } => core(*l, y),
            HeightSpec::LogBeta { l, beta } => core(*l, y.max(beta.to_f64())),
            HeightSpec::Constant { c } => c.to_f64().ln(),
            HeightSpec::PowerLog { k } => *k as f64 * y.max(1.0).ln(),
        }
    }

    /// `h(x)` as an exact rational when it is one.
    pub fn exact_at(&self, x: &BigRational) -> Option<BigRational> {
        let two = BigRational::from_integer(2.into());
        let fifteen = BigRational::from_integer(15.into());
        match self {
            HeightSpec::Constant { c } => c.as_rational(),
            // log⁺x = 1 for x <= e, and log⁺log⁺x = 1 for x <= e^e
            HeightSpec::Log { l } if *x <= two || (*l == 1 && *x <= fifteen) => Some(BigRational::one()),
            HeightSpec::PowerLog { .. } if *x <= two => Some(BigRational::one()),
            _ => None,
        }
    }

    pub fn enclose_at(&self, x: &BigRational, prec: u32) -> Result<Interval> {
        if let Some(v) = self.exact_at(x) {
            return Ok(Interval::from_rational(&v, prec));
        }
        let y = Interval::from_rational(x, prec).ln()?;
        Ok(self.log_at(&y)?.exp())
    }

    /// `f64` enclosure of `h(q)` for a positive integer.
    fn bounds_at(&self, q: f64) -> Bounds {
        match self {
            HeightSpec::Constant { c } => {
                let iv = c.enclose(96).expect("validated constant");
                Bounds::from_interval(&iv)
            }
            _ => Bounds::relative(self.log_at_f64(q.ln()).exp(), 1e-12),
        }
    }
}

/// Approximation function `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PsiSpec {
    /// `ψ(x) = kappa / (x·h(x))`.
    #[serde(rename = "from_height")]
    FromHeight { kappa: CertifiedReal, height: HeightSpec },
    /// `ψ(x) = c·x^(-s)`.
    #[serde(rename = "power")]
    Power { c: CertifiedReal, s: CertifiedReal },
    /// Log-log linear interpolation through `(x, ψ(x))`, flat beyond the ends.
    #[serde(rename = "table")]
    Table { points: Vec<(CertifiedReal, CertifiedReal)> },
}

impl PsiSpec {
    /// `κ·ψ_{l,β}` with `ψ_{l,β}(x) = 1/(x·h_l(max{x, e^β}))`.
    pub fn kappa_psi(l: u32, beta: CertifiedReal, kappa: CertifiedReal) -> Self {
        PsiSpec::FromHeight { kappa, height: HeightSpec::LogBeta { l, beta } }
    }

    /// `c/x`.
    pub fn reciprocal(c: CertifiedReal) -> Self {
        PsiSpec::FromHeight { kappa: c, height: HeightSpec::constant_one() }
    }

    pub fn power(c: CertifiedReal, s: CertifiedReal) -> Self {
        PsiSpec::Power { c, s }
    }

    pub fn validate(&self, precision: &Precision) -> Result<()> {
        match self {
            PsiSpec::FromHeight { kappa, height } => {
                if kappa.signum(precision)? <= 0 {
                    return Err(Error::Invalid("kappa must be positive".into()));
                }
                height.validate(precision)
            }
            PsiSpec::Power { c, s } => {
                if c.signum(precision)? <= 0 || s.signum(precision)? < 0 {
                    return Err(Error::Invalid("power law needs c > 0 and s >= 0".into()));
                }
                Ok(())
            }
            PsiSpec::Table { points } => {
                if points.is_empty() {
                    return Err(Error::Invalid("empty psi table".into()));
                }
                for w in points.windows(2) {
                    if w[0].0.cmp(&w[1].0, precision)? != Ordering::Less {
                        return Err(Error::Invalid("psi table abscissae must increase".into()));
                    }
                    if w[0].1.cmp(&w[1].1, precision)? == Ordering::Less {
                        return Err(Error::Invalid("psi table must be non-increasing".into()));
                    }
                }
                for (x, v) in points {
                    if x.signum(precision)? <= 0 || v.signum(precision)? <= 0 {
                        return Err(Error::Invalid("psi table entries must be positive".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// `λ` with `ψ(cx) >= c^(-λ) ψ(x)` for `c >= 1`.
    pub fn sub_homogeneity(&self) -> Option<CertifiedReal> {
        match self {
            PsiSpec::FromHeight { height, .. } => Some(CertifiedReal::from_int(1 + height.sub_homogeneity() as i64)),
            PsiSpec::Power { s, .. } => Some(s.clone()),
            PsiSpec::Table { .. } => None,
        }
    }

    /// `log ψ(x)` from an enclosure of `y = log x`.
    pub fn log_at(&self, y: &Interval) -> Result<Interval> {
        let prec = y.prec();
        match self {
            PsiSpec::FromHeight { kappa, height } => {
                Ok(&(&kappa.enclose(prec)?.ln()? - y) - &height.log_at(y)?)
            }
            PsiSpec::Power { c, s } => Ok(&c.enclose(prec)?.ln()? - &(&s.enclose(prec)? * y)),
            PsiSpec::Table { points } => {
                let nodes = points
                    .iter()
                    .map(|(x, v)| Ok((x.enclose(prec)?.ln()?, v.enclose(prec)?.ln()?)))
                    .collect::<Result<Vec<_>>>()?;
                table_log_at(&nodes, y)
            }
        }
    }

    pub fn log_at_f64(&self, y: f64) -> f64 {
        match self {
            PsiSpec::FromHeight { kappa, height } => kappa.to_f64().ln() - y - height.log_at_f64(y),
            PsiSpec::Power { c, s } => c.to_f64().ln() - s.to_f64() * y,
            PsiSpec::Table { points } => {
                let nodes: Vec<(f64, f64)> = points.iter().map(|(x, v)| (x.to_f64().ln(), v.to_f64().ln())).collect();
                if y <= nodes[0].0 {
                    return nodes[0].1;
                }
                for w in nodes.windows(2) {
                    if y <= w[1].0 {
                        let s = (y - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + s * (w[1].1 - w[0].1);
                    }
                }
                nodes[nodes.len() - 1].1
            }
        }
    }

    /// `ψ(x)` exactly, when `x` is rational and the value is rational.
    pub fn exact_at(&self, x: &BigRational) -> Option<BigRational> {
        if !x.is_positive() {
            return None;
        }
        match self {
            PsiSpec::FromHeight { kappa, height } => {
                let k = kappa.as_rational()?;
                let h = height.exact_at(x)?;
                Some(k / (x * h))
            }
            PsiSpec::Power { c, s } => {
                let c = c.as_rational()?;
                let s = s.as_rational().filter(|s| s.is_integer())?.to_integer().to_i32()?;
                Some(c * num_traits::pow::pow(x.recip(), s.unsigned_abs() as usize))
                    .filter(|_| s >= 0)
            }
            PsiSpec::Table { points } => points.iter().find_map(|(px, v)| {
                (px.as_rational().as_ref() == Some(x)).then(|| v.as_rational()).flatten()
            }),
        }
    }

    /// Enclosure of `ψ(x)`.
    pub fn value_at(&self, x: &CertifiedReal, prec: u32) -> Result<Interval> {
        if let Some(v) = x.as_rational().and_then(|r| self.exact_at(&r)) {
            return Ok(Interval::from_rational(&v, prec));
        }
        let y = x.enclose(prec)?.ln()?;
        Ok(self.log_at(&y)?.exp())
    }
}

fn table_log_at(nodes: &[(Interval, Interval)], y: &Interval) -> Result<Interval> {
    // evaluate every piece that y may touch and take the hull
    let mut acc: Option<Interval> = None;
    let mut push = |v: Interval| {
        acc = Some(match acc.take() {
            Some(a) => a.hull(&v),
            None => v,
        })
    };
    let first = &nodes[0];
    if y.lo() <= first.0.hi() {
        push(first.1.clone());
    }
    for w in nodes.windows(2) {
        let (x0, v0) = &w[0];
        let (x1, v1) = &w[1];
        if y.hi() < x0.lo() || y.lo() > x1.hi() {
            continue;
        }
        let yc = y.max(x0).min(x1);
        let s = (&yc - x0).div(&(x1 - x0))?;
        push(v0 + &(&s * &(v1 - v0)));
    }
    let last = &nodes[nodes.len() - 1];
    if y.hi() >= last.0.lo() {
        push(last.1.clone());
    }
    acc.ok_or(Error::Indeterminate)
}

/// Entries of a real `m × n` matrix (or vector), row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    rows: usize,
    cols: usize,
    entries: Vec<CertifiedReal>,
}

impl TargetVector {
    pub fn new(entries: Vec<CertifiedReal>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != entries.len() {
            return Err(Error::Invalid(format!(
                "shape {rows}x{cols} does not match {} entries",
                entries.len()
            )));
        }
        Ok(TargetVector { rows, cols, entries })
    }

    /// Shape `(d, 1)`: `d` numbers each multiplied by a scalar `q`.
    pub fn column(entries: Vec<CertifiedReal>) -> Result<Self> {
        let d = entries.len();
        Self::new(entries, d, 1)
    }

    /// Shape `(1, d)`: one linear form in `d` integer variables.
    pub fn linear_form(entries: Vec<CertifiedReal>) -> Result<Self> {
        let d = entries.len();
        Self::new(entries, 1, d)
    }

    /// One entry per line in the entry grammar; `#` starts a comment.
    pub fn parse(text: &str, rows: usize, cols: usize) -> Result<Self> {
        let entries = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(CertifiedReal::parse_entry)
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries, rows, cols)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| e.entry_string() + "\n").collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[CertifiedReal] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> &CertifiedReal {
        &self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[CertifiedReal] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero_exact())
    }

    fn bounds(&self) -> Result<Vec<Bounds>> {
        self.entries.iter().map(|e| Ok(Bounds::from_interval(&e.enclose(128)?))).collect()
    }

    /// `Y_i · q` for an integer vector `q`.
    pub fn row_times(&self, i: usize, q: &[i64]) -> CertifiedReal {
        let mut acc = CertifiedReal::from_int(0);
        for (y, &qj) in self.row(i).iter().zip(q) {
            if qj != 0 {
                acc = acc.add(&y.mul(&CertifiedReal::from_int(qj)));
            }
        }
        acc
    }
}

/// Scalar or vector argmin of a scan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QStar {
    Scalar(i64),
    Vector(Vec<i64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub q: QStar,
    pub product: f64,
}

/// Minimum of a defect scan with its argmin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectRecord {
    pub q_star: QStar,
    pub value_lo: f64,
    pub value_hi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TracePoint>>,
    #[serde(skip)]
    pub value: Option<Interval>,
}

impl DefectRecord {
    pub fn value_f64(&self) -> f64 {
        0.5 * (self.value_lo + self.value_hi)
    }

    pub fn is_zero(&self) -> bool {
        self.value_hi == 0.0
    }
}

/// `‖x‖`, certified.
pub fn dist_to_z(x: &CertifiedReal) -> CertifiedReal {
    x.dist_to_z()
}

/// Product of the absolute values of the nonzero entries; 1 when none.
pub fn pi_plus(v: &[CertifiedReal], precision: &Precision) -> Result<CertifiedReal> {
    let mut acc = CertifiedReal::from_int(1);
    for x in v {
        let s = x.signum(precision)?;
        if s != 0 {
            acc = acc.mul(&if s < 0 { x.neg() } else { x.clone() });
        }
    }
    Ok(acc)
}

/// `Π₊` for integer vectors.
pub fn pi_plus_int(q: &[i64]) -> u128 {
    q.iter().filter(|&&v| v != 0).map(|&v| v.unsigned_abs() as u128).product()
}

/// Colexicographic order: the last coordinate is most significant.
pub fn colex_cmp(a: &[i64], b: &[i64]) -> Ordering {
    a.iter().rev().cmp(b.iter().rev())
}

/// Order used to break ties between integer vectors: smaller sup norm
/// first, then [`colex_cmp`] on absolute values, then on the values. In one
/// variable this is `1 < 2 < …`; `e₁` precedes every other vector of norm 1.
pub fn vector_order(a: &[i64], b: &[i64]) -> Ordering {
    let sup = |v: &[i64]| v.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
    sup(a)
        .cmp(&sup(b))
        .then_with(|| a.iter().rev().map(|x| x.unsigned_abs()).cmp(b.iter().rev().map(|x| x.unsigned_abs())))
        .then_with(|| colex_cmp(a, b))
}

/// Visits nonzero `q ∈ Z^n` whose first nonzero coordinate is positive,
/// with `‖q‖∞ <= sup` and `Π₊(q) <= prod_cap`, in increasing [`colex_cmp`] order.
pub fn visit_canonical<B>(
    n: usize,
    sup: i64,
    prod_cap: u128,
    f: &mut impl FnMut(&[i64]) -> ControlFlow<B>,
) -> ControlFlow<B> {
    let mut q = vec![0i64; n];
    visit_rec(&mut q, n, sup, prod_cap, f)
}

fn visit_rec<B>(
    q: &mut Vec<i64>,
    idx: usize,
    sup: i64,
    budget: u128,
    f: &mut impl FnMut(&[i64]) -> ControlFlow<B>,
) -> ControlFlow<B> {
    if idx == 0 {
        return match q.iter().find(|&&v| v != 0) {
            Some(&v) if v > 0 => f(q),
            _ => ControlFlow::Continue(()),
        };
    }
    let i = idx - 1;
    let reach = (sup as u128).min(budget) as i64;
    for v in -reach..=reach {
        q[i] = v;
        let next = if v == 0 { budget } else { budget / v.unsigned_abs() as u128 };
        visit_rec(q, i, sup, next, f)?;
    }
    q[i] = 0;
    ControlFlow::Continue(())
}

/// A scan value `w·h(w)·∏ factors` kept exact when possible.
struct ScanValue<'a> {
    weight: BigRational,
    height: &'a HeightSpec,
    factors: Vec<CertifiedReal>,
    exact: Option<Surd>,
}

impl<'a> ScanValue<'a> {
    fn new(weight: BigRational, height: &'a HeightSpec, factors: Vec<CertifiedReal>) -> Self {
        let exact = if factors.iter().any(|f| f.is_zero_exact()) {
            Some(Surd::zero())
        } else {
            let h = height.exact_at(&weight);
            let parts: Option<Vec<&Surd>> = factors.iter().map(|f| f.exact()).collect();
            match (h, parts) {
                (Some(h), Some(parts)) => {
                    let mut acc = Surd::from_rational(&weight * h);
                    for p in parts {
                        acc = acc.mul(p);
                    }
                    Some(acc)
                }
                _ => None,
            }
        };
        ScanValue { weight, height, factors, exact }
    }

    fn enclose(&self, bits: u32) -> Result<Interval> {
        if let Some(s) = &self.exact {
            return Ok(s.enclose(bits));
        }
        let mut acc = &Interval::from_rational(&self.weight, bits) * &self.height.enclose_at(&self.weight, bits)?;
        for f in &self.factors {
            acc = &acc * &f.enclose(bits)?;
        }
        Ok(acc)
    }

    fn cmp(&self, o: &ScanValue<'_>, precision: &Precision) -> Result<Ordering> {
        if let (Some(a), Some(b)) = (&self.exact, &o.exact) {
            return Ok(a.cmp_exact(b));
        }
        precision.refine("comparing defect values", |bits| {
            let a = self.enclose(bits)?;
            let b = o.enclose(bits)?;
            if a.hi() < b.lo() {
                Ok(Ordering::Less)
            } else if b.hi() < a.lo() {
                Ok(Ordering::Greater)
            } else {
                Err(Error::Indeterminate)
            }
        })
    }
}

struct Candidate {
    q: Vec<i64>,
    lo: f64,
}

fn record_from<'a>(
    q: Vec<i64>,
    value: &ScanValue<'a>,
    scalar: bool,
    trace: Option<Vec<TracePoint>>,
    precision: &Precision,
) -> Result<DefectRecord> {
    let iv = value.enclose(precision.start())?;
    Ok(DefectRecord {
        q_star: if scalar { QStar::Scalar(q[0]) } else { QStar::Vector(q) },
        value_lo: iv.lo_f64(),
        value_hi: iv.hi_f64(),
        exact: value.exact.as_ref().map(|s| s.to_string()),
        trace,
        value: Some(iv),
    })
}

fn select_min<'a>(
    mut cands: Vec<Candidate>,
    best_hi: f64,
    make: impl Fn(&[i64]) -> ScanValue<'a>,
    precision: &Precision,
) -> Result<(Vec<i64>, ScanValue<'a>)> {
    cands.retain(|c| c.lo <= best_hi);
    cands.sort_by(|a, b| vector_order(&a.q, &b.q));
    let mut iter = cands.into_iter();
    let first = iter.next().ok_or_else(|| Error::Invalid("empty scan range".into()))?;
    let mut best = (first.q.clone(), make(&first.q));
    for c in iter {
        let v = make(&c.q);
        if v.cmp(&best.1, precision)? == Ordering::Less {
            best = (c.q, v);
        }
    }
    Ok(best)
}

/// `min_{1<=q<=Q} q·h(q)·∏‖qα_i‖`, ties to the smallest `q`.
pub fn mad_defect(
    alpha: &TargetVector,
    height: &HeightSpec,
    q_max: u64,
    keep_trace: bool,
    precision: &Precision,
) -> Result<DefectRecord> {
    if q_max == 0 {
        return Err(Error::Invalid("scan range must contain q = 1".into()));
    }
    if q_max > (1u64 << 52) {
        return Err(Error::Invalid("scan range too large".into()));
    }
    height.validate(precision)?;
    let entries = alpha.entries();
    let make = |q: &[i64]| {
        let qr = CertifiedReal::from_int(q[0]);
        let factors = entries.iter().map(|a| a.mul(&qr).dist_to_z()).collect();
        ScanValue::new(BigRational::from_integer(q[0].into()), height, factors)
    };

    // a rational coordinate vanishes first at its denominator
    let first_zero = entries
        .iter()
        .filter_map(|a| a.as_rational())
        .map(|r| r.denom().clone())
        .min()
        .filter(|d| *d <= BigInt::from(q_max));
    if let Some(den) = first_zero {
        let q = den.to_i64().expect("bounded by q_max");
        let mut trace = None;
        if keep_trace {
            trace = Some(float_trace(alpha, height, q as u64)?);
        }
        return record_from(vec![q], &make(&[q]), true, trace, precision);
    }

    let bounds = alpha.bounds()?;
    let mut best_hi = f64::INFINITY;
    let mut record = f64::INFINITY;
    let mut cands = Vec::new();
    let mut trace = keep_trace.then(Vec::new);
    for q in 1..=q_max {
        let qf = q as f64;
        let mut val = height.bounds_at(qf).scale(qf);
        for b in &bounds {
            val = val.mul_nonneg(b.scale(qf).dist_to_z());
        }
        if val.lo <= best_hi {
            cands.push(Candidate { q: vec![q as i64], lo: val.lo });
        }
        best_hi = best_hi.min(val.hi);
        if let Some(t) = trace.as_mut() {
            if val.mid() < record {
                record = val.mid();
                t.push(TracePoint { q: QStar::Scalar(q as i64), product: record });
            }
        }
    }
    let (q, v) = select_min(cands, best_hi, make, precision)?;
    record_from(q, &v, true, trace, precision)
}

fn float_trace(alpha: &TargetVector, height: &HeightSpec, q_max: u64) -> Result<Vec<TracePoint>> {
    let bounds = alpha.bounds()?;
    let mut record = f64::INFINITY;
    let mut out = Vec::new();
    for q in 1..=q_max {
        let qf = q as f64;
        let mut val = height.bounds_at(qf).scale(qf);
        for b in &bounds {
            val = val.mul_nonneg(b.scale(qf).dist_to_z());
        }
        if val.mid() < record {
            record = val.mid();
            out.push(TracePoint { q: QStar::Scalar(q as i64), product: record });
        }
    }
    Ok(out)
}

/// `min Π₊(q)·h(Π₊(q))·‖q·α‖` over nonzero `q ∈ Z^d` with `Π₊(q) <= cap`
/// and `‖q‖∞ <= cap`; `q` and `-q` are identified.
pub fn mad_star_defect(
    alpha: &TargetVector,
    height: &HeightSpec,
    cap: u64,
    keep_trace: bool,
    precision: &Precision,
) -> Result<DefectRecord> {
    if cap == 0 {
        return Err(Error::Invalid("scan cap must be at least 1".into()));
    }
    if cap > (1u64 << 40) {
        return Err(Error::Invalid("scan cap too large".into()));
    }
    height.validate(precision)?;
    let entries = alpha.entries();
    let d = entries.len();
    let make = |q: &[i64]| {
        let mut x = CertifiedReal::from_int(0);
        for (a, &qi) in entries.iter().zip(q) {
            if qi != 0 {
                x = x.add(&a.mul(&CertifiedReal::from_int(qi)));
            }
        }
        let w = pi_plus_int(q);
        ScanValue::new(BigRational::from_integer(BigInt::from(w)), height, vec![x.dist_to_z()])
    };

    let bounds = alpha.bounds()?;
    let mut h_cache: Vec<Option<Bounds>> = vec![None; (cap as usize).min(1 << 26) + 1];
    let mut best_hi = f64::INFINITY;
    let mut record = f64::INFINITY;
    let mut cands = Vec::new();
    let mut trace = keep_trace.then(Vec::new);
    let _ = visit_canonical::<()>(d, cap as i64, cap as u128, &mut |q| {
        let mut x = Bounds::point(0.0);
        for (b, &qi) in bounds.iter().zip(q) {
            if qi != 0 {
                x = x.add(b.scale(qi as f64));
            }
        }
        let w = pi_plus_int(q) as f64;
        let hb = match h_cache.get_mut(w as usize) {
            Some(slot) => *slot.get_or_insert_with(|| height.bounds_at(w)),
            None => height.bounds_at(w),
        };
        let val = hb.scale(w).mul_nonneg(x.dist_to_z());
        if val.lo <= best_hi {
            cands.push(Candidate { q: q.to_vec(), lo: val.lo });
        }
        best_hi = best_hi.min(val.hi);
        if let Some(t) = trace.as_mut() {
            if val.mid() < record {
                record = val.mid();
                t.push(TracePoint { q: QStar::Vector(q.to_vec()), product: record });
            }
        }
        ControlFlow::Continue(())
    });
    let (q, v) = select_min(cands, best_hi, make, precision)?;
    record_from(q, &v, false, trace, precision)
}

/// `S_Y(Q) = Σ_{q ∈ X(Q), q ≠ 0} ∏_i ‖Y_i q‖⁻¹` over the box `X(Q) = ∏[-Q_j, Q_j]`.
pub fn recip_sum(y: &TargetVector, q_box: &[f64], precision: &Precision) -> Result<Interval> {
    let n = y.cols();
    if q_box.len() != n {
        return Err(Error::Invalid(format!("expected {n} box half-widths")));
    }
    if q_box.iter().any(|&b| !(b >= 1.0) || !b.is_finite()) {
        return Err(Error::Invalid("box half-widths must be finite and >= 1".into()));
    }
    let sup = q_box.iter().map(|&b| b.floor()).fold(0.0, f64::max) as i64;
    let limits: Vec<i64> = q_box.iter().map(|&b| b.floor() as i64).collect();
    let bounds = y.bounds()?;
    let m = y.rows();
    let mut total = Bounds::point(0.0);
    let mut failure = None;
    let _ = visit_canonical::<()>(n, sup, u128::MAX, &mut |q| {
        if q.iter().zip(&limits).any(|(v, l)| v.abs() > *l) {
            return ControlFlow::Continue(());
        }
        let mut prod = Bounds::point(1.0);
        for i in 0..m {
            let mut x = Bounds::point(0.0);
            for (b, &qj) in bounds[i * n..(i + 1) * n].iter().zip(q) {
                if qj != 0 {
                    x = x.add(b.scale(qj as f64));
                }
            }
            prod = prod.mul_nonneg(x.dist_to_z());
        }
        let term = match prod.recip_pos() {
            Some(t) => t,
            None => match certified_recip_term(y, q, precision) {
                Ok(t) => t,
                Err(e) => {
                    failure = Some(e);
                    return ControlFlow::Break(());
                }
            },
        };
        // q and -q contribute equally
        total = total.add(term.scale(2.0));
        ControlFlow::Continue(())
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(total.to_interval())
}

fn certified_recip_term(y: &TargetVector, q: &[i64], precision: &Precision) -> Result<Bounds> {
    let dists: Vec<CertifiedReal> = (0..y.rows()).map(|i| y.row_times(i, q).dist_to_z()).collect();
    if dists.iter().any(|d| d.is_zero_exact()) {
        return Err(Error::DegenerateTarget(format!("‖Y_i q‖ = 0 at q = {q:?}")));
    }
    precision.refine("reciprocal sum term", |bits| {
        let mut acc = Interval::one(bits);
        for d in &dists {
            acc = &acc * &d.enclose(bits)?;
        }
        if !acc.is_positive() {
            return Err(Error::Indeterminate);
        }
        Ok(Bounds::from_interval(&acc.recip()?))
    })
}

/// Whether `1, y_i1, …, y_in` are linearly independent over `Q` for every
/// row; `None` when some entry is not exact.
pub fn rows_independent(y: &TargetVector) -> Option<bool> {
    for i in 0..y.rows() {
        let mut vectors: Vec<Surd> = vec![Surd::from_int(1)];
        for e in y.row(i) {
            vectors.push(e.exact()?.clone());
        }
        if rational_rank(&vectors) < vectors.len() {
            return Some(false);
        }
    }
    Some(true)
}

fn rational_rank(vectors: &[Surd]) -> usize {
    let mut keys: Vec<BigInt> = vectors.iter().flat_map(|v| v.terms().map(|(d, _)| d.clone())).collect();
    keys.sort();
    keys.dedup();
    let mut rows: Vec<Vec<BigRational>> = vectors
        .iter()
        .map(|v| {
            keys.iter()
                .map(|k| v.terms().find(|(d, _)| *d == k).map(|(_, r)| r.clone()).unwrap_or_else(BigRational::zero))
                .collect()
        })
        .collect();
    let mut rank = 0;
    for col in 0..keys.len() {
        let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let f = &rows[r][col] / &rows[rank][col];
                for c in col..keys.len() {
                    let delta = &f * &rows[rank][c];
                    rows[r][c] -= delta;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Regression basis for [`growth_exponent`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthModel {
    /// `value ≈ C·Q^a`.
    Power,
    /// `value ≈ C·(Q log Q)^a`.
    QLogQ,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub residual: f64,
}

/// Least-squares fit of `log value` against `log g(Q)`.
pub fn growth_exponent(series: &[(f64, f64)], model: GrowthModel) -> Result<GrowthFit> {
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points, need at least 3", series.len())));
    }
    if series.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::InsufficientData("Q must be strictly increasing".into()));
    }
    let mut xs = Vec::with_capacity(series.len());
    let mut ys = Vec::with_capacity(series.len());
    for &(q, v) in series {
        let g = match model {
            GrowthModel::Power => q,
            GrowthModel::QLogQ => q * q.ln(),
        };
        if !(g > 0.0) || !(v > 0.0) {
            return Err(Error::InsufficientData(format!("non-positive sample at Q = {q}")));
        }
        xs.push(g.ln());
        ys.push(v.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(GrowthFit { slope, intercept, residual })
}

/// `(p, q)` realizing `∏|Y_i q − p_i| < ψ(T)` with `Π₊(q) < T`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub p: Vec<String>,
    pub q: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Membership {
    pub member: bool,
    pub witness: Option<Witness>,
    /// Whether an exact tie had to be resolved without intervals.
    pub exact_decision: bool,
}

/// Largest integer strictly below `t`.
pub fn strict_floor(t: &CertifiedReal, precision: &Precision) -> Result<BigInt> {
    if let Some(r) = t.as_rational() {
        return Ok(r.ceil().to_integer() - 1);
    }
    precision.refine("integer part of T", |bits| {
        let iv = t.enclose(bits)?;
        let (lo, hi) = (iv.lo().ceil(), iv.hi().ceil());
        if lo == hi {
            Ok(lo - 1)
        } else {
            Err(Error::Indeterminate)
        }
    })
}

/// Decides membership in the approximation set at level `T`: some nonzero
/// `q` with `Π₊(q) < T`, `‖q‖∞ < T` and `∏_i ‖Y_i q‖ < ψ(T)`. The witness
/// is the first such `q` in [`vector_order`] with sign fixed so its
/// first nonzero coordinate is positive.
pub fn is_mult_approximable(
    y: &TargetVector,
    psi: &PsiSpec,
    t_level: &CertifiedReal,
    precision: &Precision,
) -> Result<Membership> {
    if t_level.cmp(&CertifiedReal::from_int(1), precision)? == Ordering::Less {
        return Err(Error::OutOfDomain("T must be at least 1".into()));
    }
    let bound = strict_floor(t_level, precision)?;
    let bound = bound.to_i64().filter(|b| *b <= 1 << 20).ok_or_else(|| Error::Invalid("T too large".into()))?;
    let psi_exact = t_level.as_rational().and_then(|r| psi.exact_at(&r));
    let psi_iv = match &psi_exact {
        Some(v) => Interval::from_rational(v, 128),
        None => psi.value_at(t_level, 128)?,
    };
    let psi_b = Bounds::from_interval(&psi_iv);
    let bounds = y.bounds()?;
    let (m, n) = (y.rows(), y.cols());
    let mut found = None;
    'shells: for shell in 1..=bound {
        let mut qs = Vec::new();
        let _ = visit_canonical::<()>(n, shell, bound as u128, &mut |q| {
            if q.iter().any(|v| v.abs() == shell) {
                qs.push(q.to_vec());
            }
            ControlFlow::Continue(())
        });
        qs.sort_by(|a, b| vector_order(a, b));
        for q in qs {
            let mut prod = Bounds::point(1.0);
            for i in 0..m {
                let mut x = Bounds::point(0.0);
                for (b, &qj) in bounds[i * n..(i + 1) * n].iter().zip(&q) {
                    if qj != 0 {
                        x = x.add(b.scale(qj as f64));
                    }
                }
                prod = prod.mul_nonneg(x.dist_to_z());
            }
            if prod.lo > psi_b.hi {
                continue;
            }
            if prod.hi < psi_b.lo {
                found = Some((q, false));
                break 'shells;
            }
            if let (true, exact) = product_below_psi(y, &q, psi, t_level, psi_exact.as_ref(), precision)? {
                found = Some((q, exact));
                break 'shells;
            }
        }
    }
    match found {
        Some((q, exact)) => {
            let p = (0..m)
                .map(|i| nearest_integer(&y.row_times(i, &q), precision).map(|v| v.to_string()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Membership { member: true, witness: Some(Witness { p, q }), exact_decision: exact })
        }
        None => Ok(Membership { member: false, witness: None, exact_decision: false }),
    }
}

fn product_below_psi(
    y: &TargetVector,
    q: &[i64],
    psi: &PsiSpec,
    t_level: &CertifiedReal,
    psi_exact: Option<&BigRational>,
    precision: &Precision,
) -> Result<(bool, bool)> {
    let dists: Vec<CertifiedReal> = (0..y.rows()).map(|i| y.row_times(i, q).dist_to_z()).collect();
    if dists.iter().any(|d| d.is_zero_exact()) {
        return Ok((true, true));
    }
    let exact: Option<Vec<&Surd>> = dists.iter().map(|d| d.exact()).collect();
    if let (Some(parts), Some(bound)) = (exact, psi_exact) {
        let mut acc = Surd::from_int(1);
        for p in parts {
            acc = acc.mul(p);
        }
        return Ok((acc.cmp_exact(&Surd::from_rational(bound.clone())) == Ordering::Less, true));
    }
    precision.refine("product against psi(T)", |bits| {
        let mut acc = Interval::one(bits);
        for d in &dists {
            acc = &acc * &d.enclose(bits)?;
        }
        let bound = psi.value_at(t_level, bits)?;
        acc.lt(&bound).map(|v| (v, false)).ok_or(Error::Indeterminate)
    })
}

/// Nearest integer, halves rounded up.
pub fn nearest_integer(x: &CertifiedReal, precision: &Precision) -> Result<BigInt> {
    if let Some(s) = x.exact() {
        return Ok(s.round());
    }
    precision.refine("nearest integer", |bits| {
        let iv = x.enclose(bits)?;
        let half = Dyadic::new(BigInt::one(), -1);
        let (a, b) = (iv.lo().add(&half).floor(), iv.hi().add(&half).floor());
        if a == b {
            Ok(a)
        } else {
            Err(Error::Indeterminate)
        }
    })
}
