//! The multiplicative Dani correspondence: the rate function `R` attached
//! to `ψ`, the cone `C_R`, diagonal flows on `Λ_Y`, and the equivalence
//! and discrete-certificate checkers built on them.
//!
//! Flow quantities stay in the log domain: a flow vector stores `t_i, u_j`
//! and minima are reported as enclosures of `log δ`.

use std::cmp::Ordering;
use std::ops::ControlFlow;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::approx::{is_mult_approximable, pi_plus_int, vector_order, visit_canonical, HeightSpec, PsiSpec, TargetVector};
use crate::dyadic::Interval;
use crate::error::{Error, Result};
use crate::float::Bounds;
use crate::geometry::LatticeBasis;
use crate::real::{CertifiedReal, Precision};

const SOLVER_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub m: usize,
    pub n: usize,
}

impl Shape {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Invalid("shape needs m, n >= 1".into()));
        }
        Ok(Shape { m, n })
    }

    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    pub fn swapped(&self) -> Shape {
        Shape { m: self.n, n: self.m }
    }
}

/// `R` with `ψ(e^{t-nR(t)}) = e^{-t-mR(t)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub psi: PsiSpec,
    pub shape: Shape,
}

impl RateFunction {
    pub fn new(psi: PsiSpec, shape: Shape) -> Result<Self> {
        psi.validate(&Precision::default())?;
        Ok(RateFunction { psi, shape })
    }

    /// `G(R) = log ψ(e^{t-nR}) + t + mR`, strictly increasing in `R`.
    pub fn residual_f64(&self, t: f64, r: f64) -> f64 {
        let Shape { m, n } = self.shape;
        self.psi.log_at_f64(t - n as f64 * r) + t + m as f64 * r
    }

    fn residual(&self, t: f64, r: f64, bits: u32) -> Result<Interval> {
        let Shape { m, n } = self.shape;
        let ti = Interval::from_f64(t, bits);
        let ri = Interval::from_f64(r, bits);
        let y = &ti - &(&Interval::from_i64(n as i64, bits) * &ri);
        Ok(&(&self.psi.log_at(&y)? + &ti) + &(&Interval::from_i64(m as i64, bits) * &ri))
    }

    fn bracket(&self, t: f64) -> Result<(f64, f64)> {
        if let PsiSpec::FromHeight { kappa, height: HeightSpec::LogBeta { l, beta } } = &self.psi {
            if self.shape.dim() == *l as usize + 1 {
                // envelope of e^{(l+1)R} between κ⁻¹ and κ⁻¹ max{t,β}^{l-1} log max{t,β}
                let lk = kappa.to_f64().ln().abs();
                let big = t.max(beta.to_f64()).max(std::f64::consts::E);
                let hi = (lk + (*l as f64 - 1.0) * big.ln() + big.ln().ln().max(0.0)) / (*l as f64 + 1.0) + 1.0;
                let lo = -1.0;
                if self.residual_f64(t, lo) < 0.0 && self.residual_f64(t, hi) > 0.0 {
                    return Ok((lo, hi));
                }
                return Err(Error::BracketFailure(format!("envelope [{lo}, {hi}] does not bracket at t = {t}")));
            }
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..80 {
            let (glo, ghi) = (self.residual_f64(t, lo), self.residual_f64(t, hi));
            if glo < 0.0 && ghi > 0.0 {
                return Ok((lo, hi));
            }
            if !(glo < 0.0) {
                lo *= 2.0;
            }
            if !(ghi > 0.0) {
                hi *= 2.0;
            }
        }
        Err(Error::BracketFailure(format!("no sign change found at t = {t}")))
    }

    /// `R(t)` by bisection.
    pub fn solve(&self, t: f64) -> Result<f64> {
        let (mut lo, mut hi) = self.bracket(t)?;
        while hi - lo > SOLVER_TOL * (1.0 + lo.abs().max(hi.abs())) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.residual_f64(t, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Certified enclosure of `R(t)` for a float `t`.
    pub fn enclosure(&self, t: f64) -> Result<Interval> {
        let r = self.solve(t)?;
        let mut w = 1e-13 * (1.0 + r.abs());
        for _ in 0..8 {
            let (lo, hi) = (r - w, r + w);
            let glo = self.residual(t, lo, 128)?;
            let ghi = self.residual(t, hi, 128)?;
            if glo.is_negative() && ghi.is_positive() {
                return Ok(Interval::from_f64(lo, 128).hull(&Interval::from_f64(hi, 128)));
            }
            w *= 16.0;
        }
        Err(Error::PrecisionExhausted { bits: 128, context: format!("enclosing R({t})") })
    }

    /// `t` with `t - nR(t) = log_level`.
    pub fn time_for_level(&self, log_level: f64) -> Result<f64> {
        let n = self.shape.n as f64;
        let f = |t: f64| -> Result<f64> { Ok(t - n * self.solve(t)? - log_level) };
        if f(0.0)? > 0.0 {
            return Err(Error::OutOfDomain(format!("level e^{log_level} is below the range of t - nR(t)")));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while f(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e9 {
                return Err(Error::BracketFailure("t - nR(t) does not reach the level".into()));
            }
        }
        while hi - lo > SOLVER_TOL * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// `log ψ(x)` for the `ψ` corresponding to a rate function: solves
/// `t - nR(t) = log x` and returns `-t - mR(t)`.
pub fn log_psi_from_rate(rate: impl Fn(f64) -> f64, shape: Shape, log_x: f64) -> Result<f64> {
    let (m, n) = (shape.m as f64, shape.n as f64);
    let g = |t: f64| t - n * rate(t);
    let x0 = g(0.0);
    if log_x < x0 {
        return Err(Error::OutOfDomain(format!("log x = {log_x} below log x0 = {x0}")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while g(hi) < log_x {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::BracketFailure("t - nR(t) does not reach log x".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < log_x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(-t - m * rate(t))
}

pub fn psi_from_rate(rate: impl Fn(f64) -> f64, shape: Shape, x: f64) -> Result<f64> {
    Ok(log_psi_from_rate(rate, shape, x.ln())?.exp())
}

/// `a(t, u) = diag(e^{t_1}, …, e^{t_m}, e^{-u_1}, …, e^{-u_n})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowVector {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
}

impl FlowVector {
    pub fn zero(shape: Shape) -> Self {
        FlowVector { t: vec![0.0; shape.m], u: vec![0.0; shape.n] }
    }

    pub fn total(&self) -> f64 {
        self.t.iter().sum()
    }

    pub fn check_convention(&self, tol: f64) -> Result<()> {
        let (a, b): (f64, f64) = (self.t.iter().sum(), self.u.iter().sum());
        if (a - b).abs() > tol * (1.0 + a.abs()) {
            return Err(Error::ConventionViolation(format!("Σt = {a} but Σu = {b}")));
        }
        Ok(())
    }

    /// Membership in `C_R`: `t_i > -R(t)` and `u_j > R(t)`, given an enclosure of `R(t)`.
    pub fn in_cone(&self, r: &Interval) -> Option<bool> {
        let (rlo, rhi) = (r.lo_f64(), r.hi_f64());
        let mut decided = true;
        for &ti in &self.t {
            if ti <= -rhi {
                return Some(false);
            }
            decided &= ti > -rlo;
        }
        for &uj in &self.u {
            if uj <= rlo {
                return Some(false);
            }
            decided &= uj > rhi;
        }
        decided.then_some(true)
    }
}

/// `Λ_Y = [[I_m, Y], [0, I_n]]·Z^{m+n}`.
pub fn unipotent_lattice(y: &TargetVector) -> Result<LatticeBasis> {
    let (m, n) = (y.rows(), y.cols());
    let d = m + n;
    let rows = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if j < m || i >= m {
                        CertifiedReal::from_int((i == j) as i64)
                    } else {
                        y.get(i, j - m).clone()
                    }
                })
                .collect()
        })
        .collect();
    LatticeBasis::from_rows(rows, &Precision::default())
}

/// Row-scales the basis by `a(t, u)`.
pub fn flow_apply(basis: &LatticeBasis, fv: &FlowVector) -> Result<LatticeBasis> {
    let d = basis.dim();
    if fv.t.len() + fv.u.len() != d {
        return Err(Error::Invalid("flow vector dimension mismatch".into()));
    }
    fv.check_convention(1e-12)?;
    let scales: Vec<CertifiedReal> = fv
        .t
        .iter()
        .map(|&t| t)
        .chain(fv.u.iter().map(|&u| -u))
        .map(|s| if s == 0.0 { CertifiedReal::from_int(1) } else { CertifiedReal::from_f64(s).exp() })
        .collect();
    let columns = basis
        .columns()
        .iter()
        .map(|col| col.iter().zip(&scales).map(|(x, s)| x.mul(s)).collect())
        .collect();
    LatticeBasis::new(columns, &Precision::default())
}

/// First minimum of `a(t,u)Λ_Y` in the log domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowMinimum {
    /// Enclosure of `log δ` as `[lo, hi]`.
    pub log_delta: (f64, f64),
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    #[serde(skip)]
    pub interval: Option<Interval>,
}

fn ln_abs(x: &CertifiedReal, bits: u32) -> Result<Option<Interval>> {
    if x.is_zero_exact() {
        return Ok(None);
    }
    let iv = x.enclose(bits)?.abs();
    if iv.contains_zero() {
        return Err(Error::Indeterminate);
    }
    Ok(Some(iv.ln()?))
}

/// `log ‖a(t,u)·v(p,q)‖∞` for the lattice vector `(Y q - p, q)`.
fn log_norm(y: &TargetVector, fv: &FlowVector, p: &[i64], q: &[i64], bits: u32) -> Result<Option<Interval>> {
    let mut acc: Option<Interval> = None;
    let mut push = |v: Interval| {
        acc = Some(match acc.take() {
            Some(a) => a.max(&v),
            None => v,
        })
    };
    for i in 0..y.rows() {
        let val = y.row_times(i, q).sub(&CertifiedReal::from_int(p[i]));
        if let Some(l) = ln_abs(&val, bits)? {
            push(&l + &Interval::from_f64(fv.t[i], bits));
        }
    }
    for (j, &qj) in q.iter().enumerate() {
        if qj != 0 {
            let l = Interval::from_i64(qj.abs(), bits).ln()?;
            push(&l - &Interval::from_f64(fv.u[j], bits));
        }
    }
    Ok(acc)
}

fn ln_bounds(b: Bounds) -> Bounds {
    let widen = |x: f64| 1e-14 * (1.0 + x.abs());
    let lo = if b.lo > 0.0 { b.lo.ln() } else { f64::NEG_INFINITY };
    let hi = b.hi.ln();
    Bounds { lo: lo - widen(lo), hi: hi + widen(hi) }
}

/// Certified `δ(a(t,u)Λ_Y)` by enumerating every lattice vector of sup norm
/// at most 1 (Minkowski guarantees one exists since `det = 1`).
pub fn flow_minimum(y: &TargetVector, fv: &FlowVector, precision: &Precision) -> Result<FlowMinimum> {
    let (m, n) = (y.rows(), y.cols());
    if fv.t.len() != m || fv.u.len() != n {
        return Err(Error::Invalid("flow vector does not match the target shape".into()));
    }
    let ybounds: Vec<Bounds> = y.entries().iter().map(|e| Ok(Bounds::from_interval(&e.enclose(128)?))).collect::<Result<_>>()?;
    let qlim: Vec<i64> = fv.u.iter().map(|&u| (u.exp() * (1.0 + 1e-9)).floor() as i64).collect();
    let plim: Vec<f64> = fv.t.iter().map(|&t| (-t).exp() * (1.0 + 1e-9)).collect();
    let total: f64 = qlim.iter().map(|&k| 2.0 * k as f64 + 1.0).product();
    if total > 2e7 {
        return Err(Error::BudgetExceeded(format!("{total} q-vectors in the flow box")));
    }
    // (p, q, f64 bounds of the log norm)
    let mut cands: Vec<(Vec<i64>, Vec<i64>, Bounds)> = Vec::new();
    let mut best_hi = f64::INFINITY;
    let mut consider = |q: &[i64], cands: &mut Vec<(Vec<i64>, Vec<i64>, Bounds)>| {
        let mut ranges = Vec::with_capacity(m);
        let mut xs = Vec::with_capacity(m);
        for i in 0..m {
            let mut x = Bounds::point(0.0);
            for (b, &qj) in ybounds[i * n..(i + 1) * n].iter().zip(q) {
                if qj != 0 {
                    x = x.add(b.scale(qj as f64));
                }
            }
            let lo = (x.lo - plim[i]).ceil() as i64;
            let hi = (x.hi + plim[i]).floor() as i64;
            if lo > hi {
                return;
            }
            ranges.push((lo, hi));
            xs.push(x);
        }
        let mut p: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let nonzero = q.iter().any(|&v| v != 0) || p.iter().any(|&v| v != 0);
            let canonical = q.iter().chain(p.iter()).find(|&&v| v != 0).is_some_and(|&v| v > 0) || q.iter().any(|&v| v != 0);
            if nonzero && canonical {
                let mut nb = Bounds::point(f64::NEG_INFINITY);
                for i in 0..m {
                    let comp = xs[i].add(Bounds::point(-(p[i] as f64))).abs();
                    if comp.hi > 0.0 {
                        let l = ln_bounds(comp);
                        nb = nb.max(Bounds { lo: l.lo + fv.t[i], hi: l.hi + fv.t[i] });
                    }
                }
                for (j, &qj) in q.iter().enumerate() {
                    if qj != 0 {
                        let l = ln_bounds(Bounds::point(qj.abs() as f64));
                        nb = nb.max(Bounds { lo: l.lo - fv.u[j], hi: l.hi - fv.u[j] });
                    }
                }
                if nb.lo <= best_hi {
                    best_hi = best_hi.min(nb.hi);
                    cands.push((p.clone(), q.to_vec(), nb));
                }
            }
            let mut i = 0;
            loop {
                if i == m {
                    return;
                }
                if p[i] < ranges[i].1 {
                    p[i] += 1;
                    break;
                }
                p[i] = ranges[i].0;
                i += 1;
            }
        }
    };
    consider(&vec![0; n], &mut cands);
    let sup = qlim.iter().copied().max().unwrap_or(0);
    let _ = visit_canonical::<()>(n, sup, u128::MAX, &mut |q| {
        if q.iter().zip(&qlim).all(|(v, l)| v.abs() <= *l) {
            consider(q, &mut cands);
        }
        ControlFlow::Continue(())
    });
    cands.retain(|c| c.2.lo <= best_hi);
    if cands.is_empty() {
        return Err(Error::Invalid("no lattice vector in the unit box".into()));
    }
    precision.refine("flow minimum", |bits| {
        let mut lo = f64::INFINITY;
        let mut best: Option<(Interval, usize)> = None;
        for (k, (p, q, _)) in cands.iter().enumerate() {
            let Some(v) = log_norm(y, fv, p, q, bits)? else { continue };
            lo = lo.min(v.lo_f64());
            best = Some(match best {
                Some((b, bk)) if b.hi() <= v.hi() => (b, bk),
                _ => (v, k),
            });
        }
        let (b, k) = best.ok_or_else(|| Error::Invalid("only the zero vector was found".into()))?;
        let iv = Interval::from_f64(lo, bits).hull(&b);
        let (p, q, _) = &cands[k];
        Ok(FlowMinimum { log_delta: (iv.lo_f64(), b.hi_f64()), p: p.clone(), q: q.clone(), interval: Some(iv) })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeSample {
    pub flow: FlowVector,
    pub log_delta: (f64, f64),
    pub minus_r: (f64, f64),
    /// `δ < e^{-R(t)}`.
    pub below: bool,
}

/// Certified comparison of `δ(a(t,u)Λ_Y)` with `e^{-R(t)}` at each sample.
pub fn delta_along_cone(y: &TargetVector, rate: &RateFunction, samples: &[FlowVector], precision: &Precision) -> Result<Vec<ConeSample>> {
    samples
        .iter()
        .map(|fv| {
            fv.check_convention(1e-9)?;
            let r = rate.enclosure(fv.total())?;
            let fm = flow_minimum(y, fv, precision)?;
            let minus_r = (-r.hi_f64(), -r.lo_f64());
            let below = if fm.log_delta.1 < minus_r.0 {
                true
            } else if fm.log_delta.0 > minus_r.1 {
                false
            } else {
                return Err(Error::PrecisionExhausted { bits: 128, context: "log δ against -R(t)".into() });
            };
            Ok(ConeSample { flow: fv.clone(), log_delta: fm.log_delta, minus_r, below })
        })
        .collect()
}

/// `(t, u)` on the slice `Σ t_i = Σ u_j = t` with `t_i = -R + a_i`,
/// `u_j = R + b_j` and `a, b` on a simplex grid of `parts` steps.
pub fn cone_slice_grid(shape: Shape, t: f64, r: f64, parts: usize) -> Vec<FlowVector> {
    fn compositions(k: usize, total: usize) -> Vec<Vec<usize>> {
        if k == 1 {
            return vec![vec![total]];
        }
        (1..total)
            .flat_map(|first| {
                compositions(k - 1, total - first).into_iter().map(move |mut rest| {
                    rest.insert(0, first);
                    rest
                })
            })
            .collect()
    }
    let (m, n) = (shape.m, shape.n);
    let sa = t + m as f64 * r;
    let sb = t - n as f64 * r;
    if sa <= 0.0 || sb <= 0.0 {
        return Vec::new();
    }
    let ta: Vec<Vec<f64>> = compositions(m, parts.max(m))
        .into_iter()
        .map(|c| c.iter().map(|&k| -r + sa * k as f64 / parts.max(m) as f64).collect())
        .collect();
    let ub: Vec<Vec<f64>> = compositions(n, parts.max(n))
        .into_iter()
        .map(|c| c.iter().map(|&k| r + sb * k as f64 / parts.max(n) as f64).collect())
        .collect();
    let mut out = Vec::new();
    for a in &ta {
        for b in &ub {
            out.push(FlowVector { t: a.clone(), u: b.clone() });
        }
    }
    out
}

/// Constructed flow witness with its verification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynWitness {
    pub flow: FlowVector,
    pub p: Vec<String>,
    pub q: Vec<i64>,
    pub log_delta_hi: f64,
    pub minus_r_lo: f64,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrespondenceReport {
    pub dioph: bool,
    #[serde(rename = "dyn")]
    pub dynamic: bool,
    pub t: f64,
    pub r: (f64, f64),
    pub dioph_q: Option<Vec<i64>>,
    /// First class `(p, q)` whose cone inequalities are feasible.
    pub dyn_class: Option<Vec<i64>>,
    pub witness: Option<DynWitness>,
    /// Grid points of the slice confirmed with `δ >= e^{-R(t)}`.
    pub grid_checked: usize,
    /// Classes decided through the defining identity of `R`.
    pub exact_fallbacks: usize,
}

/// Builds `(t, u) ∈ C_R` with `Σ = t` from a Diophantine solution.
fn construct_flow(logs_y: &[Option<f64>], logs_q: &[f64], t: f64, r: f64) -> Option<FlowVector> {
    let m = logs_y.len();
    let n = logs_q.len();
    let sa = t + m as f64 * r;
    let sb = t - n as f64 * r;
    if sa <= 0.0 || sb <= 0.0 {
        return None;
    }
    // a_i' = t_i' + R with |y_i| = e^{-t_i'-R}
    let a_prime: Vec<Option<f64>> = logs_y.iter().map(|l| l.map(|v| -v)).collect();
    let finite: f64 = a_prime.iter().flatten().sum();
    let infinite = a_prime.iter().filter(|a| a.is_none()).count();
    let a: Vec<f64> = if infinite == 0 {
        if finite <= sa {
            return None;
        }
        a_prime.iter().map(|x| x.unwrap() * sa / finite).collect()
    } else {
        let shares: Vec<Option<f64>> = a_prime.iter().map(|x| x.map(|v| v.min(sa / m as f64) / 2.0)).collect();
        let used: f64 = shares.iter().flatten().sum();
        let rest = (sa - used) / infinite as f64;
        shares.iter().map(|s| s.unwrap_or(rest)).collect()
    };
    if a.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let b_prime: f64 = logs_q.iter().sum();
    if b_prime >= sb {
        return None;
    }
    let slack = (sb - b_prime) / n as f64;
    let mut fv = FlowVector {
        t: a.iter().map(|x| x - r).collect(),
        u: logs_q.iter().map(|b| r + b + slack).collect(),
    };
    // close the sums exactly on the last coordinates
    let (st, su): (f64, f64) = (fv.t[..m - 1].iter().sum(), fv.u[..n - 1].iter().sum());
    fv.t[m - 1] = t - st;
    fv.u[n - 1] = t - su;
    Some(fv)
}

/// Checks `Y ∈ S×(ψ, T)` against the existence of `(t, u) ∈ C_R` with
/// `δ(a(t,u)Λ_Y) < e^{-R(t)}` and `T = e^{t-nR(t)}`.
pub fn correspondence_check(y: &TargetVector, psi: &PsiSpec, t_level: &CertifiedReal, precision: &Precision) -> Result<CorrespondenceReport> {
    let shape = Shape::new(y.rows(), y.cols())?;
    let rate = RateFunction::new(psi.clone(), shape)?;
    let dioph = is_mult_approximable(y, psi, t_level, precision)?;

    let log_t = t_level.enclose(128)?.ln()?.mid_f64();
    let t = rate.time_for_level(log_t)?;
    let r_iv = rate.enclosure(t)?;
    let r = r_iv.mid_f64();
    let (m, n) = (shape.m, shape.n);
    let bits = 128;
    let ti = Interval::from_f64(t, bits);
    let mi = Interval::from_i64(m as i64, bits);
    let ni = Interval::from_i64(n as i64, bits);
    // t + mR and t - nR as enclosures
    let sa = &ti + &(&mi * &r_iv);
    let sb = &ti - &(&ni * &r_iv);
    let level_exact = t_level.as_rational();
    let psi_exact = level_exact.as_ref().and_then(|x| psi.exact_at(x));

    let bound = (t_level.to_f64().ceil() as i64).max(1);
    let mut fallbacks = 0usize;
    let mut dyn_class: Option<Vec<i64>> = None;
    let mut failure: Option<Error> = None;
    let _ = visit_canonical(n, bound, 2 * bound as u128, &mut |q| {
        // u-part: Σ log|q_j|_+ < t - nR(t)
        let lq: f64 = q.iter().filter(|&&v| v != 0).map(|&v| (v.abs() as f64).ln()).sum();
        if lq > sb.hi_f64() + 1e-9 {
            return ControlFlow::Continue(());
        }
        let u_ok = match Interval::from_rational(&BigRational::from_integer(BigInt::from(pi_plus_int(q))), bits).ln() {
            Ok(l) => match l.lt(&sb) {
                Some(v) => v,
                None => match &level_exact {
                    Some(level) => {
                        fallbacks += 1;
                        BigRational::from_integer(BigInt::from(pi_plus_int(q))) < *level
                    }
                    None => {
                        failure = Some(Error::PrecisionExhausted { bits, context: "u-part of the cone".into() });
                        return ControlFlow::Break(());
                    }
                },
            },
            Err(e) => {
                failure = Some(e);
                return ControlFlow::Break(());
            }
        };
        if !u_ok {
            return ControlFlow::Continue(());
        }
        // t-part: |y_i| < 1 and Σ -log|y_i| > t + mR(t), with p_i nearest
        let mut sum = Interval::zero(bits);
        let mut infinite = false;
        let mut prod = CertifiedReal::from_int(1);
        for i in 0..m {
            let x = y.row_times(i, q).dist_to_z();
            if x.is_zero_exact() {
                infinite = true;
                continue;
            }
            prod = prod.mul(&x);
            match ln_abs(&x, bits) {
                Ok(Some(l)) => sum = &sum - &l,
                Ok(None) => infinite = true,
                Err(e) => {
                    failure = Some(e);
                    return ControlFlow::Break(());
                }
            }
        }
        let t_ok = if infinite {
            true
        } else {
            match sa.lt(&sum) {
                Some(v) => v,
                None => match (&psi_exact, prod.as_rational()) {
                    (Some(bound), Some(pr)) => {
                        fallbacks += 1;
                        pr < *bound
                    }
                    _ => {
                        failure = Some(Error::PrecisionExhausted { bits, context: "t-part of the cone".into() });
                        return ControlFlow::Break(());
                    }
                },
            }
        };
        if t_ok {
            match &dyn_class {
                Some(c) if vector_order(c, q) != Ordering::Greater => {}
                _ => dyn_class = Some(q.to_vec()),
            }
        }
        ControlFlow::Continue(())
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let mut witness = None;
    let mut grid_checked = 0;
    if let Some(w) = &dioph.witness {
        let mut logs_y = Vec::with_capacity(m);
        for i in 0..m {
            let p: BigInt = w.p[i].parse().map_err(|_| Error::Parse("witness p".into()))?;
            let val = y.row_times(i, &w.q).sub(&CertifiedReal::from_int(p));
            logs_y.push(if val.is_zero_exact() { None } else { Some(val.to_f64().abs().ln()) });
        }
        let logs_q: Vec<f64> = w.q.iter().map(|&v| (v.abs().max(1) as f64).ln()).collect();
        if let Some(fv) = construct_flow(&logs_y, &logs_q, t, r) {
            let fm = flow_minimum(y, &fv, precision)?;
            let in_cone = fv.in_cone(&r_iv) == Some(true);
            let minus_r_lo = -r_iv.hi_f64();
            witness = Some(DynWitness {
                verified: in_cone && fm.log_delta.1 < minus_r_lo,
                flow: fv,
                p: w.p.clone(),
                q: w.q.clone(),
                log_delta_hi: fm.log_delta.1,
                minus_r_lo,
            });
        }
    } else {
        for fv in cone_slice_grid(shape, t, r, 4) {
            if fv.in_cone(&r_iv) != Some(true) {
                continue;
            }
            let fm = flow_minimum(y, &fv, precision)?;
            if fm.log_delta.1 < -r_iv.hi_f64() {
                // converse direction: a short vector forces membership
                let level = CertifiedReal::from_f64(fv.total() - n as f64 * r).exp();
                if is_mult_approximable(y, psi, &level, precision)?.member {
                    continue;
                }
                return Err(Error::Invalid(format!("short vector at {fv:?} without a Diophantine solution")));
            }
            grid_checked += 1;
        }
    }

    Ok(CorrespondenceReport {
        dioph: dioph.member,
        dynamic: dyn_class.is_some(),
        t,
        r: (r_iv.lo_f64(), r_iv.hi_f64()),
        dioph_q: dioph.witness.map(|w| w.q),
        dyn_class,
        witness,
        grid_checked,
        exact_fallbacks: fallbacks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateFailure {
    pub flow: FlowVector,
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    pub log_margin_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteCertificate {
    pub y: Vec<String>,
    pub psi_spec: PsiSpec,
    pub beta: f64,
    pub t_max: f64,
    pub grid_points_checked: usize,
    /// Smallest certified lower bound of `log δ + R(t)`.
    pub min_margin_log: f64,
    pub verified: bool,
    /// `e^{-mC}·e^{-nCλ}` with `C = β(2m+n)`.
    pub c_prime: Option<String>,
    pub c_prime_f64: Option<f64>,
    /// The conclusion covers `T <= e^{T_max - nR(T_max)}`.
    pub level_max: f64,
    pub failures: Vec<CertificateFailure>,
}

/// Checks `δ(a(t,u)Λ_Y) > e^{-R(t)}` on `C_R ∩ βZ^{m+n}` with `t <= T_max`.
pub fn discrete_certificate(y: &TargetVector, psi: &PsiSpec, beta: f64, t_max: f64, precision: &Precision) -> Result<DiscreteCertificate> {
    if !(beta >= 1.0) {
        return Err(Error::Invalid("beta must be at least 1".into()));
    }
    let shape = Shape::new(y.rows(), y.cols())?;
    let rate = RateFunction::new(psi.clone(), shape)?;
    let (m, n) = (shape.m, shape.n);
    let steps = (t_max / beta).floor() as i64;
    let mut checked = 0;
    let mut min_margin = f64::INFINITY;
    let mut failures = Vec::new();
    for k in 0..=steps {
        let t = k as f64 * beta;
        let r_iv = rate.enclosure(t)?;
        // integer grid: t_i = β a_i with a_i > -R/β, Σ a_i = k; same for u with b_j > R/β
        let amin = (-r_iv.hi_f64() / beta).floor() as i64 + 1;
        let bmin = (r_iv.hi_f64() / beta).floor() as i64 + 1;
        for a in integer_compositions(m, k, amin) {
            for b in integer_compositions(n, k, bmin) {
                let fv = FlowVector {
                    t: a.iter().map(|&x| x as f64 * beta).collect(),
                    u: b.iter().map(|&x| x as f64 * beta).collect(),
                };
                match fv.in_cone(&r_iv) {
                    Some(true) => {}
                    Some(false) => continue,
                    None => return Err(Error::PrecisionExhausted { bits: 128, context: "grid point on the cone boundary".into() }),
                }
                let fm = flow_minimum(y, &fv, precision)?;
                checked += 1;
                let margin_lo = fm.log_delta.0 + r_iv.lo_f64();
                let margin_hi = fm.log_delta.1 + r_iv.hi_f64();
                min_margin = min_margin.min(margin_lo);
                if !(margin_lo > 0.0) {
                    if margin_hi >= 0.0 {
                        return Err(Error::PrecisionExhausted { bits: 128, context: format!("margin at t = {t}") });
                    }
                    failures.push(CertificateFailure { flow: fv, p: fm.p, q: fm.q, log_margin_hi: margin_hi });
                }
            }
        }
    }
    let verified = failures.is_empty() && checked > 0;
    let lambda = psi.sub_homogeneity();
    let (c_prime, c_prime_f64) = match (&lambda, verified) {
        (Some(lam), true) => {
            let c = beta * (2 * m + n) as f64;
            let lam_f = lam.to_f64();
            let expr = format!("exp(-{}) * exp(-{} * {})", fmt_num(m as f64 * c), fmt_num(n as f64 * c), lam.to_expr());
            (Some(expr), Some((-(m as f64) * c - n as f64 * c * lam_f).exp()))
        }
        _ => (None, None),
    };
    let r_max = rate.solve(t_max)?;
    Ok(DiscreteCertificate {
        y: y.entries().iter().map(|e| e.entry_string()).collect(),
        psi_spec: psi.clone(),
        beta,
        t_max,
        grid_points_checked: checked,
        min_margin_log: if checked > 0 { min_margin } else { f64::NAN },
        verified,
        c_prime,
        c_prime_f64,
        level_max: (t_max - n as f64 * r_max).exp(),
        failures,
    })
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Integer vectors of length `k` with entries `>= min` summing to `total`.
fn integer_compositions(k: usize, total: i64, min: i64) -> Vec<Vec<i64>> {
    if k == 1 {
        return if total >= min { vec![vec![total]] } else { Vec::new() };
    }
    let mut out = Vec::new();
    let max_first = total - min * (k as i64 - 1);
    for first in min..=max_first {
        for mut rest in integer_compositions(k - 1, total - first, min) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Measured properties of the rate function of `κψ_{l,β}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    /// Largest `|e^{(l+1)R}` vs `κ⁻¹h_{l,β}(e^{t-nR})|` in log space.
    pub identity_residual: f64,
    /// `κ⁻¹ <= e^{(l+1)R(t)} <= κ⁻¹ max{t,β}^{l-1} log max{t,β}` on the grid.
    pub envelope_holds: bool,
    /// The lower bound with `2^{-l}` for `t >= 4 max{|log κ|, l log β}`.
    pub large_t_bound_holds: bool,
    pub r_non_decreasing: bool,
    pub lower_flow_increasing: bool,
    pub upper_flow_non_decreasing: bool,
    /// `sup |R - R*|` with `R*` for the swapped shape.
    pub max_gap_to_swapped: f64,
    /// `sup R·R'` by finite differences.
    pub max_r_times_slope: f64,
}

/// Property check for `ψ = κψ_{l,β}` with shape `(l,1)` or `(1,l)`.
pub fn rate_property_check(rate: &RateFunction, t_grid: &[f64]) -> Result<RateReport> {
    let PsiSpec::FromHeight { kappa, height: height @ HeightSpec::LogBeta { l, beta } } = &rate.psi else {
        return Err(Error::Invalid("property check needs psi = kappa psi_{l,beta}".into()));
    };
    let Shape { m, n } = rate.shape;
    if m + n != *l as usize + 1 {
        return Err(Error::Invalid("shape must be (l,1) or (1,l)".into()));
    }
    let lk = kappa.to_f64().ln();
    let bf = beta.to_f64();
    let lf = *l as f64;
    let swapped = RateFunction::new(rate.psi.clone(), rate.shape.swapped())?;
    let threshold = 4.0 * lk.abs().max(lf * bf.ln());
    let tol = 1e-9;
    let mut report = RateReport {
        identity_residual: 0.0,
        envelope_holds: true,
        large_t_bound_holds: true,
        r_non_decreasing: true,
        lower_flow_increasing: true,
        upper_flow_non_decreasing: true,
        max_gap_to_swapped: 0.0,
        max_r_times_slope: 0.0,
    };
    let mut prev: Option<(f64, f64)> = None;
    for &t in t_grid {
        let r = rate.solve(t)?;
        let lhs = (lf + 1.0) * r;
        let rhs = -lk + height.log_at_f64(t - n as f64 * r);
        report.identity_residual = report.identity_residual.max((lhs - rhs).abs());
        let big = t.max(bf);
        let upper = -lk + (lf - 1.0) * big.ln() + big.ln().ln();
        report.envelope_holds &= -lk <= lhs + tol && lhs <= upper + tol;
        if t >= threshold {
            report.large_t_bound_holds &= lhs >= upper - lf * 2f64.ln() - tol;
        }
        report.max_gap_to_swapped = report.max_gap_to_swapped.max((r - swapped.solve(t)?).abs());
        if let Some((tp, rp)) = prev {
            report.r_non_decreasing &= r >= rp - tol;
            report.lower_flow_increasing &= t - n as f64 * r > tp - n as f64 * rp;
            report.upper_flow_non_decreasing &= t + m as f64 * r >= tp + m as f64 * rp - tol;
            let slope = (r - rp) / (t - tp);
            report.max_r_times_slope = report.max_r_times_slope.max(r * slope);
        }
        prev = Some((t, r));
    }
    Ok(report)
}
