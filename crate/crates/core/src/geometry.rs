//! Geometry of numbers in the sup norm: successive minima, exterior-power
//! minima, dual lattices, box counting and the classical inequalities
//! relating them.
//!
//! Enumeration reduces the basis with floating-point LLL (only the
//! unimodular transform is kept, so the lattice is never perturbed), bounds
//! coefficients through an exactly computed inverse, and prefilters with
//! outward-rounded `f64` bounds before any exact comparison.

use std::cmp::Ordering;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::approx::vector_order;
use crate::error::{Error, Result};
use crate::float::Bounds;
use crate::real::{CertifiedReal, Precision};

/// Norm used for minima.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Sup,
    /// Polar of the sup-norm ball.
    L1,
}

impl Norm {
    fn bounds(self, v: &[Bounds]) -> Bounds {
        match self {
            Norm::Sup => v.iter().fold(Bounds::point(0.0), |acc, x| acc.max(x.abs())),
            Norm::L1 => v.iter().fold(Bounds::point(0.0), |acc, x| acc.add(x.abs())),
        }
    }

    fn exact(self, v: &[CertifiedReal], precision: &Precision) -> Result<CertifiedReal> {
        let mut acc = CertifiedReal::from_int(0);
        for x in v {
            let a = abs(x, precision)?;
            acc = match self {
                Norm::Sup => {
                    if a.cmp(&acc, precision)? == Ordering::Greater {
                        a
                    } else {
                        acc
                    }
                }
                Norm::L1 => acc.add(&a),
            };
        }
        Ok(acc)
    }
}

fn abs(x: &CertifiedReal, precision: &Precision) -> Result<CertifiedReal> {
    Ok(if x.signum(precision)? < 0 { x.neg() } else { x.clone() })
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Lattice `B·Z^d`; `columns[j]` is the `j`-th basis vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "BasisData", into = "BasisData")]
pub struct LatticeBasis {
    dim: usize,
    columns: Vec<Vec<CertifiedReal>>,
    det: CertifiedReal,
    reduced: OnceLock<Reduced>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BasisData {
    dim: usize,
    columns: Vec<Vec<CertifiedReal>>,
}

impl TryFrom<BasisData> for LatticeBasis {
    type Error = Error;
    fn try_from(d: BasisData) -> Result<Self> {
        let b = LatticeBasis::new(d.columns, &Precision::from_env())?;
        if b.dim != d.dim {
            return Err(Error::Invalid("dim does not match columns".into()));
        }
        Ok(b)
    }
}

impl From<LatticeBasis> for BasisData {
    fn from(b: LatticeBasis) -> Self {
        BasisData { dim: b.dim, columns: b.columns }
    }
}

impl PartialEq for LatticeBasis {
    fn eq(&self, o: &Self) -> bool {
        self.columns == o.columns
    }
}

impl LatticeBasis {
    pub fn new(columns: Vec<Vec<CertifiedReal>>, precision: &Precision) -> Result<Self> {
        let dim = columns.len();
        if dim == 0 || columns.iter().any(|c| c.len() != dim) {
            return Err(Error::Invalid("basis must be a nonempty square matrix".into()));
        }
        let det = determinant(&transpose(&columns), precision)?;
        if det.signum(precision)? == 0 {
            return Err(Error::RankDeficient("basis is singular".into()));
        }
        Ok(LatticeBasis { dim, columns, det, reduced: OnceLock::new() })
    }

    /// From the matrix `B` given row by row; the basis vectors are its columns.
    pub fn from_rows(rows: Vec<Vec<CertifiedReal>>, precision: &Precision) -> Result<Self> {
        Self::new(transpose(&rows), precision)
    }

    pub fn identity(dim: usize) -> Self {
        let cols = (0..dim)
            .map(|j| (0..dim).map(|i| CertifiedReal::from_int((i == j) as i64)).collect())
            .collect();
        Self::new(cols, &Precision::default()).expect("identity is nonsingular")
    }

    pub fn diagonal(entries: Vec<CertifiedReal>, precision: &Precision) -> Result<Self> {
        let d = entries.len();
        let cols = entries
            .into_iter()
            .enumerate()
            .map(|(j, e)| (0..d).map(|i| if i == j { e.clone() } else { CertifiedReal::from_int(0) }).collect())
            .collect();
        Self::new(cols, precision)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> &[Vec<CertifiedReal>] {
        &self.columns
    }

    pub fn det(&self) -> &CertifiedReal {
        &self.det
    }

    pub fn abs_det(&self, precision: &Precision) -> Result<CertifiedReal> {
        abs(&self.det, precision)
    }

    /// `B·c`.
    pub fn vector(&self, coeffs: &[i64]) -> Vec<CertifiedReal> {
        combine(&self.columns, coeffs)
    }

    fn reduced(&self, precision: &Precision) -> Result<&Reduced> {
        if let Some(r) = self.reduced.get() {
            return Ok(r);
        }
        let r = Reduced::build(self, precision)?;
        Ok(self.reduced.get_or_init(|| r))
    }
}

fn transpose(m: &[Vec<CertifiedReal>]) -> Vec<Vec<CertifiedReal>> {
    let n = m.len();
    (0..n).map(|j| (0..n).map(|i| m[i][j].clone()).collect()).collect()
}

fn combine(columns: &[Vec<CertifiedReal>], coeffs: &[i64]) -> Vec<CertifiedReal> {
    let d = columns[0].len();
    let mut v = vec![CertifiedReal::from_int(0); d];
    for (col, &c) in columns.iter().zip(coeffs) {
        if c == 0 {
            continue;
        }
        let k = CertifiedReal::from_int(c);
        for (vi, x) in v.iter_mut().zip(col) {
            *vi = vi.add(&x.mul(&k));
        }
    }
    v
}

fn pivot_row(m: &[Vec<CertifiedReal>], col: usize, precision: &Precision) -> Result<Option<usize>> {
    // prefer exactly known nonzero pivots
    for (r, row) in m.iter().enumerate().skip(col) {
        if row[col].exact().is_some_and(|s| !s.is_zero()) {
            return Ok(Some(r));
        }
    }
    for (r, row) in m.iter().enumerate().skip(col) {
        if !row[col].is_zero_exact() && row[col].signum(precision)? != 0 {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

/// Determinant of a square matrix given row by row.
pub fn determinant(rows: &[Vec<CertifiedReal>], precision: &Precision) -> Result<CertifiedReal> {
    let n = rows.len();
    let mut m = rows.to_vec();
    let mut det = CertifiedReal::from_int(1);
    for col in 0..n {
        let Some(p) = pivot_row(&m, col, precision)? else {
            return Ok(CertifiedReal::from_int(0));
        };
        if p != col {
            m.swap(p, col);
            det = det.neg();
        }
        det = det.mul(&m[col][col]);
        for r in col + 1..n {
            if m[r][col].is_zero_exact() {
                continue;
            }
            let f = m[r][col].div(&m[col][col]);
            for c in col..n {
                let delta = f.mul(&m[col][c]);
                m[r][c] = m[r][c].sub(&delta);
            }
        }
    }
    Ok(det)
}

/// Inverse of a nonsingular square matrix given row by row.
pub fn inverse(rows: &[Vec<CertifiedReal>], precision: &Precision) -> Result<Vec<Vec<CertifiedReal>>> {
    let n = rows.len();
    let mut m = rows.to_vec();
    let mut inv: Vec<Vec<CertifiedReal>> = (0..n)
        .map(|i| (0..n).map(|j| CertifiedReal::from_int((i == j) as i64)).collect())
        .collect();
    for col in 0..n {
        let p = pivot_row(&m, col, precision)?.ok_or_else(|| Error::RankDeficient("singular matrix".into()))?;
        m.swap(p, col);
        inv.swap(p, col);
        let piv = m[col][col].clone();
        for c in 0..n {
            m[col][c] = m[col][c].div(&piv);
            inv[col][c] = inv[col][c].div(&piv);
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero_exact() {
                continue;
            }
            let f = m[r][col].clone();
            for c in 0..n {
                let a = f.mul(&m[col][c]);
                m[r][c] = m[r][c].sub(&a);
                let b = f.mul(&inv[col][c]);
                inv[r][c] = inv[r][c].sub(&b);
            }
        }
    }
    Ok(inv)
}

/// LLL on floating-point columns; returns the unimodular transform `U`
/// (`u[i][j]`, reduced column `j` is `Σ_i u[i][j]·b_i`).
pub fn lll_transform(columns: &[Vec<f64>]) -> Vec<Vec<i64>> {
    let n = columns.len();
    let mut b: Vec<Vec<f64>> = columns.to_vec();
    let mut u: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i64).collect()).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let gso = |b: &[Vec<f64>]| {
        let mut star: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut mu = vec![vec![0.0; n]; n];
        let mut norms = vec![0.0; n];
        for i in 0..n {
            let mut v = b[i].clone();
            for j in 0..i {
                mu[i][j] = if norms[j] > 0.0 { dot(&b[i], &star[j]) / norms[j] } else { 0.0 };
                for (vk, sk) in v.iter_mut().zip(&star[j]) {
                    *vk -= mu[i][j] * sk;
                }
            }
            norms[i] = dot(&v, &v);
            star.push(v);
        }
        (mu, norms)
    };
    let snapshot = u.clone();
    let mut k = 1;
    let mut steps = 0;
    while k < n {
        steps += 1;
        if steps > 10_000 {
            return snapshot;
        }
        let (mu, _) = gso(&b);
        for j in (0..k).rev() {
            let r = mu[k][j].round();
            if r != 0.0 && r.is_finite() && r.abs() < 1e12 {
                let ri = r as i64;
                let (bj, uj) = (b[j].clone(), (0..n).map(|i| u[i][j]).collect::<Vec<_>>());
                for (x, y) in b[k].iter_mut().zip(&bj) {
                    *x -= r * y;
                }
                for i in 0..n {
                    match uj[i].checked_mul(ri).and_then(|p| u[i][k].checked_sub(p)) {
                        Some(v) if v.abs() < 1 << 40 => u[i][k] = v,
                        _ => return snapshot,
                    }
                }
            }
        }
        let (mu, norms) = gso(&b);
        if norms[k] >= (0.99 - mu[k][k - 1] * mu[k][k - 1]) * norms[k - 1] {
            k += 1;
        } else {
            b.swap(k, k - 1);
            for row in u.iter_mut() {
                row.swap(k, k - 1);
            }
            k = (k - 1).max(1);
        }
    }
    u
}

/// Reduced basis data shared by every enumeration on a lattice.
#[derive(Clone, Debug)]
struct Reduced {
    transform: Vec<Vec<i64>>,
    columns: Vec<Vec<CertifiedReal>>,
    column_bounds: Vec<Vec<Bounds>>,
    /// Upper bounds of `Σ_i |inv[j][i]|` for the reduced basis.
    coeff_gain: Vec<f64>,
}

impl Reduced {
    fn build(basis: &LatticeBasis, precision: &Precision) -> Result<Self> {
        let d = basis.dim;
        let approx: Vec<Vec<f64>> = basis.columns.iter().map(|c| c.iter().map(|x| x.to_f64()).collect()).collect();
        let transform = lll_transform(&approx);
        let columns: Vec<Vec<CertifiedReal>> = (0..d)
            .map(|j| combine(&basis.columns, &(0..d).map(|i| transform[i][j]).collect::<Vec<_>>()))
            .collect();
        let column_bounds = columns
            .iter()
            .map(|c| c.iter().map(|x| Ok(Bounds::from_interval(&x.enclose(128)?))).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let inv = inverse(&transpose(&columns), precision)?;
        let coeff_gain = inv
            .iter()
            .map(|row| {
                row.iter().try_fold(0.0f64, |acc, x| {
                    let b = Bounds::from_interval(&x.enclose(128)?).abs();
                    Ok((acc + b.hi).next_up())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Reduced { transform, columns, column_bounds, coeff_gain })
    }

    fn original_coeffs(&self, c: &[i64]) -> Vec<i64> {
        let d = c.len();
        (0..d).map(|i| (0..d).map(|j| self.transform[i][j] * c[j]).sum()).collect()
    }

    fn vector_bounds(&self, c: &[i64]) -> Vec<Bounds> {
        let d = c.len();
        let mut v = vec![Bounds::point(0.0); d];
        for (col, &cj) in self.column_bounds.iter().zip(c) {
            if cj == 0 {
                continue;
            }
            for (vi, x) in v.iter_mut().zip(col) {
                *vi = vi.add(x.scale(cj as f64));
            }
        }
        v
    }

    /// Coefficient limits for vectors with every coordinate at most `radius`.
    fn limits(&self, radius: f64) -> Result<Vec<i64>> {
        self.coeff_gain
            .iter()
            .map(|g| {
                let k = (g * radius).next_up().floor();
                if k > 1e6 {
                    Err(Error::BudgetExceeded(format!("coefficient range {k} too large to enumerate")))
                } else {
                    Ok(k as i64)
                }
            })
            .collect()
    }

    /// Visits nonzero coefficient vectors with first nonzero entry positive.
    fn visit(&self, limits: &[i64], f: &mut impl FnMut(&[i64]) -> Result<()>) -> Result<()> {
        let d = limits.len();
        let total: f64 = limits.iter().map(|&k| 2.0 * k as f64 + 1.0).product();
        if total > 5e7 {
            return Err(Error::BudgetExceeded(format!("{total} coefficient vectors")));
        }
        let mut c: Vec<i64> = limits.iter().map(|&k| -k).collect();
        loop {
            if let Some(&first) = c.iter().find(|&&v| v != 0) {
                if first > 0 {
                    f(&c)?;
                }
            }
            let mut i = 0;
            loop {
                if i == d {
                    return Ok(());
                }
                if c[i] < limits[i] {
                    c[i] += 1;
                    break;
                }
                c[i] = -limits[i];
                i += 1;
            }
        }
    }
}

/// A lattice vector found by enumeration.
#[derive(Clone, Debug)]
struct Candidate {
    reduced: Vec<i64>,
    coeffs: Vec<i64>,
    norm: Bounds,
    exact: OnceLock<CertifiedReal>,
}

impl Candidate {
    fn exact_norm(&self, red: &Reduced, norm: Norm, precision: &Precision) -> Result<&CertifiedReal> {
        if let Some(v) = self.exact.get() {
            return Ok(v);
        }
        let v = norm.exact(&combine(&red.columns, &self.reduced), precision)?;
        Ok(self.exact.get_or_init(|| v))
    }
}

fn compare(a: &Candidate, b: &Candidate, red: &Reduced, norm: Norm, precision: &Precision) -> Result<Ordering> {
    let by_norm = if a.norm.below(b.norm) {
        Ordering::Less
    } else if b.norm.below(a.norm) {
        Ordering::Greater
    } else {
        a.exact_norm(red, norm, precision)?.cmp(b.exact_norm(red, norm, precision)?, precision)?
    };
    Ok(by_norm.then_with(|| vector_order(&a.coeffs, &b.coeffs)))
}

fn collect(red: &Reduced, norm: Norm, radius: f64) -> Result<Vec<Candidate>> {
    let limits = red.limits(radius)?;
    let mut out = Vec::new();
    red.visit(&limits, &mut |c| {
        let nb = norm.bounds(&red.vector_bounds(c));
        if nb.lo <= radius {
            out.push(Candidate { reduced: c.to_vec(), coeffs: red.original_coeffs(c), norm: nb, exact: OnceLock::new() });
        }
        Ok(())
    })?;
    Ok(out)
}

fn sort_candidates(cands: &mut [Candidate], red: &Reduced, norm: Norm, precision: &Precision) -> Result<()> {
    let mut err = None;
    cands.sort_by(|a, b| match compare(a, b, red, norm, precision) {
        Ok(o) => o,
        Err(e) => {
            err.get_or_insert(e);
            Ordering::Equal
        }
    });
    err.map_or(Ok(()), Err)
}

/// Shortest nonzero vector in `norm` with coefficients in the given basis.
pub fn first_minimum_in(basis: &LatticeBasis, norm: Norm, precision: &Precision) -> Result<(CertifiedReal, Vec<i64>)> {
    let red = basis.reduced(precision)?;
    let radius = red.column_bounds.iter().map(|c| norm.bounds(c).hi).fold(f64::INFINITY, f64::min);
    let cands = collect(red, norm, radius)?;
    let mut best: Option<&Candidate> = None;
    let best_hi = cands.iter().map(|c| c.norm.hi).fold(f64::INFINITY, f64::min);
    for c in cands.iter().filter(|c| c.norm.lo <= best_hi) {
        best = Some(match best {
            Some(b) if compare(c, b, red, norm, precision)? != Ordering::Less => b,
            _ => c,
        });
    }
    let best = best.ok_or_else(|| Error::Invalid("enumeration found no vector".into()))?;
    Ok((best.exact_norm(red, norm, precision)?.clone(), best.coeffs.clone()))
}

/// `δ₁(Λ)` in the sup norm and a witness `c` with `‖B·c‖∞ = δ₁`.
pub fn first_minimum(basis: &LatticeBasis, precision: &Precision) -> Result<(CertifiedReal, Vec<i64>)> {
    first_minimum_in(basis, Norm::Sup, precision)
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimaReport {
    pub deltas: Vec<CertifiedReal>,
    pub witnesses: Vec<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<CertifiedReal>>,
}

impl MinimaReport {
    pub fn deltas_f64(&self) -> Vec<f64> {
        self.deltas.iter().map(|d| d.to_f64()).collect()
    }

    pub fn product(&self, k: usize) -> CertifiedReal {
        self.deltas[..k].iter().fold(CertifiedReal::from_int(1), |acc, d| acc.mul(d))
    }
}

pub fn successive_minima_in(basis: &LatticeBasis, norm: Norm, precision: &Precision) -> Result<MinimaReport> {
    let red = basis.reduced(precision)?;
    let radius = red.column_bounds.iter().map(|c| norm.bounds(c).hi).fold(0.0, f64::max);
    let mut cands = collect(red, norm, radius)?;
    sort_candidates(&mut cands, red, norm, precision)?;
    let d = basis.dim;
    let mut deltas = Vec::with_capacity(d);
    let mut witnesses: Vec<Vec<i64>> = Vec::with_capacity(d);
    for c in &cands {
        let mut trial = witnesses.clone();
        trial.push(c.coeffs.clone());
        if integer_rank(&trial) == trial.len() {
            deltas.push(c.exact_norm(red, norm, precision)?.clone());
            witnesses = trial;
            if witnesses.len() == d {
                break;
            }
        }
    }
    if witnesses.len() < d {
        return Err(Error::RankDeficient("enumeration radius missed a minimum".into()));
    }
    Ok(MinimaReport { deltas, witnesses, lambdas: None })
}

/// `δ₁ ≤ … ≤ δ_d` in the sup norm with independent witnesses.
pub fn successive_minima(basis: &LatticeBasis, precision: &Precision) -> Result<MinimaReport> {
    successive_minima_in(basis, Norm::Sup, precision)
}

/// Successive minima together with `λ_i` for `i = 1..d`.
pub fn minima_with_wedges(basis: &LatticeBasis, precision: &Precision) -> Result<MinimaReport> {
    let mut report = successive_minima(basis, precision)?;
    let lambdas = (1..=basis.dim).map(|i| wedge_minimum(basis, i, precision)).collect::<Result<Vec<_>>>()?;
    report.lambdas = Some(lambdas);
    Ok(report)
}

/// Rank of integer vectors.
pub fn integer_rank(vectors: &[Vec<i64>]) -> usize {
    let mut rows: Vec<Vec<BigInt>> = vectors.iter().map(|v| v.iter().map(|&x| BigInt::from(x)).collect()).collect();
    let Some(cols) = rows.first().map(|r| r.len()) else {
        return 0;
    };
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        for r in rank + 1..rows.len() {
            if rows[r][col].is_zero() {
                continue;
            }
            let (a, b) = (rows[rank][col].clone(), rows[r][col].clone());
            for c in col..cols {
                rows[r][c] = &rows[r][c] * &a - &rows[rank][c] * &b;
            }
        }
        rank += 1;
    }
    rank
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Basis of `⋀^i Λ` in Plücker coordinates (the `i`-th compound matrix).
pub fn exterior_power(basis: &LatticeBasis, i: usize, precision: &Precision) -> Result<LatticeBasis> {
    let d = basis.dim;
    if i == 0 || i > d {
        return Err(Error::Invalid(format!("exterior power index {i} outside 1..={d}")));
    }
    let idx = subsets(d, i);
    let columns = idx
        .iter()
        .map(|cols| {
            idx.iter()
                .map(|rows| {
                    let minor: Vec<Vec<CertifiedReal>> =
                        rows.iter().map(|&r| cols.iter().map(|&c| basis.columns[c][r].clone()).collect()).collect();
                    determinant(&minor, precision)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    LatticeBasis::new(columns, precision)
}

/// `λ_i`: first sup-norm minimum of `⋀^i Λ`.
pub fn wedge_minimum(basis: &LatticeBasis, i: usize, precision: &Precision) -> Result<CertifiedReal> {
    if i == basis.dim {
        return basis.abs_det(precision);
    }
    Ok(first_minimum(&exterior_power(basis, i, precision)?, precision)?.0)
}

/// `Λ* = (B⁻¹)ᵀ Z^d`.
pub fn dual_basis(basis: &LatticeBasis, precision: &Precision) -> Result<LatticeBasis> {
    // rows of B⁻¹ are the columns of (B⁻¹)ᵀ
    let inv = inverse(&transpose(&basis.columns), precision)?;
    LatticeBasis::new(inv, precision)
}

/// Closed box `∏[-b_i, b_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box {
    pub half_widths: Vec<CertifiedReal>,
}

impl Box {
    pub fn new(half_widths: Vec<CertifiedReal>, precision: &Precision) -> Result<Self> {
        for b in &half_widths {
            if b.signum(precision)? <= 0 {
                return Err(Error::Invalid("box half-widths must be positive".into()));
            }
        }
        Ok(Box { half_widths })
    }

    pub fn cube(dim: usize, half_width: CertifiedReal) -> Self {
        Box { half_widths: vec![half_width; dim] }
    }

    pub fn volume(&self) -> CertifiedReal {
        self.half_widths.iter().fold(CertifiedReal::from_int(1), |acc, b| acc.mul(&b.mul(&CertifiedReal::from_int(2))))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PointCount {
    /// Points of the closed box, origin included.
    pub count: u64,
    pub rank: usize,
    /// Points of the open box.
    pub open_count: u64,
    pub open_rank: usize,
}

/// Exact number of lattice points in the closed and open box.
pub fn count_points(basis: &LatticeBasis, bx: &Box, precision: &Precision) -> Result<PointCount> {
    let d = basis.dim;
    if bx.half_widths.len() != d {
        return Err(Error::Invalid("box dimension mismatch".into()));
    }
    let red = basis.reduced(precision)?;
    let widths = bx
        .half_widths
        .iter()
        .map(|b| Ok(Bounds::from_interval(&b.enclose(128)?)))
        .collect::<Result<Vec<_>>>()?;
    let radius = widths.iter().map(|w| w.hi).fold(0.0, f64::max);
    let limits = red.limits(radius)?;
    let (mut closed, mut open) = (Vec::new(), Vec::new());
    red.visit(&limits, &mut |c| {
        let v = red.vector_bounds(c);
        let mut exact: Option<Vec<CertifiedReal>> = None;
        let mut in_open = true;
        for (i, (x, w)) in v.iter().zip(&widths).enumerate() {
            let a = x.abs();
            if a.lo > w.hi {
                return Ok(());
            }
            if a.below(*w) {
                continue;
            }
            let ex = exact.get_or_insert_with(|| combine(&red.columns, c));
            match abs(&ex[i], precision)?.cmp(&bx.half_widths[i], precision)? {
                Ordering::Greater => return Ok(()),
                Ordering::Equal => in_open = false,
                Ordering::Less => {}
            }
        }
        closed.push(red.original_coeffs(c));
        if in_open {
            open.push(red.original_coeffs(c));
        }
        Ok(())
    })?;
    Ok(PointCount {
        count: 2 * closed.len() as u64 + 1,
        rank: integer_rank(&closed),
        open_count: 2 * open.len() as u64 + 1,
        open_rank: integer_rank(&open),
    })
}

fn ratio_f64(x: &CertifiedReal) -> f64 {
    x.to_f64()
}

#[derive(Clone, Debug, Serialize)]
pub struct BlichfeldtReport {
    pub counts: PointCount,
    /// `Vol(K)/det Λ`.
    pub volume_ratio: f64,
    /// `#(Λ ∩ K°) <= Vol(K)/det Λ + d`.
    pub holds: bool,
    /// `#(Λ ∩ K°) <= d!·Vol(K)/det Λ + d`.
    pub holds_with_factorial: bool,
    /// Some lattice point lies on the boundary.
    pub boundary: bool,
}

/// Blichfeldt's count bound, asserted for the open box.
pub fn check_blichfeldt(basis: &LatticeBasis, bx: &Box, precision: &Precision) -> Result<BlichfeldtReport> {
    let counts = count_points(basis, bx, precision)?;
    let d = basis.dim;
    if counts.rank < d {
        return Err(Error::RankDeficient(format!("box points span rank {} < {d}", counts.rank)));
    }
    let vol = bx.volume();
    let det = basis.abs_det(precision)?;
    // n <= V/det + c  ⟺  (n - c)·det <= V
    let within = |factor: u64| -> Result<bool> {
        let lhs = CertifiedReal::from_int(counts.open_count as i64 - d as i64).mul(&det);
        let rhs = vol.mul(&CertifiedReal::from_int(factor as i64));
        Ok(lhs.cmp(&rhs, precision)? != Ordering::Greater)
    };
    Ok(BlichfeldtReport {
        volume_ratio: ratio_f64(&vol) / ratio_f64(&det),
        holds: within(1)?,
        holds_with_factorial: within(factorial(d))?,
        boundary: counts.count != counts.open_count,
        counts,
    })
}

/// Default constant `C(d) = d·4^d` for the counting bound.
pub fn counting_constant(d: usize) -> u64 {
    d as u64 * 4u64.pow(d as u32)
}

#[derive(Clone, Debug, Serialize)]
pub struct CountingReport {
    pub count: u64,
    pub rank: usize,
    pub constant: u64,
    pub bound: f64,
    pub holds: bool,
}

/// `#(Λ ∩ B) <= C(1 + b_σ(1)⋯b_σ(r)/λ_r)` with `r = rk(Λ ∩ B)`, the
/// half-widths sorted decreasingly, and `λ_0 = 1`.
pub fn counting_bound(basis: &LatticeBasis, bx: &Box, constant: u64, precision: &Precision) -> Result<CountingReport> {
    let counts = count_points(basis, bx, precision)?;
    let r = counts.rank;
    let mut widths = bx.half_widths.clone();
    let mut err = None;
    widths.sort_by(|a, b| match b.cmp(a, precision) {
        Ok(o) => o,
        Err(e) => {
            err.get_or_insert(e);
            Ordering::Equal
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let prod = widths[..r].iter().fold(CertifiedReal::from_int(1), |acc, b| acc.mul(b));
    let lambda = if r == 0 { CertifiedReal::from_int(1) } else { wedge_minimum(basis, r, precision)? };
    let c = CertifiedReal::from_int(constant as i64);
    let bound = c.mul(&CertifiedReal::from_int(1).add(&prod.div(&lambda)));
    let holds = CertifiedReal::from_int(counts.count as i64).cmp(&bound, precision)? != Ordering::Greater;
    Ok(CountingReport { count: counts.count, rank: r, constant, bound: bound.to_f64(), holds })
}

#[derive(Clone, Debug, Serialize)]
pub struct MinkowskiReport {
    pub product: f64,
    pub det: f64,
    /// `det/d! <= δ₁⋯δ_d`.
    pub lower_holds: bool,
    /// `δ₁⋯δ_d <= det`.
    pub upper_holds: bool,
}

/// Minkowski's second theorem for the cube: `det/d! <= δ₁⋯δ_d <= det`.
pub fn check_minkowski(basis: &LatticeBasis, precision: &Precision) -> Result<MinkowskiReport> {
    let m = successive_minima(basis, precision)?;
    minkowski_from(basis, &m, precision)
}

pub fn minkowski_from(basis: &LatticeBasis, m: &MinimaReport, precision: &Precision) -> Result<MinkowskiReport> {
    let d = basis.dim;
    let prod = m.product(d);
    let det = basis.abs_det(precision)?;
    let scaled = prod.mul(&CertifiedReal::from_int(factorial(d) as i64));
    Ok(MinkowskiReport {
        product: prod.to_f64(),
        det: det.to_f64(),
        lower_holds: det.cmp(&scaled, precision)? != Ordering::Greater,
        upper_holds: prod.cmp(&det, precision)? != Ordering::Greater,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MahlerReport {
    /// `δ_i·δ*_{d+1-i}`, both minima in the sup norm.
    pub products: Vec<f64>,
    /// Every product lies in `[1, d!]`.
    pub holds: bool,
    /// Every product lies in `[1/d, d!]`.
    pub holds_sup_window: bool,
    /// `δ_i·δ°_{d+1-i}` with the dual minima in the polar (ℓ¹) norm.
    pub polar_products: Vec<f64>,
    /// Every polar product lies in `[1, d!]`.
    pub polar_holds: bool,
}

/// Mahler's duality between the minima of `Λ` and `Λ*`.
pub fn check_mahler(basis: &LatticeBasis, precision: &Precision) -> Result<MahlerReport> {
    let d = basis.dim;
    let dual = dual_basis(basis, precision)?;
    let m = successive_minima(basis, precision)?;
    let ms = successive_minima(&dual, precision)?;
    let mp = successive_minima_in(&dual, Norm::L1, precision)?;
    let fact = CertifiedReal::from_int(factorial(d) as i64);
    let one = CertifiedReal::from_int(1);
    let inv_d = CertifiedReal::ratio(1, d as i64);
    let in_window = |x: &CertifiedReal, lo: &CertifiedReal| -> Result<bool> {
        Ok(x.cmp(lo, precision)? != Ordering::Less && x.cmp(&fact, precision)? != Ordering::Greater)
    };
    let (mut products, mut polar_products) = (Vec::new(), Vec::new());
    let (mut holds, mut holds_sup_window, mut polar_holds) = (true, true, true);
    for i in 0..d {
        let p = m.deltas[i].mul(&ms.deltas[d - 1 - i]);
        let q = m.deltas[i].mul(&mp.deltas[d - 1 - i]);
        holds &= in_window(&p, &one)?;
        holds_sup_window &= in_window(&p, &inv_d)?;
        polar_holds &= in_window(&q, &one)?;
        products.push(p.to_f64());
        polar_products.push(q.to_f64());
    }
    Ok(MahlerReport { products, holds, holds_sup_window, polar_products, polar_holds })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub lambdas: Vec<f64>,
    pub delta_products: Vec<f64>,
    /// `λ_i <= i!·δ₁⋯δ_i` (wedge of the minima witnesses).
    pub upper_holds: bool,
    /// `δ₁⋯δ_i / d!² <= λ_i <= d!²·δ₁⋯δ_i`.
    pub window_holds: bool,
}

/// Compares `λ_i` with `δ₁⋯δ_i`.
pub fn check_wedge_duality(basis: &LatticeBasis, precision: &Precision) -> Result<DualityReport> {
    let d = basis.dim;
    let m = minima_with_wedges(basis, precision)?;
    let lambdas = m.lambdas.clone().expect("wedges computed");
    let c = CertifiedReal::from_int((factorial(d) * factorial(d)) as i64);
    let (mut upper_holds, mut window_holds) = (true, true);
    let mut delta_products = Vec::new();
    for (i, lam) in lambdas.iter().enumerate() {
        let prod = m.product(i + 1);
        let fi = CertifiedReal::from_int(factorial(i + 1) as i64);
        upper_holds &= lam.cmp(&prod.mul(&fi), precision)? != Ordering::Greater;
        window_holds &= lam.cmp(&prod.mul(&c), precision)? != Ordering::Greater
            && prod.cmp(&lam.mul(&c), precision)? != Ordering::Greater;
        delta_products.push(prod.to_f64());
    }
    Ok(DualityReport { lambdas: lambdas.iter().map(|l| l.to_f64()).collect(), delta_products, upper_holds, window_holds })
}

/// Whether two bases generate the same lattice: `B₁⁻¹B₂` is integral and unimodular.
pub fn same_lattice(a: &LatticeBasis, b: &LatticeBasis, precision: &Precision) -> Result<bool> {
    if a.dim != b.dim {
        return Ok(false);
    }
    let inv = inverse(&transpose(&a.columns), precision)?;
    let d = a.dim;
    for col in &b.columns {
        for row in inv.iter().take(d) {
            let x = row.iter().zip(col).fold(CertifiedReal::from_int(0), |acc, (p, q)| acc.add(&p.mul(q)));
            match x.exact() {
                Some(s) if s.as_rational().is_some_and(|r| r.is_integer()) => {}
                Some(_) => return Ok(false),
                None => {
                    if x.dist_to_z().signum(precision)? != 0 {
                        return Ok(false);
                    }
                }
            }
        }
    }
    let ratio = a.abs_det(precision)?.cmp(&b.abs_det(precision)?, precision)?;
    Ok(ratio == Ordering::Equal)
}

/// Convenience for building rational bases from row-major integer ratios.
pub fn rational_basis(rows: &[Vec<(i64, i64)>], precision: &Precision) -> Result<LatticeBasis> {
    let rows = rows
        .iter()
        .map(|r| r.iter().map(|&(n, d)| CertifiedReal::ratio(n, d)).collect())
        .collect();
    LatticeBasis::from_rows(rows, precision)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Precision {
        Precision::new(128, 4096)
    }

    fn rat1() -> num_rational::BigRational {
        num_rational::BigRational::from_integer(1.into())
    }

    fn q(n: i64, d: i64) -> CertifiedReal {
        CertifiedReal::ratio(n, d)
    }

    #[test]
    fn integer_lattice_minima() {
        for d in 1..=4 {
            let z = LatticeBasis::identity(d);
            let (m, w) = first_minimum(&z, &p()).unwrap();
            assert_eq!(m.as_rational().unwrap(), rat1());
            let mut e1 = vec![0; d];
            e1[0] = 1;
            assert_eq!(w, e1);
            let s = successive_minima(&z, &p()).unwrap();
            assert!(s.deltas.iter().all(|x| x.as_rational() == Some(rat1())));
            for i in 1..=d {
                assert_eq!(wedge_minimum(&z, i, &p()).unwrap().as_rational(), Some(rat1()));
            }
        }
    }

    #[test]
    fn diagonal_lattices() {
        let b = LatticeBasis::diagonal(vec![q(2, 1), q(1, 2)], &p()).unwrap();
        let (m, w) = first_minimum(&b, &p()).unwrap();
        assert_eq!(m.to_f64(), 0.5);
        assert_eq!(w, vec![0, 1]);
        let c = LatticeBasis::diagonal(vec![q(3, 1), q(1, 3)], &p()).unwrap();
        let s = successive_minima(&c, &p()).unwrap();
        assert_eq!(s.deltas_f64(), vec![1.0 / 3.0, 3.0]);
        let dual = dual_basis(&b, &p()).unwrap();
        assert_eq!(dual, LatticeBasis::diagonal(vec![q(1, 2), q(2, 1)], &p()).unwrap());
    }

    #[test]
    fn unipotent_lattice() {
        let b = rational_basis(&[vec![(1, 1), (1, 2)], vec![(0, 1), (1, 1)]], &p()).unwrap();
        assert_eq!(first_minimum(&b, &p()).unwrap().0.as_rational(), Some(rat1()));
    }

    #[test]
    fn counting_examples() {
        let z = LatticeBasis::identity(2);
        let c = count_points(&z, &Box::cube(2, q(3, 2)), &p()).unwrap();
        assert_eq!((c.count, c.rank), (9, 2));
        let c = count_points(&z, &Box::cube(2, q(1, 2)), &p()).unwrap();
        assert_eq!((c.count, c.rank), (1, 0));
        let c = count_points(&z, &Box::cube(2, q(1, 1)), &p()).unwrap();
        assert_eq!((c.count, c.open_count), (9, 1));
        let r = check_blichfeldt(&z, &Box::cube(2, q(3, 2)), &p()).unwrap();
        assert!(r.holds && r.holds_with_factorial);
    }

    #[test]
    fn top_wedge_is_determinant() {
        let b = rational_basis(&[vec![(2, 1), (1, 3)], vec![(1, 5), (3, 2)]], &p()).unwrap();
        let top = wedge_minimum(&b, 2, &p()).unwrap();
        assert_eq!(top.as_rational().unwrap(), b.abs_det(&p()).unwrap().as_rational().unwrap());
        let via_power = first_minimum(&exterior_power(&b, 2, &p()).unwrap(), &p()).unwrap().0;
        assert_eq!(via_power.as_rational(), top.as_rational());
    }

    #[test]
    fn dual_of_dual() {
        let b = rational_basis(&[vec![(2, 1), (1, 3), (0, 1)], vec![(1, 5), (3, 2), (1, 1)], vec![(0, 1), (1, 1), (5, 4)]], &p()).unwrap();
        let dd = dual_basis(&dual_basis(&b, &p()).unwrap(), &p()).unwrap();
        assert!(same_lattice(&b, &dd, &p()).unwrap());
    }

    #[test]
    fn mahler_diag() {
        let b = LatticeBasis::diagonal(vec![q(2, 1), q(1, 2)], &p()).unwrap();
        let r = check_mahler(&b, &p()).unwrap();
        assert_eq!(r.products, vec![1.0, 1.0]);
        assert!(r.holds && r.polar_holds);
    }

    #[test]
    fn sup_dual_window_can_drop_below_one() {
        // (1,1), (1,-1): δ = (1,1), dual minima (1/2,1/2)
        let b = rational_basis(&[vec![(1, 1), (1, 1)], vec![(1, 1), (-1, 1)]], &p()).unwrap();
        let r = check_mahler(&b, &p()).unwrap();
        assert_eq!(r.products, vec![0.5, 0.5]);
        assert!(!r.holds && r.holds_sup_window && r.polar_holds);
    }

    #[test]
    fn integer_rank_cases() {
        assert_eq!(integer_rank(&[vec![1, 2], vec![2, 4]]), 1);
        assert_eq!(integer_rank(&[vec![1, 0, 0], vec![0, 1, 0], vec![1, 1, 0]]), 2);
        assert_eq!(integer_rank(&[]), 0);
    }
}
