//! Seeded randomized suites: correspondence cases, lattice bases and
//! dangerous-interval specs.
//!
//! Case generation is a pure function of the seed (ChaCha8), and the
//! reports hold no timings, so serializing a report twice with the same
//! seed gives identical bytes.

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx::{PsiSpec, TargetVector};
use crate::cantor::{Construction, DangerousSpec, DichotomyCase, Kind, Rounding, RationalInterval, TimeVector};
use crate::dani::correspondence_check;
use crate::error::{Error, Result};
use crate::geometry::{
    check_blichfeldt, check_mahler, counting_bound, counting_constant, minkowski_from, rational_basis,
    successive_minima, Box, LatticeBasis,
};
use crate::real::{CertifiedReal, Precision};

pub const DEFAULT_SEED: u64 = 20_240_917;

/// Levels `T` drawn by the correspondence suite.
pub const LEVELS: [i64; 4] = [2, 5, 10, 50];

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CorrespondenceCase {
    pub id: usize,
    pub rows: usize,
    pub cols: usize,
    /// `(numerator, denominator)`, row-major.
    pub entries: Vec<(i64, i64)>,
    pub level: i64,
}

impl CorrespondenceCase {
    pub fn target(&self) -> TargetVector {
        let entries = self.entries.iter().map(|&(n, d)| CertifiedReal::ratio(n, d)).collect();
        TargetVector::new(entries, self.rows, self.cols).expect("generated shape is consistent")
    }
}

/// `ψ(x) = 1/(4x)`.
pub fn quarter_reciprocal() -> PsiSpec {
    PsiSpec::reciprocal(CertifiedReal::ratio(1, 4))
}

/// Rational `Y` with `m + n <= 4` and denominators at most 7.
pub fn correspondence_cases(seed: u64, count: usize) -> Vec<CorrespondenceCase> {
    const SHAPES: [(usize, usize); 6] = [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 2)];
    let mut r = rng(seed, 1);
    (0..count)
        .map(|id| {
            let (rows, cols) = *SHAPES.choose(&mut r).unwrap();
            let entries = (0..rows * cols)
                .map(|_| {
                    let d = r.gen_range(1..=7);
                    (r.gen_range(-2 * d..=2 * d), d)
                })
                .collect();
            CorrespondenceCase { id, rows, cols, entries, level: *LEVELS.choose(&mut r).unwrap() }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrespondenceRow {
    pub id: usize,
    pub dioph: bool,
    #[serde(rename = "dyn")]
    pub dynamic: bool,
    pub agree: bool,
    pub dioph_q: Option<Vec<i64>>,
    pub exact_fallbacks: usize,
}

pub fn run_correspondence_case(case: &CorrespondenceCase, precision: &Precision) -> Result<CorrespondenceRow> {
    let report = correspondence_check(&case.target(), &quarter_reciprocal(), &CertifiedReal::from_int(case.level), precision)?;
    Ok(CorrespondenceRow {
        id: case.id,
        dioph: report.dioph,
        dynamic: report.dynamic,
        agree: report.dioph == report.dynamic,
        dioph_q: report.dioph_q,
        exact_fallbacks: report.exact_fallbacks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrespondenceSuite {
    pub seed: u64,
    pub cases: Vec<CorrespondenceCase>,
    pub rows: Vec<CorrespondenceRow>,
    pub agreements: usize,
}

impl CorrespondenceSuite {
    /// Rows may arrive in any order; they are sorted by case id.
    pub fn from_rows(seed: u64, cases: Vec<CorrespondenceCase>, mut rows: Vec<CorrespondenceRow>) -> Self {
        rows.sort_by_key(|r| r.id);
        let agreements = rows.iter().filter(|r| r.agree).count();
        CorrespondenceSuite { seed, cases, rows, agreements }
    }
}

pub fn correspondence_suite(seed: u64, count: usize, precision: &Precision) -> Result<CorrespondenceSuite> {
    let cases = correspondence_cases(seed, count);
    let rows = cases.iter().map(|c| run_correspondence_case(c, precision)).collect::<Result<Vec<_>>>()?;
    Ok(CorrespondenceSuite::from_rows(seed, cases, rows))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BasisCase {
    pub id: usize,
    pub dim: usize,
    /// Row-major `(numerator, denominator)`; basis vectors are the columns.
    pub rows: Vec<Vec<(i64, i64)>>,
    pub half_widths: Vec<(i64, i64)>,
}

impl BasisCase {
    pub fn basis(&self, precision: &Precision) -> Result<LatticeBasis> {
        rational_basis(&self.rows, precision)
    }

    pub fn bx(&self, precision: &Precision) -> Result<Box> {
        Box::new(self.half_widths.iter().map(|&(n, d)| CertifiedReal::ratio(n, d)).collect(), precision)
    }
}

/// Largest accepted `∏‖b_j‖₂ / |det|`.
pub const MAX_ORTHOGONALITY_DEFECT: f64 = 30.0;

/// Rational bases with `d <= 4`, entries `n/d` with `|n| <= 6`, `d <= 4`,
/// orthogonality defect at most [`MAX_ORTHOGONALITY_DEFECT`], and boxes
/// with half-widths between `δ_d` and `2δ_d`, rounded up to quarters.
pub fn basis_cases(seed: u64, count: usize, precision: &Precision) -> Result<Vec<BasisCase>> {
    let mut r = rng(seed, 2);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let dim = r.gen_range(1..=4);
        let rows: Vec<Vec<(i64, i64)>> =
            (0..dim).map(|_| (0..dim).map(|_| (r.gen_range(-6..=6), r.gen_range(1..=4))).collect()).collect();
        let basis = match rational_basis(&rows, precision) {
            Ok(b) => b,
            Err(Error::RankDeficient(_)) => continue,
            Err(e) => return Err(e),
        };
        let norms: f64 = (0..dim)
            .map(|j| rows.iter().map(|row| (row[j].0 as f64 / row[j].1 as f64).powi(2)).sum::<f64>().sqrt())
            .product();
        if norms / basis.det().to_f64().abs() > MAX_ORTHOGONALITY_DEFECT {
            continue;
        }
        // at least the last minimum, so the closed box spans the lattice
        let top = successive_minima(&basis, precision)?.deltas[dim - 1].to_f64();
        let half_widths = (0..dim).map(|_| (((1.0 + r.gen::<f64>()) * 4.0 * top).ceil() as i64, 4)).collect();
        out.push(BasisCase { id: out.len(), dim, rows, half_widths });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryRow {
    pub id: usize,
    pub dim: usize,
    pub minima: Vec<f64>,
    pub witnesses: Vec<Vec<i64>>,
    pub minkowski: bool,
    /// `1 <= δ_iδ*_{d+1-i} <= d!`, both in the sup norm.
    pub mahler: bool,
    pub mahler_sup_window: bool,
    pub mahler_polar: bool,
    pub mahler_products: Vec<f64>,
    pub blichfeldt: bool,
    pub blichfeldt_factorial: bool,
    pub open_count: u64,
    pub counting: bool,
}

pub fn run_geometry_case(case: &BasisCase, precision: &Precision) -> Result<GeometryRow> {
    let basis = case.basis(precision)?;
    let bx = case.bx(precision)?;
    let minima = successive_minima(&basis, precision)?;
    let minkowski = minkowski_from(&basis, &minima, precision)?;
    let mahler = check_mahler(&basis, precision)?;
    let blichfeldt = check_blichfeldt(&basis, &bx, precision)?;
    let counting = counting_bound(&basis, &bx, counting_constant(case.dim), precision)?;
    Ok(GeometryRow {
        id: case.id,
        dim: case.dim,
        minima: minima.deltas_f64(),
        witnesses: minima.witnesses.clone(),
        minkowski: minkowski.lower_holds && minkowski.upper_holds,
        mahler: mahler.holds,
        mahler_sup_window: mahler.holds_sup_window,
        mahler_polar: mahler.polar_holds,
        mahler_products: mahler.products,
        blichfeldt: blichfeldt.holds,
        blichfeldt_factorial: blichfeldt.holds_with_factorial,
        open_count: blichfeldt.counts.open_count,
        counting: counting.holds,
    })
}

/// Violation counts per inequality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GeometryTally {
    pub minkowski: usize,
    pub mahler: usize,
    pub mahler_sup_window: usize,
    pub mahler_polar: usize,
    pub blichfeldt: usize,
    pub blichfeldt_factorial: usize,
    pub counting: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometrySuite {
    pub seed: u64,
    pub cases: Vec<BasisCase>,
    pub rows: Vec<GeometryRow>,
    pub violations: GeometryTally,
}

impl GeometrySuite {
    pub fn from_rows(seed: u64, cases: Vec<BasisCase>, mut rows: Vec<GeometryRow>) -> Self {
        rows.sort_by_key(|r| r.id);
        let mut v = GeometryTally::default();
        for r in &rows {
            v.minkowski += !r.minkowski as usize;
            v.mahler += !r.mahler as usize;
            v.mahler_sup_window += !r.mahler_sup_window as usize;
            v.mahler_polar += !r.mahler_polar as usize;
            v.blichfeldt += !r.blichfeldt as usize;
            v.blichfeldt_factorial += !r.blichfeldt_factorial as usize;
            v.counting += !r.counting as usize;
        }
        GeometrySuite { seed, cases, rows, violations: v }
    }
}

pub fn geometry_suite(seed: u64, count: usize, precision: &Precision) -> Result<GeometrySuite> {
    let cases = basis_cases(seed, count, precision)?;
    let rows = cases.iter().map(|c| run_geometry_case(c, precision)).collect::<Result<Vec<_>>>()?;
    Ok(GeometrySuite::from_rows(seed, cases, rows))
}

/// Upper end of the time sums drawn past the smallest admissible one.
const EXTRA_STEPS: i64 = 6;
const MAX_ATTEMPTS_PER_SPEC: usize = 2000;

fn split_steps(r: &mut ChaCha8Rng, l: usize, total: i64, min: i64) -> Option<Vec<i64>> {
    let spare = total - min * l as i64;
    if spare < 0 {
        return None;
    }
    let mut steps = vec![min; l];
    for _ in 0..spare {
        steps[r.gen_range(0..l)] += 1;
    }
    Some(steps)
}

fn symmetric(r: &mut ChaCha8Rng, bound: f64) -> i64 {
    // integers strictly inside (-bound, bound), capped to keep f64 exact
    let top = (bound.min(1e9) - 1e-9).floor().max(0.0) as i64;
    r.gen_range(-top..=top)
}

/// Draws one spec with a nonempty dangerous interval, or `None` if the
/// drawn time admits none.
fn draw_spec(c: &Construction, r: &mut ChaCha8Rng, kind: Kind) -> Result<Option<DangerousSpec>> {
    let p = c.params();
    let l = p.l;
    let beta = p.beta.to_f64();
    let alpha: Vec<f64> = p.alpha_s().iter().map(|a| a.to_f64()).collect();
    let length = c.length().to_f64().ok_or_else(|| Error::Invalid("L out of f64 range".into()))?;
    let x: f64 = r.gen::<f64>() * length;
    let rate0 = c.rate_at(kind, 0)?.hi_f64();
    let base = match kind {
        Kind::Dual => l as i64 * (rate0 / beta).ceil() as i64,
        Kind::Simultaneous => 1,
    };
    let sigma = base + r.gen_range(0..=EXTRA_STEPS);
    let rate = c.rate_at(kind, sigma)?.mid_f64();
    let spec = match kind {
        Kind::Dual => {
            let min = (rate / beta).ceil() as i64;
            let Some(steps) = split_steps(r, l, sigma, min) else { return Ok(None) };
            let b: Vec<i64> = steps.iter().map(|&s| symmetric(r, (beta * s as f64 - rate).exp())).collect();
            if b.iter().all(|&v| v == 0) {
                return Ok(None);
            }
            let lin = b[0] as f64 * x + b[1..].iter().zip(&alpha).map(|(&bi, a)| bi as f64 * a).sum::<f64>();
            DangerousSpec { kind, s: p.s.clone(), t: TimeVector::new(steps), b0: -lin.round() as i64, b }
        }
        Kind::Simultaneous => {
            let min = (-rate / beta).ceil() as i64;
            let Some(mut steps) = split_steps(r, l, sigma, min) else { return Ok(None) };
            // loosest windows for the coordinates in S
            if l > 1 {
                let moved: i64 = steps[1..].iter().map(|&s| s - min).sum();
                for s in &mut steps[1..] {
                    *s = min;
                }
                steps[0] += moved;
            }
            let b0 = symmetric(r, (beta * sigma as f64 - rate).exp());
            if b0 == 0 {
                return Ok(None);
            }
            let mut b = vec![-(b0 as f64 * x).round() as i64];
            b.extend(alpha.iter().map(|a| -(b0 as f64 * a).round() as i64));
            DangerousSpec { kind, s: p.s.clone(), t: TimeVector::new(steps), b0, b }
        }
    };
    if c.in_cone(kind, &spec.t)? != Some(true) {
        return Ok(None);
    }
    Ok(c.dangerous(&spec, Rounding::Outer)?.map(|_| spec))
}

/// Specs with nonempty dangerous intervals, both kinds in equal share.
pub fn dangerous_specs(c: &Construction, seed: u64, count: usize) -> Result<Vec<DangerousSpec>> {
    let mut r = rng(seed, 3 + c.params().l as u64);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let kind = if i % 2 == 0 { Kind::Dual } else { Kind::Simultaneous };
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS_PER_SPEC {
            if let Some(spec) = draw_spec(c, &mut r, kind)? {
                found = Some(spec);
                break;
            }
        }
        out.push(found.ok_or_else(|| Error::InsufficientData(format!("no nonempty {kind:?} spec after {MAX_ATTEMPTS_PER_SPEC} draws")))?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DangerousRow {
    pub l: usize,
    pub spec: DangerousSpec,
    pub interval: RationalInterval,
    pub case: Option<DichotomyCase>,
    pub nested_in: Option<TimeVector>,
    pub length: f64,
    pub bound: f64,
    pub within_double: bool,
    pub hypothesis: bool,
    /// The check raised a dichotomy violation.
    pub violation: bool,
    pub swap_identity: Option<bool>,
}

pub fn run_dangerous_spec(c: &Construction, spec: &DangerousSpec) -> Result<DangerousRow> {
    let interval = c
        .dangerous(spec, Rounding::Outer)?
        .ok_or_else(|| Error::Invalid("suite spec has an empty dangerous interval".into()))?;
    let swap_identity = (c.params().l == 1 && spec.kind == Kind::Dual && spec.b[0] != 0)
        .then(|| c.swap_identity(spec))
        .transpose()?;
    let row = |report: Option<crate::cantor::DichotomyReport>, violation| {
        let (case, nested_in, length, bound, within_double, hypothesis) = match report {
            Some(d) => (d.case, d.nested_in, d.length, d.bound, d.within_double, d.hypothesis),
            None => (None, None, f64::NAN, f64::NAN, false, true),
        };
        DangerousRow {
            l: c.params().l,
            spec: spec.clone(),
            interval: interval.clone(),
            case,
            nested_in,
            length,
            bound,
            within_double,
            hypothesis,
            violation,
            swap_identity,
        }
    };
    match c.length_dichotomy_check(spec, &interval) {
        Ok(d) => Ok(row(Some(d), false)),
        Err(Error::DichotomyViolation(_)) => Ok(row(None, true)),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DangerousTally {
    pub specs: usize,
    pub short: usize,
    pub nested: usize,
    /// Neither case applies literally.
    pub unclassified: usize,
    pub within_double: usize,
    pub violations: usize,
    pub swap_checked: usize,
    pub swap_held: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DangerousSuite {
    pub seed: u64,
    pub rows: Vec<DangerousRow>,
    pub tally: DangerousTally,
}

impl DangerousSuite {
    pub fn from_rows(seed: u64, rows: Vec<DangerousRow>) -> Self {
        let mut t = DangerousTally { specs: rows.len(), ..Default::default() };
        for r in &rows {
            match r.case {
                Some(DichotomyCase::Short) => t.short += 1,
                Some(DichotomyCase::Nested) => t.nested += 1,
                None => t.unclassified += 1,
            }
            t.within_double += r.within_double as usize;
            t.violations += r.violation as usize;
            if let Some(held) = r.swap_identity {
                t.swap_checked += 1;
                t.swap_held += held as usize;
            }
        }
        DangerousSuite { seed, rows, tally: t }
    }
}

/// Runs `count` specs split evenly over the given constructions.
pub fn dangerous_suite(constructions: &[Construction], seed: u64, count: usize) -> Result<DangerousSuite> {
    if constructions.is_empty() {
        return Err(Error::Invalid("need at least one construction".into()));
    }
    let k = constructions.len();
    let mut rows = Vec::with_capacity(count);
    for (i, c) in constructions.iter().enumerate() {
        let share = count / k + (i < count % k) as usize;
        for spec in dangerous_specs(c, seed, share)? {
            rows.push(run_dangerous_spec(c, &spec)?);
        }
    }
    Ok(DangerousSuite::from_rows(seed, rows))
}
