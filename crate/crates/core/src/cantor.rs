//! Level-by-level removal of dangerous intervals from `I₀ = [0, L]`.
//!
//! Level `k` intervals live on the grid of `F(k-1)` equal closed pieces of
//! `I₀`; a level stores its survivors as half-open runs of grid indices.
//! Interval endpoints are exact rationals rounded outward from certified
//! enclosures, and every undecided comparison errs towards removal.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize, Serializer};

use crate::approx::{mad_defect, mad_star_defect, DefectRecord, HeightSpec, PsiSpec, TargetVector};
use crate::dani::{RateFunction, Shape};
use crate::dyadic::Interval;
use crate::error::{Error, Result};
use crate::real::{CertifiedReal, Precision};

const BITS: u32 = 128;
const DEMO_A: u64 = 3;
const PARAM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small parameters for desk-scale runs; not the asymptotic choices.
    Demo,
    Faithful,
}

fn default_epsilon() -> f64 {
    1.0
}

fn default_e_const() -> f64 {
    1.0
}

fn default_slack() -> f64 {
    10.0
}

fn default_budget() -> u64 {
    50_000_000
}

/// Run configuration of the removal procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionParams {
    pub d: usize,
    pub l: usize,
    /// Indices in `{2,…,d}` paired with `b_2,…,b_l`, ascending.
    #[serde(rename = "S")]
    pub s: Vec<usize>,
    /// `α_2,…,α_d`.
    pub alpha_tail: Vec<CertifiedReal>,
    pub kappa: CertifiedReal,
    pub beta: CertifiedReal,
    #[serde(rename = "L")]
    pub length: CertifiedReal,
    pub c2: CertifiedReal,
    pub gamma: CertifiedReal,
    #[serde(rename = "K_max")]
    pub k_max: usize,
    pub preset: Preset,
    /// `B_l`; defaults to `10 l²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_const: Option<u64>,
    #[serde(default = "default_e_const")]
    pub e_const: f64,
    /// Block bounds are multiplied by `e^{slack · l · β}`.
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_budget")]
    pub node_budget: u64,
}

impl ConstructionParams {
    /// `β = e`, `κ = e^{-3lβ}`, `L = 16`, `c₂ = 4e^{-β}`, `γ = 1`, `K = 6`.
    pub fn demo(d: usize, l: usize, s: Vec<usize>, alpha_tail: Vec<CertifiedReal>) -> Self {
        let beta = CertifiedReal::e();
        let kappa = beta.mul(&CertifiedReal::from_int(-3 * l as i64)).exp();
        let c2 = CertifiedReal::from_int(4).mul(&beta.neg().exp());
        ConstructionParams {
            d,
            l,
            s,
            alpha_tail,
            kappa,
            beta,
            length: CertifiedReal::from_int(16),
            c2,
            gamma: CertifiedReal::from_int(1),
            k_max: 6,
            preset: Preset::Demo,
            b_const: None,
            e_const: default_e_const(),
            slack: default_slack(),
            epsilon: default_epsilon(),
            node_budget: default_budget(),
        }
    }

    /// `κ = e^{-3lβ}`, `L = e^β`, `c₂ = 4e^{-β}`.
    pub fn faithful(d: usize, l: usize, s: Vec<usize>, alpha_tail: Vec<CertifiedReal>, beta: CertifiedReal) -> Self {
        let kappa = beta.mul(&CertifiedReal::from_int(-3 * l as i64)).exp();
        let c2 = CertifiedReal::from_int(4).mul(&beta.neg().exp());
        ConstructionParams {
            d,
            l,
            s,
            alpha_tail,
            kappa,
            length: beta.exp(),
            beta,
            c2,
            gamma: CertifiedReal::from_int(1),
            k_max: 6,
            preset: Preset::Faithful,
            b_const: None,
            e_const: default_e_const(),
            slack: default_slack(),
            epsilon: default_epsilon(),
            node_budget: default_budget(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.l > self.d {
            return Err(Error::Invalid(format!("need 1 <= l <= d, got l = {}, d = {}", self.l, self.d)));
        }
        if self.s.len() != self.l - 1 {
            return Err(Error::Invalid(format!("S must have {} elements", self.l - 1)));
        }
        if self.s.windows(2).any(|w| w[0] >= w[1]) || self.s.iter().any(|&i| i < 2 || i > self.d) {
            return Err(Error::Invalid("S must be an ascending subset of {2,…,d}".into()));
        }
        if self.alpha_tail.len() != self.d - 1 {
            return Err(Error::Invalid(format!("alpha_tail needs {} entries", self.d - 1)));
        }
        let p = Precision::default();
        for (name, v) in [("kappa", &self.kappa), ("beta", &self.beta), ("L", &self.length), ("c2", &self.c2), ("gamma", &self.gamma)] {
            if v.signum(&p)? <= 0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if !(self.e_const > 0.0 && self.epsilon > 0.0 && self.slack >= 0.0) {
            return Err(Error::Invalid("E_l, epsilon must be positive and slack non-negative".into()));
        }
        Ok(())
    }

    pub fn b_l(&self) -> u64 {
        self.b_const.unwrap_or(10 * (self.l * self.l) as u64)
    }

    /// `C_l = (l+2)(4l+3)`.
    pub fn c_l(&self) -> u64 {
        let l = self.l as u64;
        (l + 2) * (4 * l + 3)
    }

    /// `A_l = 100 l (C_l + 1) + 2 B_l + 2`.
    pub fn a_l(&self) -> u64 {
        100 * self.l as u64 * (self.c_l() + 1) + 2 * self.b_l() + 2
    }

    /// The index offset actually used for `p(k)`.
    pub fn a_index(&self) -> u64 {
        match self.preset {
            Preset::Demo => DEMO_A,
            Preset::Faithful => self.a_l(),
        }
    }

    /// `κ ψ_{l,β}`.
    pub fn psi(&self) -> PsiSpec {
        PsiSpec::kappa_psi(self.l as u32, self.beta.clone(), self.kappa.clone())
    }

    /// `α_i` for the indices in `S`, in order.
    pub fn alpha_s(&self) -> Vec<CertifiedReal> {
        self.s.iter().map(|&i| self.alpha_tail[i - 2].clone()).collect()
    }
}

/// One inequality of the parameter system, compared in the log domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamRow {
    pub name: String,
    pub lhs_log: f64,
    pub rhs_log: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamReport {
    pub rows: Vec<ParamRow>,
    pub epsilon_row: ParamRow,
    pub structural_holds: bool,
}

impl ParamReport {
    pub fn row(&self, name: &str) -> Option<&ParamRow> {
        self.rows.iter().chain(std::iter::once(&self.epsilon_row)).find(|r| r.name == name)
    }
}

fn ln_f64(x: &CertifiedReal) -> f64 {
    x.ln().to_f64()
}

fn row(name: &str, lhs_log: f64, rhs_log: f64) -> ParamRow {
    let holds = lhs_log <= rhs_log + PARAM_TOL * (1.0 + rhs_log.abs());
    ParamRow { name: name.into(), lhs_log, rhs_log, holds }
}

/// Evaluates the parameter system row by row.
pub fn param_check(params: &ConstructionParams) -> Result<ParamReport> {
    params.validate()?;
    let l = params.l as f64;
    let beta = params.beta.to_f64();
    let ln_kappa = ln_f64(&params.kappa);
    let ln_gamma = ln_f64(&params.gamma);
    let ln_c2 = ln_f64(&params.c2);
    let ln_len = ln_f64(&params.length);
    let a = params.a_index() as f64;
    let b = params.b_l() as f64;
    let c = params.c_l() as f64;
    let ln4 = 4f64.ln();

    let rows = vec![
        row("4max{|log kappa|, l log beta} <= e^beta", (4.0 * ln_kappa.abs().max(l * beta.ln())).ln(), beta),
        row("kappa <= gamma", ln_kappa, ln_gamma),
        row("kappa <= e^{-(l+1)beta}", ln_kappa, -(l + 1.0) * beta),
        row("c2 < 1", ln_c2, 0.0),
        row("c2 >= e^{-(l+1)beta}", -(l + 1.0) * beta, ln_c2),
        row("c2 >= 4e^{-beta}", ln4 - beta, ln_c2),
        row("e^{100 l beta} >= 4^{(A-2)/(C+1)}/kappa", (a - 2.0) / (c + 1.0) * ln4 - ln_kappa, 100.0 * l * beta),
        row(
            "L >= e^{2B beta}(kappa^{-1}(2A)^{l-1}(log 2A)^l)^{C+1}",
            2.0 * b * beta + (c + 1.0) * (-ln_kappa + (l - 1.0) * (2.0 * a).ln() + l * (2.0 * a).ln().ln()),
            ln_len,
        ),
    ];
    let loglog = ln_len.ln();
    let eps_lhs = if loglog <= 0.0 {
        f64::NEG_INFINITY
    } else {
        2.0 * a * ln4 + params.e_const.ln() + beta.ln() + 2.0 * l * beta + ln_kappa - ln_c2 + loglog.ln()
    };
    let epsilon_row = row("4^{2A} E beta e^{2 l beta} kappa / c2 log log L <= epsilon", eps_lhs, params.epsilon.ln());
    let structural_holds = rows.iter().all(|r| r.holds);
    Ok(ParamReport { rows, epsilon_row, structural_holds })
}

/// `r_k = ⌈e^β k log k⌉` for `k >= 2`, else 1.
pub fn subdivision(beta: &CertifiedReal, k: usize, precision: &Precision) -> Result<u64> {
    if k < 2 {
        return Ok(1);
    }
    precision.refine("subdivision count", |bits| {
        let v = &(&beta.enclose(bits)?.exp() * &Interval::from_i64(k as i64, bits)) * &Interval::from_i64(k as i64, bits).ln()?;
        let (lo, hi) = (v.lo().ceil(), v.hi().ceil());
        if lo != hi || v.lo().floor() == lo {
            return Err(Error::Indeterminate);
        }
        lo.to_u64().ok_or_else(|| Error::BudgetExceeded(format!("r_{k} does not fit in 64 bits")))
    })
}

/// `(r_k, F(k))` with `F(k) = ∏_{i<=k} r_i`.
pub fn schedule(beta: &CertifiedReal, k: usize, precision: &Precision) -> Result<(u64, BigInt)> {
    let mut f = BigInt::one();
    let mut r = 1;
    for i in 0..=k {
        r = subdivision(beta, i, precision)?;
        f *= r;
    }
    Ok((r, f))
}

/// `log F(k)` against `kβ <= log F(k) <= k(2 log k + β)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub k: usize,
    pub log_f: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_holds: bool,
    /// Lower bound after discounting the two unit factors `r_0 = r_1 = 1`.
    pub shifted_lower_holds: bool,
    /// Upper bound plus `k log 2` for the ceilings.
    pub upper_holds: bool,
}

pub fn growth_check(beta: &CertifiedReal, k: usize, precision: &Precision) -> Result<GrowthCheck> {
    let (_, f) = schedule(beta, k, precision)?;
    let log_f = f.to_f64().unwrap_or(f64::INFINITY).ln();
    let b = beta.to_f64();
    let kf = k as f64;
    let lower = kf * b;
    let upper = if k == 0 { 0.0 } else { kf * (2.0 * kf.ln() + b) };
    Ok(GrowthCheck {
        k,
        log_f,
        lower,
        upper,
        lower_holds: lower <= log_f,
        shifted_lower_holds: (kf - 2.0).max(0.0) * b <= log_f,
        upper_holds: log_f <= upper + kf * 2f64.ln(),
    })
}

/// `p(k) = k - A + 1` for `k >= 2A`, else 0.
pub fn p_of_k(a: u64, k: usize) -> usize {
    if (k as u64) < 2 * a {
        0
    } else {
        k + 1 - a as usize
    }
}

/// `min (1 - log 2 / log r)` over the entries with `r >= 2`.
pub fn bv_bound(rates: &[u64]) -> Option<f64> {
    rates
        .iter()
        .filter(|&&r| r >= 2)
        .map(|&r| 1.0 - 2f64.ln() / (r as f64).ln())
        .min_by(|a, b| a.total_cmp(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Dual,
    Simultaneous,
}

/// `t ∈ βZ^l` stored as the integer multiples of `β`; `steps[0]` is `t₁`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeVector {
    pub steps: Vec<i64>,
}

impl TimeVector {
    pub fn new(steps: Vec<i64>) -> Self {
        TimeVector { steps }
    }

    /// `t / β`.
    pub fn total(&self) -> i64 {
        self.steps.iter().sum()
    }

    /// `T / β` with `T = t + t₁`.
    pub fn big_t(&self) -> i64 {
        self.total() + self.steps[0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DangerousSpec {
    pub kind: Kind,
    #[serde(rename = "S")]
    pub s: Vec<usize>,
    pub t: TimeVector,
    pub b0: i64,
    /// `b_1` then `b_i` for `i ∈ S`.
    pub b: Vec<i64>,
}

impl DangerousSpec {
    pub fn validate(&self, l: usize) -> Result<()> {
        if self.b.len() != l || self.t.steps.len() != l || self.s.len() + 1 != l {
            return Err(Error::Invalid(format!("spec vectors must have length l = {l}")));
        }
        match self.kind {
            Kind::Dual if self.b.iter().all(|&v| v == 0) => Err(Error::Invalid("dual spec needs b != 0".into())),
            Kind::Simultaneous if self.b0 == 0 => Err(Error::Invalid("simultaneous spec needs b0 != 0".into())),
            _ => Ok(()),
        }
    }
}

/// Closed interval with exact rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalInterval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl RationalInterval {
    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        debug_assert!(lo <= hi);
        RationalInterval { lo, hi }
    }

    pub fn length(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, o: &RationalInterval) -> bool {
        self.lo <= o.lo && o.hi <= self.hi
    }

    pub fn contains_point(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }
}

impl fmt::Display for RationalInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Serialize for RationalInterval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("RationalInterval", 2)?;
        st.serialize_field("lo", &self.lo.to_string())?;
        st.serialize_field("hi", &self.hi.to_string())?;
        st.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rounding {
    /// Contains the true set.
    Outer,
    /// Contained in the true set.
    Inner,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Danger {
    pub spec: DangerousSpec,
    pub interval: RationalInterval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DichotomyCase {
    /// Length at most `e^{-(t+t₁)+β}`.
    Short,
    /// Inside a dangerous interval with the same integer vector and a lower time.
    Nested,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub case: Option<DichotomyCase>,
    pub ok: bool,
    pub length: f64,
    pub bound: f64,
    /// Length at most twice the bound, i.e. radius at most `e^{-(t+t₁)+β}`.
    pub within_double: bool,
    pub nested_in: Option<TimeVector>,
    pub hypothesis: bool,
}

/// Index runs `[start, end)` on a level grid.
pub type Runs = Vec<(u64, u64)>;

fn runs_len(runs: &Runs) -> u64 {
    runs.iter().map(|(a, b)| b - a).sum()
}

fn merge_runs(mut runs: Runs) -> Runs {
    runs.sort_unstable();
    let mut out: Runs = Vec::with_capacity(runs.len());
    for (a, b) in runs {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn intersect_runs(runs: &Runs, a: u64, b: u64) -> Runs {
    let start = runs.partition_point(|r| r.1 <= a);
    runs[start..]
        .iter()
        .take_while(|r| r.0 < b)
        .map(|r| (r.0.max(a), r.1.min(b)))
        .filter(|r| r.0 < r.1)
        .collect()
}

fn subtract_runs(runs: &Runs, cut: &Runs) -> Runs {
    let mut out = Vec::new();
    let mut j = 0;
    for &(a, b) in runs {
        let mut cur = a;
        while j < cut.len() && cut[j].1 <= cur {
            j += 1;
        }
        let mut k = j;
        while k < cut.len() && cut[k].0 < b {
            if cut[k].0 > cur {
                out.push((cur, cut[k].0));
            }
            cur = cur.max(cut[k].1);
            k += 1;
        }
        if cur < b {
            out.push((cur, b));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Removal {
    pub spec: DangerousSpec,
    pub interval: RationalInterval,
    pub removed: Runs,
}

/// The collection `I_k` and the removed pieces `Î_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelState {
    pub k: usize,
    /// `F(k-1)`: the number of grid pieces of `I₀` at this level.
    pub grid: u64,
    pub survivors: Runs,
    pub removed: Runs,
    pub provenance: Vec<Removal>,
    /// `[log(F(k-2)/L), log(F(k-1)/L))`, absent below `k = 2`.
    pub window: Option<(f64, f64)>,
    pub dangerous: usize,
    pub nodes: u64,
}

impl LevelState {
    pub fn root() -> Self {
        LevelState {
            k: 0,
            grid: 1,
            survivors: vec![(0, 1)],
            removed: Vec::new(),
            provenance: Vec::new(),
            window: None,
            dangerous: 0,
            nodes: 0,
        }
    }

    pub fn survivor_count(&self) -> u64 {
        runs_len(&self.survivors)
    }

    pub fn removed_count(&self) -> u64 {
        runs_len(&self.removed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalCharacteristic {
    pub k: usize,
    pub p: usize,
    pub value: String,
    pub value_f64: f64,
    pub max_count: u64,
    /// Grid index of the maximizing interval of `I_p`.
    pub argmax: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivorCertificate {
    pub x: String,
    pub q_max: u64,
    pub dual_cap: u64,
    pub simultaneous: DefectRecord,
    pub dual: DefectRecord,
    /// Smallest certified lower end of the two scans.
    pub kappa_prime: f64,
    pub kappa: f64,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Survivor {
    pub x: String,
    #[serde(skip)]
    pub x_exact: BigRational,
    pub level: usize,
    pub certificate: Option<SurvivorCertificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockReport {
    pub m: u64,
    pub intersecting: usize,
    pub log_bound: f64,
    pub degenerate: bool,
    pub ok: bool,
}

struct TimeBounds {
    per_coord: Vec<Interval>,
    overall: Interval,
}

/// Dangerous-interval algebra and the removal procedure for fixed parameters.
pub struct Construction {
    params: ConstructionParams,
    precision: Precision,
    length: BigRational,
    beta: Interval,
    alpha_s: Vec<Interval>,
    alpha_s_f64: Vec<f64>,
    sim_rate: RateFunction,
    dual_rate: RateFunction,
    rates: Vec<u64>,
    rate_cache: RefCell<HashMap<(Kind, i64), Interval>>,
    levels: Vec<LevelState>,
}

impl Construction {
    pub fn new(params: ConstructionParams, precision: Precision) -> Result<Self> {
        params.validate()?;
        let length = params
            .length
            .as_rational()
            .ok_or_else(|| Error::Invalid("the construction needs a rational L".into()))?;
        let beta = params.beta.enclose(BITS)?;
        let alpha_s = params.alpha_s().iter().map(|a| a.enclose(BITS)).collect::<Result<Vec<_>>>()?;
        let alpha_s_f64 = alpha_s.iter().map(|a| a.mid_f64()).collect();
        let l = params.l;
        let sim_rate = RateFunction::new(params.psi(), Shape::new(l, 1)?)?;
        let dual_rate = RateFunction::new(params.psi(), Shape::new(1, l)?)?;
        let mut rates = Vec::new();
        for k in 0..=params.k_max + 1 {
            rates.push(subdivision(&params.beta, k, &precision)?);
        }
        Ok(Construction {
            params,
            precision,
            length,
            beta,
            alpha_s,
            alpha_s_f64,
            sim_rate,
            dual_rate,
            rates,
            rate_cache: RefCell::new(HashMap::new()),
            levels: vec![LevelState::root()],
        })
    }

    pub fn params(&self) -> &ConstructionParams {
        &self.params
    }

    pub fn levels(&self) -> &[LevelState] {
        &self.levels
    }

    pub fn length(&self) -> &BigRational {
        &self.length
    }

    fn ensure_rates(&mut self, k: usize) -> Result<()> {
        while self.rates.len() <= k {
            let next = subdivision(&self.params.beta, self.rates.len(), &self.precision)?;
            self.rates.push(next);
        }
        Ok(())
    }

    /// `r_k`.
    pub fn rate(&self, k: usize) -> u64 {
        self.rates.get(k).copied().unwrap_or_else(|| {
            subdivision(&self.params.beta, k, &self.precision).expect("subdivision count")
        })
    }

    /// `F(k-1)`, with `F(-1) = 1`.
    pub fn grid(&self, k: usize) -> Result<u64> {
        let mut f: u64 = 1;
        for i in 0..k {
            f = f
                .checked_mul(self.rate(i))
                .ok_or_else(|| Error::BudgetExceeded(format!("grid of level {k} exceeds 64 bits")))?;
        }
        Ok(f)
    }

    fn beta_times(&self, s: i64) -> Interval {
        &self.beta * &Interval::from_i64(s, BITS)
    }

    /// Enclosure of `R(βσ)` (simultaneous) or `R*(βσ)` (dual).
    ///
    /// Both functions are non-decreasing, so the enclosures at the two
    /// float ends of `βσ` bracket the value.
    pub fn rate_at(&self, kind: Kind, sigma: i64) -> Result<Interval> {
        if let Some(r) = self.rate_cache.borrow().get(&(kind, sigma)) {
            return Ok(r.clone());
        }
        let rate = match kind {
            Kind::Dual => &self.dual_rate,
            Kind::Simultaneous => &self.sim_rate,
        };
        let t = self.beta_times(sigma);
        let (lo, hi) = if sigma == 0 { (0.0, 0.0) } else { (t.lo().to_f64_down(), t.hi().to_f64_up()) };
        let rl = rate.enclosure(lo)?;
        let r = if lo == hi { rl } else { Interval::new(rl.lo().clone(), rate.enclosure(hi)?.hi().clone(), BITS) };
        self.rate_cache.borrow_mut().insert((kind, sigma), r.clone());
        Ok(r)
    }

    /// Whether `t` lies in the cone of its kind: `t_i >= R*(t)` (dual) or
    /// `t_i >= -R(t)` (simultaneous), with `t >= 0`.
    pub fn in_cone(&self, kind: Kind, t: &TimeVector) -> Result<Option<bool>> {
        let sigma = t.total();
        if sigma < 0 {
            return Ok(Some(false));
        }
        let r = self.rate_at(kind, sigma)?;
        let bound = match kind {
            Kind::Dual => r,
            Kind::Simultaneous => -&r,
        };
        let mut verdict = Some(true);
        for &s in &t.steps {
            match self.beta_times(s).ge(&bound) {
                Some(true) => {}
                Some(false) => return Ok(Some(false)),
                None => verdict = None,
            }
        }
        Ok(verdict)
    }

    fn gate(value: &Interval, bound: &Interval, rounding: Rounding) -> bool {
        match (value.abs().lt(bound), rounding) {
            (Some(v), _) => v,
            (None, Rounding::Outer) => true,
            (None, Rounding::Inner) => false,
        }
    }

    /// `{x : |den·x - num| < eps} ∩ I₀`.
    fn linear_window(&self, num: &Interval, den: i64, eps: &Interval, rounding: Rounding) -> Result<Option<RationalInterval>> {
        let d = Interval::from_i64(den, BITS);
        let center = num.div(&d)?;
        let radius = eps.div(&d.abs())?;
        let lo = &center - &radius;
        let hi = &center + &radius;
        let (a, b) = match rounding {
            Rounding::Outer => (lo.lo().to_rational(), hi.hi().to_rational()),
            Rounding::Inner => (lo.hi().to_rational(), hi.lo().to_rational()),
        };
        Ok(self.clip(a, b))
    }

    fn clip(&self, a: BigRational, b: BigRational) -> Option<RationalInterval> {
        let a = a.max(BigRational::zero());
        let b = b.min(self.length.clone());
        (a <= b).then(|| RationalInterval::new(a, b))
    }

    fn full(&self) -> RationalInterval {
        RationalInterval::new(BigRational::zero(), self.length.clone())
    }

    /// The exponential bounds attached to a time: `e^{t_i-R*(t)}` and
    /// `e^{-t-R*(t)}` (dual) or `e^{-t_i-R(t)}` and `e^{t-R(t)}` (simultaneous).
    fn time_bounds(&self, kind: Kind, t: &TimeVector) -> Result<TimeBounds> {
        let sigma = t.total();
        let r = self.rate_at(kind, sigma)?;
        let sign = match kind {
            Kind::Dual => 1,
            Kind::Simultaneous => -1,
        };
        let per_coord = t.steps.iter().map(|&s| (&self.beta_times(sign * s) - &r).exp()).collect();
        let overall = (&self.beta_times(-sign * sigma) - &r).exp();
        Ok(TimeBounds { per_coord, overall })
    }

    fn dangerous_with(&self, spec: &DangerousSpec, tb: &TimeBounds, rounding: Rounding) -> Result<Option<RationalInterval>> {
        match spec.kind {
            Kind::Dual => {
                for (bound, &b) in tb.per_coord.iter().zip(&spec.b) {
                    if !Self::gate(&Interval::from_i64(b, BITS), bound, rounding) {
                        return Ok(None);
                    }
                }
                let mut c0 = Interval::from_i64(spec.b0, BITS);
                for (a, &b) in self.alpha_s.iter().zip(&spec.b[1..]) {
                    c0 = &c0 + &(&Interval::from_i64(b, BITS) * a);
                }
                if spec.b[0] == 0 {
                    return Ok(match (c0.abs().lt(&tb.overall), rounding) {
                        (Some(true), _) | (None, Rounding::Outer) => Some(self.full()),
                        _ => None,
                    });
                }
                self.linear_window(&-&c0, spec.b[0], &tb.overall, rounding)
            }
            Kind::Simultaneous => {
                if !Self::gate(&Interval::from_i64(spec.b0, BITS), &tb.overall, rounding) {
                    return Ok(None);
                }
                let b0 = Interval::from_i64(spec.b0, BITS);
                for ((a, &b), eps) in self.alpha_s.iter().zip(&spec.b[1..]).zip(&tb.per_coord[1..]) {
                    let v = &Interval::from_i64(b, BITS) + &(&b0 * a);
                    if !Self::gate(&v, eps, rounding) {
                        return Ok(None);
                    }
                }
                self.linear_window(&-&Interval::from_i64(spec.b[0], BITS), spec.b0, &tb.per_coord[0], rounding)
            }
        }
    }

    /// The dual dangerous interval `D*_t(S, b₀, b)`.
    pub fn dual_dangerous(&self, spec: &DangerousSpec, rounding: Rounding) -> Result<Option<RationalInterval>> {
        if spec.kind != Kind::Dual {
            return Err(Error::Invalid("expected a dual spec".into()));
        }
        self.dangerous(spec, rounding)
    }

    /// The simultaneous dangerous interval `D_t(S, b₀, b)`.
    pub fn sim_dangerous(&self, spec: &DangerousSpec, rounding: Rounding) -> Result<Option<RationalInterval>> {
        if spec.kind != Kind::Simultaneous {
            return Err(Error::Invalid("expected a simultaneous spec".into()));
        }
        self.dangerous(spec, rounding)
    }

    pub fn dangerous(&self, spec: &DangerousSpec, rounding: Rounding) -> Result<Option<RationalInterval>> {
        spec.validate(self.params.l)?;
        self.dangerous_with(spec, &self.time_bounds(spec.kind, &spec.t)?, rounding)
    }

    /// For `l = 1`: `D*_t(b₀, b₁)` against `D_t(b₁, b₀)`, both roundings.
    pub fn swap_identity(&self, spec: &DangerousSpec) -> Result<bool> {
        if self.params.l != 1 || spec.kind != Kind::Dual {
            return Err(Error::Invalid("the swap identity needs l = 1 and a dual spec".into()));
        }
        let swapped = DangerousSpec { kind: Kind::Simultaneous, s: spec.s.clone(), t: spec.t.clone(), b0: spec.b[0], b: vec![spec.b0] };
        if swapped.b0 == 0 {
            return Err(Error::Invalid("dual spec has b = 0".into()));
        }
        for rounding in [Rounding::Outer, Rounding::Inner] {
            if self.dual_dangerous(spec, rounding)? != self.sim_dangerous(&swapped, rounding)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn kappa_hypothesis(&self, kind: Kind) -> Result<bool> {
        let report = param_check(&self.params)?;
        let name = match kind {
            Kind::Dual => "kappa <= gamma",
            Kind::Simultaneous => "kappa <= e^{-(l+1)beta}",
        };
        Ok(report.row(name).map(|r| r.holds).unwrap_or(false))
    }

    /// Classifies a nonempty dangerous interval: short, or nested in a
    /// dangerous interval with the same integer vector at a lower time.
    pub fn length_dichotomy_check(&self, spec: &DangerousSpec, interval: &RationalInterval) -> Result<DichotomyReport> {
        let big_t = self.beta_times(spec.t.big_t());
        let bound = (&self.beta - &big_t).exp();
        let len = Interval::from_rational(&interval.length(), BITS);
        let short = len.le(&bound) == Some(true);
        let double = Interval::from_i64(2, BITS);
        let within_double = len.le(&(&bound * &double)) == Some(true);

        let mut nested_in = None;
        if !short {
            let l = self.params.l;
            let candidates: Vec<usize> = match spec.kind {
                Kind::Dual => vec![0],
                Kind::Simultaneous => (0..l).collect(),
            };
            for i in candidates {
                let mut steps = spec.t.steps.clone();
                steps[i] -= 1;
                let lower = TimeVector::new(steps);
                if lower.total() < 0 || self.in_cone(spec.kind, &lower)? != Some(true) {
                    continue;
                }
                let other = DangerousSpec { t: lower.clone(), ..spec.clone() };
                if let Some(inner) = self.dangerous(&other, Rounding::Inner)? {
                    if inner.contains(interval) {
                        nested_in = Some(lower);
                        break;
                    }
                }
            }
        }
        let case = if short {
            Some(DichotomyCase::Short)
        } else if nested_in.is_some() {
            Some(DichotomyCase::Nested)
        } else {
            None
        };
        let hypothesis = self.kappa_hypothesis(spec.kind)?;
        if case.is_none() && hypothesis && !within_double {
            return Err(Error::DichotomyViolation(format!("{spec:?} gives {interval}")));
        }
        Ok(DichotomyReport {
            case,
            ok: case.is_some(),
            length: len.mid_f64(),
            bound: bound.mid_f64(),
            within_double,
            nested_in,
            hypothesis,
        })
    }

    /// Smallest `s` with `βs >= bound` not certainly false.
    fn min_step(&self, bound: &Interval) -> i64 {
        let guess = (bound.lo_f64() / self.beta.lo_f64()).floor() as i64 - 2;
        let mut s = guess;
        while self.beta_times(s).lt(bound) == Some(true) {
            s += 1;
        }
        s
    }

    /// Times `t` of the given kind in the cone with `T` possibly in `[t_lo, t_hi)`.
    fn times_in_window(&self, kind: Kind, t_lo: &Interval, t_hi: &Interval) -> Result<Vec<TimeVector>> {
        let l = self.params.l;
        let mut out = Vec::new();
        for sigma in 0i64.. {
            if sigma > 1_000_000 {
                return Err(Error::BudgetExceeded("time enumeration does not terminate".into()));
            }
            let r = self.rate_at(kind, sigma)?;
            let t = self.beta_times(sigma);
            let (floor_t, cone) = match kind {
                Kind::Dual => (&t + &r, r.clone()),
                Kind::Simultaneous => (&t - &r, -&r),
            };
            if floor_t.ge(t_hi) == Some(true) {
                break;
            }
            // no admissible b₀ when e^{t-R(t)} <= 1
            if kind == Kind::Simultaneous && floor_t.hi().signum() <= 0 {
                continue;
            }
            let s_min = self.min_step(&cone);
            let rest = l as i64 - 1;
            if sigma < s_min * l as i64 {
                continue;
            }
            for s1 in s_min..=sigma - rest * s_min {
                let big_t = self.beta_times(sigma + s1);
                if big_t.lt(t_lo) == Some(true) || big_t.ge(t_hi) == Some(true) {
                    continue;
                }
                let mut parts = vec![s1];
                compositions(sigma - s1, rest as usize, s_min, &mut parts, &mut |p| {
                    out.push(TimeVector::new(p.to_vec()));
                });
            }
        }
        Ok(out)
    }

    /// All nonempty dangerous intervals of one kind at time `t` that pass `keep`.
    fn intervals_at(
        &self,
        kind: Kind,
        t: &TimeVector,
        nodes: &mut u64,
        keep: &mut dyn FnMut(&RationalInterval) -> bool,
        out: &mut Vec<Danger>,
    ) -> Result<()> {
        let l = self.params.l;
        let tb = self.time_bounds(kind, t)?;
        let big_l = self.length.to_f64().unwrap_or(f64::INFINITY);
        let mut visit = |b0: i64, b: &[i64], nodes: &mut u64| -> Result<()> {
            *nodes += 1;
            if *nodes > self.params.node_budget {
                return Err(Error::BudgetExceeded(format!("node budget {} exhausted at t = {:?}", self.params.node_budget, t.steps)));
            }
            let spec = DangerousSpec { kind, s: self.params.s.clone(), t: t.clone(), b0, b: b.to_vec() };
            if let Some(iv) = self.dangerous_with(&spec, &tb, Rounding::Outer)? {
                if keep(&iv) {
                    out.push(Danger { spec, interval: iv });
                }
            }
            Ok(())
        };
        match kind {
            Kind::Dual => {
                let caps: Vec<i64> = tb.per_coord.iter().map(|g| g.hi_f64().floor() as i64).collect();
                let eps = tb.overall.hi_f64();
                let mut b = vec![0i64; l];
                box_points(&caps, 0, &mut b, &mut |b| {
                    if b.iter().all(|&v| v == 0) {
                        return Ok(());
                    }
                    let shift: f64 = b[1..].iter().zip(&self.alpha_s_f64).map(|(&v, a)| v as f64 * a).sum();
                    let span = b[0] as f64 * big_l;
                    let lo = (-shift - span.max(0.0) - eps).floor() as i64 - 1;
                    let hi = (-shift - span.min(0.0) + eps).ceil() as i64 + 1;
                    for b0 in lo..=hi {
                        visit(b0, b, nodes)?;
                    }
                    Ok(())
                })?;
            }
            Kind::Simultaneous => {
                let cap = tb.overall.hi_f64().floor() as i64;
                let eps: Vec<f64> = tb.per_coord.iter().map(|e| e.hi_f64()).collect();
                for b0 in -cap..=cap {
                    if b0 == 0 {
                        continue;
                    }
                    // x-free rows first: b_i must sit within eps_i of -b₀α_i
                    let mut choices: Vec<Vec<i64>> = vec![Vec::new()];
                    for (a, e) in self.alpha_s_f64.iter().zip(&eps[1..]) {
                        let c = -(b0 as f64) * a;
                        let slack = e + 1e-12 * (1.0 + c.abs());
                        let near: Vec<i64> = ((c - slack).floor() as i64..=(c + slack).ceil() as i64)
                            .filter(|&v| (v as f64 - c).abs() <= slack)
                            .collect();
                        choices.push(near);
                    }
                    if choices[1..].iter().any(|c| c.is_empty()) {
                        continue;
                    }
                    let span = -(b0 as f64) * big_l;
                    choices[0] = ((span.min(0.0) - eps[0]).floor() as i64 - 1..=(span.max(0.0) + eps[0]).ceil() as i64 + 1).collect();
                    let mut b = vec![0i64; l];
                    choice_points(&choices, 0, &mut b, &mut |b| visit(b0, b, nodes))?;
                }
            }
        }
        Ok(())
    }

    fn window(&self, k: usize) -> Result<Option<(Interval, Interval)>> {
        if k < 2 {
            return Ok(None);
        }
        let lo = self.grid(k - 1)?;
        let hi = self.grid(k)?;
        if lo == hi {
            return Ok(None);
        }
        let at = |f: u64| -> Result<Interval> {
            let v = BigRational::from_integer(f.into()) / &self.length;
            Interval::from_rational(&v, BITS).ln()
        };
        Ok(Some((at(lo)?, at(hi)?)))
    }

    /// Grid indices at `grid` whose closed pieces meet `iv`.
    fn touched(&self, iv: &RationalInterval, grid: u64) -> (u64, u64) {
        let scale = BigRational::from_integer(grid.into()) / &self.length;
        let a: BigInt = (&iv.lo * &scale).ceil().to_integer() - 1;
        let b: BigInt = (&iv.hi * &scale).floor().to_integer();
        let a = a.max(BigInt::zero()).to_u64().unwrap_or(u64::MAX);
        let b = b.min(BigInt::from(grid - 1)).to_u64().unwrap_or(0);
        (a, b + 1)
    }

    /// Dangerous intervals with `T` in the window of level `k` meeting `I_{k-1}`.
    pub fn enumerate_dangerous(&self, k: usize, current: &LevelState) -> Result<(Vec<Danger>, u64)> {
        let mut out = Vec::new();
        let mut nodes = 0;
        let Some((t_lo, t_hi)) = self.window(k)? else {
            return Ok((out, nodes));
        };
        let grid = current.grid;
        for kind in [Kind::Dual, Kind::Simultaneous] {
            for t in self.times_in_window(kind, &t_lo, &t_hi)? {
                let mut keep = |iv: &RationalInterval| {
                    let (a, b) = self.touched(iv, grid);
                    a < b && !intersect_runs(&current.survivors, a, b).is_empty()
                };
                self.intervals_at(kind, &t, &mut nodes, &mut keep, &mut out)?;
            }
        }
        Ok((out, nodes))
    }

    /// Builds level `k` from level `k-1`.
    pub fn remove_step(&self, prev: &LevelState) -> Result<LevelState> {
        let k = prev.k + 1;
        let r = self.rate(prev.k);
        let grid = prev
            .grid
            .checked_mul(r)
            .ok_or_else(|| Error::BudgetExceeded(format!("grid of level {k} exceeds 64 bits")))?;
        let candidates: Runs = prev.survivors.iter().map(|&(a, b)| (a * r, b * r)).collect();
        let (dangers, nodes) = self.enumerate_dangerous(k, prev)?;
        let mut provenance = Vec::new();
        let mut cut = Vec::new();
        for d in &dangers {
            let (a, b) = self.touched(&d.interval, grid);
            let hit = intersect_runs(&candidates, a, b);
            if !hit.is_empty() {
                cut.extend(hit.iter().copied());
                provenance.push(Removal { spec: d.spec.clone(), interval: d.interval.clone(), removed: hit });
            }
        }
        let removed = merge_runs(cut);
        let survivors = subtract_runs(&candidates, &removed);
        if survivors.is_empty() {
            let detail = provenance
                .iter()
                .take(5)
                .map(|p| format!("{:?} t={:?} b0={} b={:?}", p.spec.kind, p.spec.t.steps, p.spec.b0, p.spec.b))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::Extinction { level: k, detail });
        }
        let window = self.window(k)?.map(|(a, b)| (a.mid_f64(), b.mid_f64()));
        Ok(LevelState { k, grid, survivors, removed, provenance, window, dangerous: dangers.len(), nodes })
    }

    /// Builds every level up to `k_max`.
    pub fn build(&mut self, k_max: usize) -> Result<&[LevelState]> {
        self.ensure_rates(k_max + 1)?;
        while self.levels.len() <= k_max {
            let next = self.remove_step(self.levels.last().expect("root level"))?;
            self.levels.push(next);
        }
        Ok(&self.levels[..=k_max])
    }

    fn level(&self, k: usize) -> Result<&LevelState> {
        self.levels.get(k).ok_or_else(|| Error::InsufficientData(format!("level {k} not built")))
    }

    /// `Δ_k` with every removed piece assigned to the single index `p(k)`.
    pub fn local_characteristic(&self, k: usize) -> Result<LocalCharacteristic> {
        let level = self.level(k)?;
        let p = if k == 0 { 0 } else { p_of_k(self.params.a_index(), k).min(k - 1) };
        let mut factor = BigRational::one();
        for i in p..k {
            factor *= BigRational::new(4.into(), self.rate(i).into());
        }
        let block = level.grid / self.level(p)?.grid;
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for &(a, b) in &level.removed {
            let mut cur = a;
            while cur < b {
                let idx = cur / block;
                let end = ((idx + 1) * block).min(b);
                *counts.entry(idx).or_default() += end - cur;
                cur = end;
            }
        }
        let (argmax, max_count) = counts
            .iter()
            .fold((None, 0), |best, (&i, &c)| if c > best.1 { (Some(i), c) } else { best });
        let value = factor * BigRational::from_integer(max_count.into());
        Ok(LocalCharacteristic {
            k,
            p,
            value_f64: value.to_f64().unwrap_or(f64::INFINITY),
            value: value.to_string(),
            max_count,
            argmax,
        })
    }

    /// `min (1 - log 2 / log r_k)` over the subdivisions used up to level `K`,
    /// provided `Δ_k <= 1` at every built level.
    pub fn dimension_lower_bound(&self, big_k: usize) -> Result<f64> {
        for k in 1..=big_k {
            let delta = self.local_characteristic(k)?;
            let v: BigRational = delta.value.parse().map_err(|_| Error::Parse(delta.value.clone()))?;
            if v > BigRational::one() {
                return Err(Error::CharacteristicExceeded(k));
            }
        }
        let used: Vec<u64> = (0..big_k).map(|k| self.rate(k)).collect();
        bv_bound(&used).ok_or_else(|| Error::InsufficientData("no subdivision with r_k >= 2 up to this level".into()))
    }

    /// Midpoint of the leftmost surviving interval at level `K`, with defect
    /// scans for `q <= F(K-1)/L` (the dual scan stops at `dual_cap`).
    pub fn survivor_point(&self, big_k: usize, dual_cap: u64) -> Result<Survivor> {
        let level = self.level(big_k)?;
        let Some(&(j, _)) = level.survivors.first() else {
            return Err(Error::Extinction { level: big_k, detail: "no surviving interval".into() });
        };
        let grid = BigRational::from_integer(level.grid.into());
        let x = BigRational::new((2 * j + 1).into(), 2.into()) * &self.length / &grid;
        let q_max = (&grid / &self.length).floor().to_integer().to_u64().unwrap_or(u64::MAX);
        let certificate = if big_k == 0 || q_max == 0 {
            None
        } else {
            let mut coords = vec![CertifiedReal::from_rational(x.clone())];
            coords.extend(self.params.alpha_s());
            let height = HeightSpec::Log { l: self.params.l as u32 };
            let sim = mad_defect(&TargetVector::column(coords.clone())?, &height, q_max, false, &self.precision)?;
            let cap = q_max.min(dual_cap).max(1);
            let dual = mad_star_defect(&TargetVector::linear_form(coords)?, &height, cap, false, &self.precision)?;
            let kappa_prime = sim.value_lo.min(dual.value_lo);
            Some(SurvivorCertificate {
                x: x.to_string(),
                q_max,
                dual_cap: cap,
                positive: sim.value_lo > 0.0 && dual.value_lo > 0.0,
                simultaneous: sim,
                dual,
                kappa_prime,
                kappa: self.params.kappa.to_f64(),
            })
        };
        Ok(Survivor { x: x.to_string(), x_exact: x, level: big_k, certificate })
    }

    /// `c₂ e^{-T+(l+1)R(t)}` rounded to a rational.
    pub fn block_length(&self, kind: Kind, t: &TimeVector) -> Result<BigRational> {
        let r = self.rate_at(kind, t.total())?.mid_f64();
        let big_t = self.beta_times(t.big_t()).mid_f64();
        let v = self.params.c2.to_f64() * (-big_t + (self.params.l as f64 + 1.0) * r).exp();
        BigRational::from_float(v).ok_or_else(|| Error::Invalid("block length is not finite".into()))
    }

    /// Block multiplicity `m_t(J)`: the largest `m` such that the blocks
    /// `M_0 ∪ … ∪ M_i` meet at least `i` dangerous intervals for every `i <= m`.
    pub fn block_multiplicity(&self, kind: Kind, t: &TimeVector, start: &BigRational, len: &BigRational) -> Result<BlockReport> {
        if !len.is_positive() {
            return Err(Error::Invalid("block length must be positive".into()));
        }
        let mut nodes = 0;
        let mut found = Vec::new();
        self.intervals_at(kind, t, &mut nodes, &mut |iv| &iv.hi >= start, &mut found)?;
        let mut los: Vec<BigRational> = found.iter().map(|d| d.interval.lo.clone()).collect();
        los.sort();
        let mut m = 0u64;
        let mut i = 1u64;
        loop {
            let right = start + len * BigRational::from_integer((i + 1).into());
            let count = los.partition_point(|lo| lo <= &right) as u64;
            if count < i {
                break;
            }
            m = i;
            i += 1;
        }
        let l = self.params.l as f64;
        let r = self.rate_at(kind, t.total())?.hi_f64();
        let slack = self.params.slack * l * self.beta.hi_f64();
        let t1 = self.beta_times(t.steps[0]).mid_f64();
        let degenerate = kind == Kind::Simultaneous && t1 < 2.0 * l * r;
        let exponent = if degenerate { (l + 1.0) * (l + 2.0) * (4.0 * l + 3.0) } else { (l + 1.0) * (l + 1.0) };
        let log_bound = exponent * r + slack;
        Ok(BlockReport { m, intersecting: found.len(), log_bound, degenerate, ok: m == 0 || (m as f64).ln() <= log_bound })
    }

    /// One CSV row per built level: `k,r,length,intervals,removed,delta,t_lo,t_hi`.
    pub fn trace_csv(&self) -> Result<String> {
        let mut out = String::from("k,r,length,intervals,removed,delta,t_lo,t_hi\n");
        for level in &self.levels {
            let r = if level.k == 0 { 1 } else { self.rate(level.k - 1) };
            let length = &self.length / BigRational::from_integer(level.grid.into());
            let delta = self.local_characteristic(level.k)?.value_f64;
            let (lo, hi) = level.window.map(|(a, b)| (a.to_string(), b.to_string())).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                level.k,
                r,
                length,
                level.survivor_count(),
                level.removed_count(),
                delta,
                lo,
                hi
            ));
        }
        Ok(out)
    }
}

fn compositions(total: i64, parts: usize, min: i64, prefix: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
    if parts == 0 {
        if total == 0 {
            f(prefix);
        }
        return;
    }
    if parts == 1 {
        if total >= min {
            prefix.push(total);
            f(prefix);
            prefix.pop();
        }
        return;
    }
    let max_first = total - (parts as i64 - 1) * min;
    for v in min..=max_first {
        prefix.push(v);
        compositions(total - v, parts - 1, min, prefix, f);
        prefix.pop();
    }
}

fn box_points(caps: &[i64], i: usize, cur: &mut Vec<i64>, f: &mut dyn FnMut(&[i64]) -> Result<()>) -> Result<()> {
    if i == caps.len() {
        return f(cur);
    }
    for v in -caps[i]..=caps[i] {
        cur[i] = v;
        box_points(caps, i + 1, cur, f)?;
    }
    Ok(())
}

fn choice_points(choices: &[Vec<i64>], i: usize, cur: &mut Vec<i64>, f: &mut dyn FnMut(&[i64]) -> Result<()>) -> Result<()> {
    if i == choices.len() {
        return f(cur);
    }
    for &v in &choices[i] {
        cur[i] = v;
        choice_points(choices, i + 1, cur, f)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi() -> CertifiedReal {
        CertifiedReal::parse_entry("quad 1 1 2 5").unwrap()
    }

    fn demo(l: usize) -> Construction {
        let s = if l == 2 { vec![2] } else { vec![] };
        Construction::new(ConstructionParams::demo(2, l, s, vec![phi()]), Precision::default()).unwrap()
    }

    fn spec(kind: Kind, steps: Vec<i64>, b0: i64, b: Vec<i64>) -> DangerousSpec {
        let s = if b.len() == 2 { vec![2] } else { vec![] };
        DangerousSpec { kind, s, t: TimeVector::new(steps), b0, b }
    }

    #[test]
    fn schedule_starts_with_unit_factors() {
        let p = Precision::default();
        let e = CertifiedReal::e();
        assert_eq!(subdivision(&e, 0, &p).unwrap(), 1);
        assert_eq!(subdivision(&e, 1, &p).unwrap(), 1);
        let v = std::f64::consts::E.exp() * 2.0 * 2f64.ln();
        assert!(v > 21.0 && v < 21.1);
        assert_eq!(subdivision(&e, 2, &p).unwrap(), 22);
        let (r, f) = schedule(&e, 3, &p).unwrap();
        assert_eq!(r, 50);
        assert_eq!(f, BigInt::from(1100));
    }

    #[test]
    fn growth_of_f() {
        let p = Precision::default();
        let e = CertifiedReal::e();
        for k in 1..12 {
            assert!(growth_check(&e, k, &p).unwrap().upper_holds, "k = {k}");
            assert!(growth_check(&e, k, &p).unwrap().shifted_lower_holds, "k = {k}");
        }
        // r_0 = r_1 = 1 leaves log F(2) = log 22 below 2β
        assert!(!growth_check(&e, 2, &p).unwrap().lower_holds);
    }

    #[test]
    fn partition_index() {
        assert_eq!(p_of_k(3, 5), 0);
        assert_eq!(p_of_k(3, 6), 4);
        let mut last = 0;
        for k in 2..40 {
            let p = p_of_k(3, k);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn bv_formula() {
        assert_eq!(bv_bound(&[4, 4, 4]), Some(0.5));
        assert_eq!(bv_bound(&[1, 1]), None);
        assert!(bv_bound(&[1u64 << 40]).unwrap() > 0.97);
    }

    #[test]
    fn parameter_rows() {
        let mut p = ConstructionParams::demo(2, 1, vec![], vec![phi()]);
        p.kappa = CertifiedReal::from_int(1);
        let r = param_check(&p).unwrap();
        assert!(!r.row("kappa <= e^{-(l+1)beta}").unwrap().holds);

        let f = ConstructionParams::faithful(2, 1, vec![], vec![phi()], CertifiedReal::from_int(10));
        let r = param_check(&f).unwrap();
        for row in &r.rows[..7] {
            assert!(row.holds, "{}", row.name);
        }
        // L = e^β sits far below e^{2Bβ}κ^{-(C+1)}
        assert!(!r.rows[7].holds);
        // 4^{2A} with A = 2222 dwarfs every other factor
        assert!(!r.epsilon_row.holds);
        assert!(r.epsilon_row.lhs_log > 6000.0);
    }

    #[test]
    fn dual_interval_shapes() {
        let c = demo(1);
        // b₁ = 0 is excluded for l = 1, so use l = 2 for the constant case
        let c2 = demo(2);
        let constant = spec(Kind::Dual, vec![3, 3], 1, vec![0, 1]);
        assert_eq!(c2.dual_dangerous(&constant, Rounding::Outer).unwrap(), None);

        let s = spec(Kind::Dual, vec![4], -10, vec![3]);
        let iv = c.dual_dangerous(&s, Rounding::Outer).unwrap().unwrap();
        let r = c.rate_at(Kind::Dual, 4).unwrap().mid_f64();
        let t = 4.0 * std::f64::consts::E;
        let radius = (-t - r).exp() / 3.0;
        let center = 10.0 / 3.0;
        assert!((iv.lo.to_f64().unwrap() - (center - radius)).abs() < 1e-12);
        assert!((iv.length().to_f64().unwrap() - 2.0 * radius).abs() < 1e-15);
        let inner = c.dual_dangerous(&s, Rounding::Inner).unwrap().unwrap();
        assert!(iv.contains(&inner));
    }

    #[test]
    fn dual_interval_against_pointwise_test() {
        // κ = e^{-2}, β = e, l = 1: membership of sample points decided straight
        // from |b₀ + b₁x| < e^{-t-R*(t)} with R* from the f64 solver
        let mut p = ConstructionParams::demo(1, 1, vec![], vec![]);
        p.kappa = CertifiedReal::parse_expr("exp(-2)").unwrap();
        let c = Construction::new(p.clone(), Precision::default()).unwrap();
        let rate = RateFunction::new(p.psi(), Shape::new(1, 1).unwrap()).unwrap();
        let t = 3.0 * std::f64::consts::E;
        let r = rate.solve(t).unwrap();
        let eps = (-t - r).exp();
        for (b0, b1) in [(-7, 2), (-1, 1), (-30, 5), (3, -1)] {
            let s = spec(Kind::Dual, vec![3], b0, vec![b1]);
            let iv = c.dual_dangerous(&s, Rounding::Outer).unwrap();
            let gate = (b1 as f64).abs() < (t - r).exp();
            for i in 0..=4000 {
                let x = 16.0 * i as f64 / 4000.0;
                let v = (b0 as f64 + b1 as f64 * x).abs();
                if (v - eps).abs() < 1e-9 {
                    continue;
                }
                let inside = gate && v < eps;
                let got = iv.as_ref().map(|iv| iv.lo.to_f64().unwrap() <= x && x <= iv.hi.to_f64().unwrap()).unwrap_or(false);
                assert_eq!(inside, got, "b = ({b0}, {b1}), x = {x}");
            }
        }
    }

    #[test]
    fn simultaneous_gates_and_length() {
        let c = demo(2);
        // x-free row |b₂ + b₀φ| fails for b₀ = 1, b₂ = 0
        let s = spec(Kind::Simultaneous, vec![1, 4], 1, vec![0, 0]);
        assert_eq!(c.sim_dangerous(&s, Rounding::Outer).unwrap(), None);

        // t = (6β, -2β): |b₀| < e^{4β-R}, |b₂ + 2φ| = 0.236 < e^{2β-R}
        let s = spec(Kind::Simultaneous, vec![6, -2], 2, vec![-3, -3]);
        assert_eq!(c.in_cone(Kind::Simultaneous, &s.t).unwrap(), Some(true));
        let iv = c.sim_dangerous(&s, Rounding::Outer).unwrap().unwrap();
        let r = c.rate_at(Kind::Simultaneous, 4).unwrap().mid_f64();
        let radius = (-6.0 * std::f64::consts::E - r).exp() / 2.0;
        assert!((iv.lo.to_f64().unwrap() - (1.5 - radius)).abs() < 1e-15);
        assert!((iv.length().to_f64().unwrap() - 2.0 * radius).abs() < 1e-15);
    }

    #[test]
    fn swap_identity_for_l_one() {
        let c = demo(1);
        for (t1, b0, b1) in [(3, -5, 2), (4, -17, 6), (5, 1, -1), (3, 0, 1)] {
            assert!(c.swap_identity(&spec(Kind::Dual, vec![t1], b0, vec![b1])).unwrap());
        }
    }

    #[test]
    fn dichotomy_cases() {
        let c = demo(1);
        let r = |s: i64| c.rate_at(Kind::Dual, s).unwrap().mid_f64();
        let e = std::f64::consts::E;
        // |b₁| >= 2e^{t₁-β-R*(t)}: short
        let t1 = 4;
        let big = (2.0 * ((t1 as f64 - 1.0) * e - r(t1)).exp()).ceil() as i64 + 1;
        assert!((big as f64) < ((t1 as f64) * e - r(t1)).exp());
        let s = spec(Kind::Dual, vec![t1], -big, vec![big]);
        let iv = c.dual_dangerous(&s, Rounding::Outer).unwrap().unwrap();
        let rep = c.length_dichotomy_check(&s, &iv).unwrap();
        assert_eq!(rep.case, Some(DichotomyCase::Short));

        // |b₁| < e^{t₁-β-R*(t-β)} and t₁ >= R*(t-β)+β: nested at t - β
        assert!(t1 as f64 * e >= r(t1 - 1) + e);
        let s = spec(Kind::Dual, vec![t1], -1, vec![1]);
        let iv = c.dual_dangerous(&s, Rounding::Outer).unwrap().unwrap();
        let rep = c.length_dichotomy_check(&s, &iv).unwrap();
        assert_eq!(rep.case, Some(DichotomyCase::Nested));
        assert_eq!(rep.nested_in, Some(TimeVector::new(vec![t1 - 1])));
    }

    #[test]
    fn low_levels_remove_nothing() {
        let c = demo(1);
        let root = LevelState::root();
        assert!(c.enumerate_dangerous(2, &root).unwrap().0.is_empty());
        let next = c.remove_step(&root).unwrap();
        assert_eq!(next.survivors, vec![(0, 1)]);
        assert!(next.removed.is_empty());
        assert_eq!(c.local_characteristic(0).unwrap().value, "0");
    }

    #[test]
    fn characteristic_formula() {
        // one removed piece, all r_i = 4, p = 0 gives 1
        let mut p = ConstructionParams::demo(1, 1, vec![], vec![]);
        p.beta = CertifiedReal::from_int(1);
        let mut c = Construction::new(p, Precision::default()).unwrap();
        c.rates = vec![4, 4, 4];
        let mut l1 = LevelState::root();
        l1.k = 1;
        l1.grid = 4;
        l1.survivors = vec![(0, 3)];
        l1.removed = vec![(3, 4)];
        c.levels.push(l1);
        let delta = c.local_characteristic(1).unwrap();
        assert_eq!(delta.value, "1");
        assert_eq!(delta.argmax, Some(0));
    }

    #[test]
    fn run_arithmetic() {
        let runs = vec![(0, 10), (20, 30)];
        assert_eq!(intersect_runs(&runs, 5, 25), vec![(5, 10), (20, 25)]);
        assert_eq!(subtract_runs(&runs, &vec![(2, 4), (9, 21)]), vec![(0, 2), (4, 9), (21, 30)]);
        assert_eq!(merge_runs(vec![(5, 7), (0, 2), (1, 5)]), vec![(0, 7)]);
    }

    #[test]
    fn survivor_at_root() {
        let c = demo(1);
        let s = c.survivor_point(0, 10).unwrap();
        assert_eq!(s.x, "8");
        assert!(s.certificate.is_none());
    }

    #[test]
    fn params_round_trip_and_reject_unknown_keys() {
        let p = ConstructionParams::demo(2, 2, vec![2], vec![phi()]);
        let text = serde_json::to_string(&p).unwrap();
        let back: ConstructionParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back.k_max, 6);
        assert_eq!(back.alpha_tail[0].to_f64(), phi().to_f64());
        let bad = text.replacen('{', "{\"extra\":1,", 1);
        assert!(serde_json::from_str::<ConstructionParams>(&bad).is_err());
    }
}
