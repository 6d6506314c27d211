use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use multapprox::approx::{growth_exponent, mad_defect, mad_star_defect, recip_sum, GrowthModel, HeightSpec, PsiSpec, QStar};
use multapprox::cantor::{growth_check, param_check, Construction, ConstructionParams, Kind, TimeVector};
use multapprox::dani::{correspondence_check, discrete_certificate, log_psi_from_rate, rate_property_check, RateFunction, Shape};
use multapprox::error::Error;
use multapprox::geometry::{
    check_blichfeldt, check_mahler, check_wedge_duality, counting_bound, counting_constant, minkowski_from,
    minima_with_wedges, Box, LatticeBasis,
};
use multapprox::real::{CertifiedReal, Precision};
use multapprox::suites::{basis_cases, correspondence_cases, run_correspondence_case, run_geometry_case, CorrespondenceSuite, GeometrySuite};

use crate::config::{config_error, Format};
use crate::grammar;

const PHI: &str = "quad 1 1 2 5";
const DIAG_BUDGET: u64 = 1_000_000;

/// How far an emitted value can be trusted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Exact,
    CertifiedInterval,
    Diagnostic,
}

pub struct Ctx {
    pub seed: u64,
    pub threads: Option<usize>,
    pub budget: Option<u64>,
    pub format: Format,
    pub precision: Precision,
}

impl Ctx {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n);
        }
        Ok(b.build()?)
    }
}

#[derive(Default)]
pub struct Report {
    pub outputs: Map<String, Value>,
    pub certification: BTreeMap<String, Status>,
    pub csv: Option<String>,
}

impl Report {
    fn put(&mut self, key: &str, value: impl Serialize, status: Status) -> Result<()> {
        self.outputs.insert(key.into(), serde_json::to_value(value)?);
        self.certification.insert(key.into(), status);
        Ok(())
    }
}

fn csv_of<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| config_error(format!("missing {what}")))
}

fn q_text(q: &QStar) -> String {
    match q {
        QStar::Scalar(v) => v.to_string(),
        QStar::Vector(v) => v.iter().map(i64::to_string).collect::<Vec<_>>().join(" "),
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct ScanArgs {
    /// Target entries, e.g. `quad 1 1 2 5` or `rational 1/3`.
    #[arg(long, num_args = 1..)]
    pub alpha: Option<Vec<String>>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// `const [c]`, `log <l>`, `log-beta <l> <beta>` or `power-log <k>`.
    #[arg(long = "h", num_args = 1..)]
    pub height: Option<Vec<String>>,
    #[arg(long = "Q")]
    pub q_max: Option<u64>,
    /// Scan the linear form `q·α` over `q ∈ Z^d` instead of `q` times the column.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dual: Option<bool>,
    /// Keep the record-breaking `q` (always on with `--format csv`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trace: Option<bool>,
}

pub fn scan(a: &ScanArgs, ctx: &Ctx) -> Result<Report> {
    let dual = a.dual.unwrap_or(false);
    let rows = if dual { a.rows.or(Some(1)) } else { a.rows };
    let y = grammar::target(required(&a.alpha, "--alpha")?, rows, a.cols)?;
    let height = match &a.height {
        Some(t) => grammar::height(t)?,
        None => HeightSpec::constant_one(),
    };
    let q_max = a.q_max.unwrap_or(1000);
    let keep = a.trace.unwrap_or(false) || ctx.format == Format::Csv;
    let record = if dual {
        mad_star_defect(&y, &height, q_max, keep, &ctx.precision)?
    } else {
        mad_defect(&y, &height, q_max, keep, &ctx.precision)?
    };
    let mut r = Report::default();
    if let Some(trace) = &record.trace {
        r.csv = Some(csv_of(trace.iter().map(|p| (q_text(&p.q), p.product)).map(|(q, product)| TraceRow { q, product }))?);
    }
    let status = if record.exact.is_some() { Status::Exact } else { Status::CertifiedInterval };
    r.put("defect", &record, status)?;
    Ok(r)
}

#[derive(Serialize)]
struct TraceRow {
    q: String,
    product: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    QLogQ,
    Power,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct SumsArgs {
    #[arg(long, num_args = 1..)]
    pub alpha: Option<Vec<String>>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Box sizes; every coordinate of `q` ranges over `|q_j| <= Q`.
    #[arg(long = "Q", num_args = 1..)]
    pub q_values: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
}

#[derive(Serialize)]
struct SumRow {
    q: u64,
    lo: f64,
    hi: f64,
}

pub fn sums(a: &SumsArgs, ctx: &Ctx) -> Result<Report> {
    let alpha = a.alpha.clone().unwrap_or_else(|| vec![PHI.into()]);
    let y = grammar::target(&alpha, a.rows, a.cols)?;
    let qs = a.q_values.clone().unwrap_or_else(|| vec![100, 1000, 10_000, 100_000]);
    if qs.iter().any(|&q| q == 0) {
        return Err(config_error("box sizes must be positive"));
    }
    let model = match a.model.unwrap_or(ModelArg::QLogQ) {
        ModelArg::QLogQ => GrowthModel::QLogQ,
        ModelArg::Power => GrowthModel::Power,
    };
    let cols = y.cols();
    let rows: Vec<SumRow> = ctx.pool()?.install(|| {
        qs.par_iter()
            .map(|&q| {
                let iv = recip_sum(&y, &vec![q as f64; cols], &ctx.precision)?;
                Ok(SumRow { q, lo: iv.lo_f64(), hi: iv.hi_f64() })
            })
            .collect::<multapprox::error::Result<Vec<_>>>()
    })?;
    let at_one = recip_sum(&y, &vec![1.0; cols], &ctx.precision)?;
    let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.q as f64, 0.5 * (r.lo + r.hi))).collect();
    let fit = if series.len() >= 3 { Some(growth_exponent(&series, model)?) } else { None };
    let mut r = Report::default();
    r.put("series", &rows, Status::CertifiedInterval)?;
    r.put("sum_at_1", json!({ "lo": at_one.lo_f64(), "hi": at_one.hi_f64() }), Status::CertifiedInterval)?;
    r.put("fit", fit, Status::Diagnostic)?;
    r.csv = Some(csv_of(&rows)?);
    Ok(r)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct TransformArgs {
    /// `reciprocal <c>`, `power <c> <s>` or `kappa <l> <beta> <kappa>`.
    #[arg(long, num_args = 1..)]
    pub psi: Option<Vec<String>>,
    /// Full ψ record (config file only), e.g. a table.
    #[arg(skip)]
    pub psi_spec: Option<PsiSpec>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Points of the grid `t = (1 + t_max)^s - 1`, `s` uniform in `[0, 1]`.
    #[arg(long)]
    pub points: Option<usize>,
}

fn psi_of(tokens: &Option<Vec<String>>, spec: Option<&PsiSpec>, default: &str) -> Result<PsiSpec> {
    Ok(match (tokens, spec) {
        (Some(t), _) => grammar::psi(t)?,
        (None, Some(p)) => p.clone(),
        (None, None) => grammar::psi(&[default.to_string()])?,
    })
}

#[derive(Serialize)]
struct RateRow {
    t: f64,
    r: f64,
    r_lo: f64,
    r_hi: f64,
    residual: f64,
}

pub fn transform(a: &TransformArgs, _ctx: &Ctx) -> Result<Report> {
    let psi = psi_of(&a.psi, a.psi_spec.as_ref(), "reciprocal 1")?;
    let shape = Shape::new(a.m.unwrap_or(1), a.n.unwrap_or(1))?;
    let rate = RateFunction::new(psi.clone(), shape)?;
    let t_max = a.t_max.unwrap_or(50.0);
    let points = a.points.unwrap_or(100);
    if points < 2 || !(t_max > 0.0) {
        return Err(config_error("need at least 2 points and t_max > 0"));
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| (1.0 + t_max).powf(i as f64 / (points - 1) as f64) - 1.0)
        .collect();
    let mut table = Vec::with_capacity(points);
    let mut round_trip: f64 = 0.0;
    for &t in &grid {
        let r = rate.solve(t)?;
        let iv = rate.enclosure(t)?;
        let log_x = t - shape.n as f64 * r;
        // levels below the range of t - nR(t) have no preimage
        if let Ok(back) = log_psi_from_rate(|s| rate.solve(s).unwrap_or(f64::NAN), shape, log_x) {
            round_trip = round_trip.max((back - psi.log_at_f64(log_x)).abs());
        }
        table.push(RateRow { t, r, r_lo: iv.lo_f64(), r_hi: iv.hi_f64(), residual: rate.residual_f64(t, r) });
    }
    let max_residual = table.iter().map(|row| row.residual.abs()).fold(0.0, f64::max);
    let mut r = Report::default();
    r.put("table", &table, Status::CertifiedInterval)?;
    r.put("max_residual", max_residual, Status::Diagnostic)?;
    r.put("round_trip_residual", round_trip, Status::Diagnostic)?;
    // ψ = c/x has the constant rate log(1/c)/(m+n)
    let reciprocal_constant = match &psi {
        PsiSpec::Power { c, s } if s.to_f64() == 1.0 => Some(c.to_f64()),
        PsiSpec::FromHeight { kappa, height: HeightSpec::Constant { c } } => Some(kappa.to_f64() / c.to_f64()),
        _ => None,
    };
    if let Some(c) = reciprocal_constant {
        let expected = -c.ln() / shape.dim() as f64;
        let dev = table.iter().map(|row| (row.r - expected).abs()).fold(0.0, f64::max);
        r.put("constant_rate", json!({ "expected": expected, "max_deviation": dev }), Status::Diagnostic)?;
    }
    if let PsiSpec::FromHeight { height: HeightSpec::LogBeta { l, .. }, .. } = &psi {
        if shape.dim() == *l as usize + 1 {
            r.put("properties", rate_property_check(&rate, &grid)?, Status::Diagnostic)?;
        }
    }
    r.csv = Some(csv_of(&table)?);
    Ok(r)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct CorrespondArgs {
    #[arg(long, num_args = 1..)]
    pub alpha: Option<Vec<String>>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long, num_args = 1..)]
    pub psi: Option<Vec<String>>,
    /// Levels `T`, each an entry such as `10` or `rational 7/2`.
    #[arg(long = "T", num_args = 1..)]
    pub levels: Option<Vec<String>>,
    /// Run the seeded random suite with this many cases instead.
    #[arg(long)]
    pub suite: Option<usize>,
}

#[derive(Serialize)]
struct AgreementRow {
    case: String,
    dioph: bool,
    dynamic: bool,
    agree: bool,
}

pub fn correspond(a: &CorrespondArgs, ctx: &Ctx) -> Result<Report> {
    let mut r = Report::default();
    if let Some(count) = a.suite {
        let cases = correspondence_cases(ctx.seed, count);
        let rows = ctx.pool()?.install(|| {
            cases
                .par_iter()
                .map(|c| run_correspondence_case(c, &ctx.precision))
                .collect::<multapprox::error::Result<Vec<_>>>()
        })?;
        let suite = CorrespondenceSuite::from_rows(ctx.seed, cases, rows);
        r.csv = Some(csv_of(suite.rows.iter().map(|row| AgreementRow {
            case: row.id.to_string(),
            dioph: row.dioph,
            dynamic: row.dynamic,
            agree: row.agree,
        }))?);
        r.put("summary", json!({ "seed": suite.seed, "total": suite.rows.len(), "agreements": suite.agreements }), Status::Exact)?;
        r.put("rows", &suite.rows, Status::CertifiedInterval)?;
        return Ok(r);
    }
    let y = grammar::target(required(&a.alpha, "--alpha or --suite")?, a.rows, a.cols)?;
    let psi = psi_of(&a.psi, None, "reciprocal 1/4")?;
    let levels = a.levels.clone().unwrap_or_else(|| vec!["10".into()]);
    let mut reports = Vec::new();
    for t in &levels {
        let level = CertifiedReal::parse_entry(t)?;
        let rep = correspondence_check(&y, &psi, &level, &ctx.precision)?;
        reports.push((level.entry_string(), rep));
    }
    let agreements = reports.iter().filter(|(_, rep)| rep.dioph == rep.dynamic).count();
    r.csv = Some(csv_of(reports.iter().map(|(t, rep)| AgreementRow {
        case: t.clone(),
        dioph: rep.dioph,
        dynamic: rep.dynamic,
        agree: rep.dioph == rep.dynamic,
    }))?);
    let table: Vec<Value> = reports
        .iter()
        .map(|(t, rep)| Ok(json!({ "T": t, "report": serde_json::to_value(rep)? })))
        .collect::<Result<_>>()?;
    r.put("summary", json!({ "total": reports.len(), "agreements": agreements }), Status::Exact)?;
    r.put("table", table, Status::CertifiedInterval)?;
    Ok(r)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct CertifyArgs {
    #[arg(long, num_args = 1..)]
    pub alpha: Option<Vec<String>>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long, num_args = 1..)]
    pub psi: Option<Vec<String>>,
    /// Grid step of the flow times.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
}

pub fn certify(a: &CertifyArgs, ctx: &Ctx) -> Result<Report> {
    let alpha = a.alpha.clone().unwrap_or_else(|| vec![PHI.into()]);
    let y = grammar::target(&alpha, a.rows, a.cols)?;
    let psi = psi_of(&a.psi, None, "reciprocal 1/20")?;
    let cert = discrete_certificate(&y, &psi, a.beta.unwrap_or(1.0), a.t_max.unwrap_or(8.0), &ctx.precision)?;
    let mut r = Report::default();
    r.put("c_prime", &cert.c_prime, Status::Exact)?;
    r.put("certificate", &cert, Status::CertifiedInterval)?;
    Ok(r)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct MinimaArgs {
    /// JSON file `{"dim": d, "columns": [[entry, ...], ...]}`.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    #[arg(long)]
    pub identity: Option<usize>,
    /// Diagonal entries.
    #[arg(long, num_args = 1..)]
    pub diag: Option<Vec<String>>,
    /// Half-widths of a box for the Blichfeldt and counting checks.
    #[arg(long = "box", num_args = 1..)]
    pub half_widths: Option<Vec<String>>,
    /// Run the seeded random suite with this many bases instead.
    #[arg(long)]
    pub suite: Option<usize>,
}

#[derive(Serialize)]
struct GeometryCsvRow {
    id: usize,
    dim: usize,
    minkowski: bool,
    mahler: bool,
    mahler_sup_window: bool,
    mahler_polar: bool,
    blichfeldt: bool,
    blichfeldt_factorial: bool,
    counting: bool,
}

fn load_basis(a: &MinimaArgs, precision: &Precision) -> Result<LatticeBasis> {
    let sources = a.basis.is_some() as u8 + a.identity.is_some() as u8 + a.diag.is_some() as u8;
    if sources != 1 {
        return Err(config_error("give exactly one of --basis, --identity, --diag or --suite"));
    }
    if let Some(path) = &a.basis {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        return serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())));
    }
    if let Some(d) = a.identity {
        if d == 0 {
            return Err(config_error("dimension must be positive"));
        }
        return Ok(LatticeBasis::identity(d));
    }
    Ok(LatticeBasis::diagonal(grammar::entries(a.diag.as_ref().expect("counted above"))?, precision)?)
}

pub fn minima(a: &MinimaArgs, ctx: &Ctx) -> Result<Report> {
    let p = &ctx.precision;
    let mut r = Report::default();
    if let Some(count) = a.suite {
        let cases = basis_cases(ctx.seed, count, p)?;
        let rows = ctx.pool()?.install(|| {
            cases.par_iter().map(|c| run_geometry_case(c, p)).collect::<multapprox::error::Result<Vec<_>>>()
        })?;
        let suite = GeometrySuite::from_rows(ctx.seed, cases, rows);
        r.csv = Some(csv_of(suite.rows.iter().map(|row| GeometryCsvRow {
            id: row.id,
            dim: row.dim,
            minkowski: row.minkowski,
            mahler: row.mahler,
            mahler_sup_window: row.mahler_sup_window,
            mahler_polar: row.mahler_polar,
            blichfeldt: row.blichfeldt,
            blichfeldt_factorial: row.blichfeldt_factorial,
            counting: row.counting,
        }))?);
        r.put("summary", json!({ "seed": suite.seed, "total": suite.rows.len() }), Status::Exact)?;
        r.put("violations", &suite.violations, Status::CertifiedInterval)?;
        r.put("rows", &suite.rows, Status::CertifiedInterval)?;
        return Ok(r);
    }
    let basis = load_basis(a, p)?;
    let m = minima_with_wedges(&basis, p)?;
    let status = if m.deltas.iter().all(|d| d.exact().is_some()) { Status::Exact } else { Status::CertifiedInterval };
    r.put("minima", &m, status)?;
    r.put("minkowski", minkowski_from(&basis, &m, p)?, Status::CertifiedInterval)?;
    r.put("mahler", check_mahler(&basis, p)?, Status::CertifiedInterval)?;
    r.put("wedge_duality", check_wedge_duality(&basis, p)?, Status::CertifiedInterval)?;
    if let Some(hw) = &a.half_widths {
        let bx = Box::new(grammar::entries(hw)?, p)?;
        let d = basis.dim();
        // the inequality needs box points of full rank; a smaller box is not an error
        let blichfeldt = match check_blichfeldt(&basis, &bx, p) {
            Ok(rep) => serde_json::to_value(rep)?,
            Err(Error::RankDeficient(reason)) => json!({ "applicable": false, "reason": reason }),
            Err(e) => return Err(e.into()),
        };
        r.put("blichfeldt", blichfeldt, Status::Exact)?;
        r.put("counting", counting_bound(&basis, &bx, counting_constant(d), p)?, Status::Exact)?;
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Demo,
    Faithful,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct ConstructionArgs {
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long = "d")]
    pub d: Option<usize>,
    #[arg(long = "l")]
    pub l: Option<usize>,
    /// Indices paired with `b_2, …, b_l`; defaults to `2..=l`.
    #[arg(long = "S", num_args = 1..)]
    pub s: Option<Vec<usize>>,
    /// `α_2, …, α_d`; defaults to the golden ratio in every slot.
    #[arg(long, num_args = 1..)]
    pub alpha_tail: Option<Vec<String>>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long = "L")]
    pub length: Option<String>,
    #[arg(long = "K")]
    pub k_max: Option<usize>,
    /// Full parameter record (config file only); flags still override it.
    #[arg(skip)]
    pub params: Option<ConstructionParams>,
}

impl ConstructionArgs {
    fn to_params(&self, budget: Option<u64>) -> Result<ConstructionParams> {
        let tail = self.alpha_tail.as_deref().map(grammar::entries).transpose()?;
        let mut p = match &self.params {
            Some(p) => p.clone(),
            None => {
                let d = self.d.unwrap_or(2);
                let l = self.l.unwrap_or(1);
                let s = self.s.clone().unwrap_or_else(|| (2..=l).collect());
                let phi = CertifiedReal::parse_entry(PHI)?;
                let tail = tail.clone().unwrap_or_else(|| vec![phi; d.saturating_sub(1)]);
                match self.preset.unwrap_or(PresetArg::Demo) {
                    PresetArg::Demo => ConstructionParams::demo(d, l, s, tail),
                    PresetArg::Faithful => {
                        let beta = self.beta.as_deref().map(CertifiedReal::parse_entry).transpose()?;
                        ConstructionParams::faithful(d, l, s, tail, beta.unwrap_or_else(CertifiedReal::e))
                    }
                }
            }
        };
        if self.params.is_some() {
            if let Some(d) = self.d {
                p.d = d;
            }
            if let Some(l) = self.l {
                p.l = l;
            }
            if let Some(s) = &self.s {
                p.s = s.clone();
            }
            if let Some(t) = tail {
                p.alpha_tail = t;
            }
        }
        if let Some(b) = &self.beta {
            p.beta = CertifiedReal::parse_entry(b)?;
        }
        if let Some(k) = &self.kappa {
            p.kappa = CertifiedReal::parse_entry(k)?;
        }
        if let Some(len) = &self.length {
            p.length = CertifiedReal::parse_entry(len)?;
        }
        if let Some(k) = self.k_max {
            p.k_max = k;
        }
        if let Some(b) = budget {
            p.node_budget = b;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct CantorArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub construction: ConstructionArgs,
    /// Cap on the dual scan of the survivor certificate.
    #[arg(long)]
    pub dual_cap: Option<u64>,
    /// Only evaluate the parameter system.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub param_check_only: Option<bool>,
}

#[derive(Serialize)]
struct LevelSummary {
    k: usize,
    grid: u64,
    survivors: u64,
    removed: u64,
    runs: usize,
    dangerous: usize,
    nodes: u64,
    window: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct ParamCsvRow<'a> {
    name: &'a str,
    lhs_log: f64,
    rhs_log: f64,
    holds: bool,
}

fn param_rows(report: &multapprox::cantor::ParamReport) -> Result<String> {
    csv_of(report.rows.iter().chain(std::iter::once(&report.epsilon_row)).map(|row| ParamCsvRow {
        name: &row.name,
        lhs_log: row.lhs_log,
        rhs_log: row.rhs_log,
        holds: row.holds,
    }))
}

pub fn cantor(a: &CantorArgs, ctx: &Ctx) -> Result<Report> {
    let params = a.construction.to_params(ctx.budget)?;
    let mut r = Report::default();
    let checks = param_check(&params)?;
    r.put("params", &params, Status::Exact)?;
    if a.param_check_only.unwrap_or(false) {
        r.csv = Some(param_rows(&checks)?);
        r.put("param_check", &checks, Status::Diagnostic)?;
        return Ok(r);
    }
    let big_k = params.k_max;
    let mut c = Construction::new(params, ctx.precision)?;
    c.build(big_k)?;
    let levels: Vec<LevelSummary> = c
        .levels()
        .iter()
        .map(|lv| LevelSummary {
            k: lv.k,
            grid: lv.grid,
            survivors: lv.survivor_count(),
            removed: lv.removed_count(),
            runs: lv.survivors.len(),
            dangerous: lv.dangerous,
            nodes: lv.nodes,
            window: lv.window,
        })
        .collect();
    let characteristics = (0..=big_k).map(|k| c.local_characteristic(k)).collect::<multapprox::error::Result<Vec<_>>>()?;
    let dimension = match c.dimension_lower_bound(big_k) {
        Ok(v) => json!({ "value": v }),
        Err(e @ (Error::CharacteristicExceeded(_) | Error::InsufficientData(_))) => json!({ "value": null, "reason": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let survivor = c.survivor_point(big_k, a.dual_cap.unwrap_or(2000))?;
    r.csv = Some(c.trace_csv()?);
    r.put("levels", &levels, Status::Exact)?;
    r.put("characteristics", &characteristics, Status::Exact)?;
    r.put("dimension_lower_bound", dimension, Status::Diagnostic)?;
    r.put("survivor", &survivor, Status::CertifiedInterval)?;
    r.put("param_check", &checks, Status::Diagnostic)?;
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Dual,
    Sim,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct DiagBlocksArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub construction: ConstructionArgs,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// `t/β` per coordinate, `t₁` first; defaults to 3 in every slot.
    #[arg(long, num_args = 1..)]
    pub steps: Option<Vec<i64>>,
    /// Left end of the first block.
    #[arg(long)]
    pub start: Option<String>,
    /// Block length; defaults to `c₂ e^{-T+(l+1)R(t)}`.
    #[arg(long = "len")]
    pub block_len: Option<String>,
}

fn rational_arg(s: &str) -> Result<BigRational> {
    CertifiedReal::parse_entry(s)?
        .as_rational()
        .ok_or_else(|| config_error(format!("`{s}` is not rational")))
}

pub fn diag_blocks(a: &DiagBlocksArgs, ctx: &Ctx) -> Result<Report> {
    let mut params = a.construction.to_params(ctx.budget)?;
    if ctx.budget.is_none() {
        // every interval is kept here, unlike in the removal loop
        params.node_budget = params.node_budget.min(DIAG_BUDGET);
    }
    let l = params.l;
    let c = Construction::new(params, ctx.precision)?;
    let kind = match a.kind.unwrap_or(KindArg::Dual) {
        KindArg::Dual => Kind::Dual,
        KindArg::Sim => Kind::Simultaneous,
    };
    let t = TimeVector::new(a.steps.clone().unwrap_or_else(|| vec![3; l]));
    if t.steps.len() != l {
        return Err(config_error(format!("--steps needs {l} value(s)")));
    }
    let start = a.start.as_deref().map(rational_arg).transpose()?.unwrap_or_default();
    let len = match &a.block_len {
        Some(s) => rational_arg(s)?,
        None => c.block_length(kind, &t)?,
    };
    let block = c.block_multiplicity(kind, &t, &start, &len)?;
    let mut r = Report::default();
    r.put("block", json!({ "kind": kind, "t": t, "start": start.to_string(), "length": len.to_string() }), Status::Exact)?;
    r.put("multiplicity", &block, Status::Diagnostic)?;
    Ok(r)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
pub struct ParamCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub construction: ConstructionArgs,
}

pub fn param_check_cmd(a: &ParamCheckArgs, ctx: &Ctx) -> Result<Report> {
    let params = a.construction.to_params(ctx.budget)?;
    let checks = param_check(&params)?;
    let growth = (0..=params.k_max)
        .map(|k| growth_check(&params.beta, k, &ctx.precision))
        .collect::<multapprox::error::Result<Vec<_>>>()?;
    let mut r = Report::default();
    r.csv = Some(param_rows(&checks)?);
    r.put("params", &params, Status::Exact)?;
    r.put("param_check", &checks, Status::Diagnostic)?;
    r.put("growth", &growth, Status::Diagnostic)?;
    Ok(r)
}
