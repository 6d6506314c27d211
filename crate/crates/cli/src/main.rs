mod commands;
mod config;
mod grammar;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use multapprox::error::Error;
use multapprox::real::Precision;
use multapprox::suites::DEFAULT_SEED;

use commands::{Ctx, Report, Status};
use config::{config_error, merge, ConfigError, Format, RunConfig};

#[derive(Parser)]
#[command(name = "multapprox", version, about = "Multiplicative Diophantine approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    globals: Globals,
}

#[derive(Args)]
struct Globals {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the randomized suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for suites and sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Node budget of the removal procedure.
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Drop timings so re-runs are byte-identical.
    #[arg(long, global = true)]
    normalized: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum of the multiplicative defect over a range of q.
    #[command(allow_negative_numbers = true)]
    Scan(commands::ScanArgs),
    /// Reciprocal sums over growing boxes with a growth fit.
    #[command(allow_negative_numbers = true)]
    Sums(commands::SumsArgs),
    /// Rate function R(t) of ψ on a grid.
    #[command(allow_negative_numbers = true)]
    Transform(commands::TransformArgs),
    /// Approximation verdict against the flow verdict.
    #[command(allow_negative_numbers = true)]
    Correspond(commands::CorrespondArgs),
    /// Discrete certificate along the cone grid.
    #[command(allow_negative_numbers = true)]
    Certify(commands::CertifyArgs),
    /// Successive minima and the geometry-of-numbers checks.
    #[command(allow_negative_numbers = true)]
    Minima(commands::MinimaArgs),
    /// Interval removal up to level K with a survivor certificate.
    #[command(allow_negative_numbers = true)]
    Cantor(commands::CantorArgs),
    /// Block multiplicity of dangerous intervals at one time vector.
    #[command(allow_negative_numbers = true)]
    DiagBlocks(commands::DiagBlocksArgs),
    /// Parameter system verdicts for a construction.
    #[command(allow_negative_numbers = true)]
    ParamCheck(commands::ParamCheckArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Scan(_) => "scan",
            Command::Sums(_) => "sums",
            Command::Transform(_) => "transform",
            Command::Correspond(_) => "correspond",
            Command::Certify(_) => "certify",
            Command::Minima(_) => "minima",
            Command::Cantor(_) => "cantor",
            Command::DiagBlocks(_) => "diag-blocks",
            Command::ParamCheck(_) => "param-check",
        }
    }
}

#[derive(Serialize)]
struct Timings {
    total_ms: f64,
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    version: &'a str,
    inputs: Value,
    outputs: Map<String, Value>,
    certification: BTreeMap<String, Status>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

fn dispatch<T>(flags: &T, section: Option<&Value>, ctx: &Ctx, f: fn(&T, &Ctx) -> Result<Report>) -> Result<(Value, Report)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let args = merge(flags, section)?;
    let report = f(&args, ctx)?;
    let Value::Object(mut inputs) = serde_json::to_value(&args)? else {
        unreachable!("argument records serialize to objects");
    };
    inputs.retain(|_, v| !v.is_null());
    inputs.insert("seed".into(), ctx.seed.into());
    inputs.insert("precision_cap".into(), ctx.precision.cap().into());
    Ok((Value::Object(inputs), report))
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.globals.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let g = &cli.globals;
    let ctx = Ctx {
        seed: g.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        threads: g.threads.or(file.threads),
        budget: g.budget.or(file.budget),
        format: g.format.or(file.format).unwrap_or_default(),
        precision: Precision::from_env(),
    };
    if ctx.threads == Some(0) {
        return Err(config_error("--threads must be positive"));
    }
    let normalized = g.normalized || file.normalized.unwrap_or(false);
    let output = g.output.clone().or(file.output.clone());
    let name = cli.command.name();
    let section = file.section(name);

    let start = Instant::now();
    let (inputs, report) = match &cli.command {
        Command::Scan(a) => dispatch(a, section, &ctx, commands::scan),
        Command::Sums(a) => dispatch(a, section, &ctx, commands::sums),
        Command::Transform(a) => dispatch(a, section, &ctx, commands::transform),
        Command::Correspond(a) => dispatch(a, section, &ctx, commands::correspond),
        Command::Certify(a) => dispatch(a, section, &ctx, commands::certify),
        Command::Minima(a) => dispatch(a, section, &ctx, commands::minima),
        Command::Cantor(a) => dispatch(a, section, &ctx, commands::cantor),
        Command::DiagBlocks(a) => dispatch(a, section, &ctx, commands::diag_blocks),
        Command::ParamCheck(a) => dispatch(a, section, &ctx, commands::param_check_cmd),
    }?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;

    let text = match ctx.format {
        Format::Csv => report.csv.ok_or_else(|| config_error(format!("`{name}` has no CSV output in this mode")))?,
        Format::Json => {
            let env = Envelope {
                command: name,
                version: env!("CARGO_PKG_VERSION"),
                inputs,
                outputs: report.outputs,
                certification: report.certification,
                timings: (!normalized).then_some(Timings { total_ms: elapsed }),
            };
            serde_json::to_string_pretty(&env)? + "\n"
        }
    };
    match output {
        Some(path) => std::fs::write(&path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() || e.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Invalid(_) | Error::OutOfDomain(_) | Error::DegenerateTarget(_) | Error::ConventionViolation(_)) => 2,
        Some(Error::PrecisionExhausted { .. } | Error::Indeterminate | Error::BracketFailure(_)) => 3,
        Some(Error::Extinction { .. }) => 4,
        Some(Error::BudgetExceeded(_)) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
