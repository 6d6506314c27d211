//! Token grammars for targets, heights and ψ on the command line.

use multapprox::approx::{HeightSpec, PsiSpec, TargetVector};
use multapprox::error::{Error, Result};
use multapprox::real::CertifiedReal;

fn words(tokens: &[String]) -> Vec<&str> {
    tokens.iter().flat_map(|t| t.split_whitespace()).collect()
}

/// Splits `quad 1 1 2 5 rational 1/3 sqrt(2)` into entries. `rational` and
/// `dec` take one word, `quad` four; anything else is a one-word expression.
pub fn entries(tokens: &[String]) -> Result<Vec<CertifiedReal>> {
    let ws = words(tokens);
    let mut out = Vec::new();
    let mut i = 0;
    while i < ws.len() {
        let arity = match ws[i] {
            "rational" | "dec" => 1,
            "quad" => 4,
            _ => 0,
        };
        if i + arity >= ws.len() && arity > 0 {
            return Err(Error::Parse(format!("`{}` needs {arity} argument(s)", ws[i])));
        }
        out.push(CertifiedReal::parse_entry(&ws[i..=i + arity].join(" "))?);
        i += arity + 1;
    }
    if out.is_empty() {
        return Err(Error::Parse("no entries given".into()));
    }
    Ok(out)
}

/// Column `d×1` by default, or `rows×cols` when either is given.
pub fn target(tokens: &[String], rows: Option<usize>, cols: Option<usize>) -> Result<TargetVector> {
    let e = entries(tokens)?;
    let n = e.len();
    let (r, c) = match (rows, cols) {
        (None, None) => (n, 1),
        (Some(r), None) => (r, n / r.max(1)),
        (None, Some(c)) => (n / c.max(1), c),
        (Some(r), Some(c)) => (r, c),
    };
    if r * c != n {
        return Err(Error::Invalid(format!("{n} entries do not fill a {r}x{c} target")));
    }
    TargetVector::new(e, r, c)
}

fn uint(w: &str) -> Result<u32> {
    w.parse().map_err(|_| Error::Parse(format!("expected a non-negative integer, got `{w}`")))
}

/// `const [c]`, `log <l>`, `log-beta <l> <beta>` or `power-log <k>`.
pub fn height(tokens: &[String]) -> Result<HeightSpec> {
    match words(tokens).as_slice() {
        ["const"] => Ok(HeightSpec::constant_one()),
        ["const", c] => Ok(HeightSpec::Constant { c: CertifiedReal::parse_entry(c)? }),
        ["log", l] => Ok(HeightSpec::Log { l: uint(l)? }),
        ["log-beta", l, beta] => Ok(HeightSpec::LogBeta { l: uint(l)?, beta: CertifiedReal::parse_entry(beta)? }),
        ["power-log", k] => Ok(HeightSpec::PowerLog { k: uint(k)? }),
        other => Err(Error::Parse(format!("unknown height `{}`", other.join(" ")))),
    }
}

/// `reciprocal <c>`, `power <c> <s>` or `kappa <l> <beta> <kappa>`.
pub fn psi(tokens: &[String]) -> Result<PsiSpec> {
    match words(tokens).as_slice() {
        ["reciprocal", c] => Ok(PsiSpec::reciprocal(CertifiedReal::parse_entry(c)?)),
        ["power", c, s] => Ok(PsiSpec::power(CertifiedReal::parse_entry(c)?, CertifiedReal::parse_entry(s)?)),
        ["kappa", l, beta, kappa] => {
            Ok(PsiSpec::kappa_psi(uint(l)?, CertifiedReal::parse_entry(beta)?, CertifiedReal::parse_entry(kappa)?))
        }
        other => Err(Error::Parse(format!("unknown psi `{}`", other.join(" ")))),
    }
}
