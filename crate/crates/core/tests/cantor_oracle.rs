//! The removal procedure for `l = 1` against a from-scratch enumeration,
//! plus frozen values of the demo runs.

use std::collections::BTreeSet;
use std::f64::consts::E;

use num_rational::BigRational;

use multapprox::cantor::{schedule, Construction, ConstructionParams, Rounding};
use multapprox::real::{CertifiedReal, Precision};

fn phi() -> CertifiedReal {
    CertifiedReal::parse_entry("quad 1 1 2 5").unwrap()
}

fn demo(l: usize, s: Vec<usize>) -> Construction {
    Construction::new(ConstructionParams::demo(2, l, s, vec![phi()]), Precision::default()).unwrap()
}

/// `R*(t)` for `l = 1` from `2R = -log κ + log h₁(max{e^{t-R}, e^β})`.
fn rate_l1(t: f64, log_kappa: f64, beta: f64) -> f64 {
    // h₁(max{e^y, e^β}) = log max{y, β, e}
    let h = |y: f64| y.max(beta).max(E).ln();
    let g = |r: f64| 2.0 * r + log_kappa - h(t - r).ln();
    let (mut lo, mut hi) = (-10.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Grid pieces of level `k` touched by every dual danger with `T` in the
/// level window, enumerated over all `(s, b₀, b₁)`.
fn removed_oracle(k: usize, l_kappa: f64) -> BTreeSet<u64> {
    let beta = E;
    let length = 16.0;
    let f = |j: usize| -> f64 {
        (0..=j).map(|i| if i < 2 { 1.0 } else { (beta.exp() * i as f64 * (i as f64).ln()).ceil() }).product()
    };
    let grid = f(k - 1);
    let h = length / grid;
    let (lo_t, hi_t) = ((f(k - 2) / length).ln(), (f(k - 1) / length).ln());
    let mut out = BTreeSet::new();
    for s in 0i64.. {
        let t = beta * s as f64;
        if 2.0 * t >= hi_t {
            break;
        }
        if 2.0 * t < lo_t {
            continue;
        }
        let r = rate_l1(t, l_kappa, beta);
        if t < r {
            continue;
        }
        let gate = (t - r).exp();
        let eps = (-t - r).exp();
        let top = gate.ceil() as i64 - 1;
        for b1 in (-top..=top).filter(|&b| b != 0) {
            let reach = (length as i64 + 2) * b1.abs();
            for b0 in -reach..=reach {
                let center = -(b0 as f64) / b1 as f64;
                let radius = eps / b1.abs() as f64;
                let (a, b) = ((center - radius).max(0.0), (center + radius).min(length));
                if a > b {
                    continue;
                }
                let first = ((a / h).ceil() as i64 - 1).max(0);
                let last = ((b / h).floor() as i64).min(grid as i64 - 1);
                for j in first..=last {
                    let (pa, pb) = (j as f64 * h, (j + 1) as f64 * h);
                    if pb >= a && pa <= b {
                        out.insert(j as u64);
                    }
                }
            }
        }
    }
    out
}

fn removed_set(c: &Construction, k: usize) -> BTreeSet<u64> {
    c.levels()[k].removed.iter().flat_map(|&(a, b)| a..b).collect()
}

#[test]
fn schedule_matches_closed_form() {
    let beta = CertifiedReal::e();
    let p = Precision::default();
    let rates: Vec<u64> = (0..7).map(|k| schedule(&beta, k, &p).unwrap().0).collect();
    assert_eq!(rates, [1, 1, 22, 50, 85, 122, 163]);
    assert_eq!(schedule(&beta, 5, &p).unwrap().1, 11_407_000.into());
}

#[test]
fn level_removals_match_enumeration() {
    let mut c = demo(1, vec![]);
    c.build(6).unwrap();
    let l_kappa = -3.0 * E;
    for k in 1..=6 {
        let got = removed_set(&c, k);
        let expected = if k < 3 { BTreeSet::new() } else { removed_oracle(k, l_kappa) };
        assert_eq!(got, expected, "level {k}");
    }
    assert_eq!(removed_set(&c, 6).len(), 3720);
}

#[test]
fn larger_kappa_removes_a_superset() {
    let mut small = demo(1, vec![]);
    small.build(6).unwrap();
    let mut params = ConstructionParams::demo(2, 1, vec![], vec![phi()]);
    params.kappa = CertifiedReal::parse_expr("exp(-3*e + 1/2)").unwrap();
    let mut big = Construction::new(params, Precision::default()).unwrap();
    big.build(6).unwrap();
    let (a, b) = (removed_set(&small, 6), removed_set(&big, 6));
    assert!(a.is_subset(&b));
    assert!(b.len() > a.len());
    let (da, db) = (small.local_characteristic(6).unwrap(), big.local_characteristic(6).unwrap());
    assert!(da.value_f64 <= db.value_f64);
}

#[test]
fn survivors_avoid_every_recorded_danger() {
    let mut c = demo(1, vec![]);
    c.build(6).unwrap();
    let level = &c.levels()[6];
    let grid = level.grid;
    let length = c.length().clone();
    for removal in &level.provenance {
        let inner = c.dangerous(&removal.spec, Rounding::Inner).unwrap();
        let Some(inner) = inner else { continue };
        // the piece holding the inner midpoint must be gone
        let mid = (&inner.lo + &inner.hi) / BigRational::from_integer(2.into());
        let j = (mid * BigRational::from_integer(grid.into()) / &length).floor().to_integer();
        let j: u64 = j.try_into().unwrap();
        let j = j.min(grid - 1);
        assert!(level.survivors.iter().all(|&(a, b)| j < a || j >= b), "{:?}", removal.spec);
    }
    assert!(!level.provenance.is_empty());
}

#[test]
fn golden_demo_l1() {
    let mut c = demo(1, vec![]);
    c.build(6).unwrap();
    let last = &c.levels()[6];
    assert_eq!(last.survivor_count(), 11_403_280);
    let delta = c.local_characteristic(6).unwrap();
    assert_eq!(delta.value, "856/5185");
    assert_eq!(delta.p, 4);
    for k in 1..6 {
        assert_eq!(c.local_characteristic(k).unwrap().value, "0");
    }
    let dim = c.dimension_lower_bound(6).unwrap();
    assert!((dim - (1.0 - 2f64.ln() / 22f64.ln())).abs() < 1e-12);
    let s = c.survivor_point(6, 2000).unwrap();
    assert_eq!(s.x, "107/1425875");
    let cert = s.certificate.unwrap();
    assert_eq!(cert.q_max, 712_937);
    assert!(cert.positive);
    // q = 1 attains the minimum: ‖x‖·h₁(1) = x·log log⁺ e = x
    assert!((cert.kappa_prime - 107.0 / 1_425_875.0).abs() < 1e-12);
    let csv = c.trace_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,r,length,intervals,removed,delta,t_lo,t_hi"));
    assert_eq!(lines.count(), 7);
}

#[test]
fn golden_demo_l2() {
    let mut c = demo(2, vec![2]);
    c.build(6).unwrap();
    assert!(c.levels().iter().all(|lv| lv.removed.is_empty()));
    let s = c.survivor_point(6, 2000).unwrap();
    assert_eq!(s.x, "1/1425875");
    assert!(s.certificate.unwrap().positive);
}
