use proptest::prelude::*;

use multapprox::approx::{PsiSpec, TargetVector};
use multapprox::dani::{correspondence_check, flow_minimum, rate_property_check, unipotent_lattice, FlowVector, RateFunction, Shape};
use multapprox::geometry::first_minimum;
use multapprox::real::{CertifiedReal, Precision};

fn shape() -> impl Strategy<Value = Shape> {
    (1usize..=3, 1usize..=3).prop_map(|(m, n)| Shape::new(m, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // ψ(x) = c·x^{-s} gives R(t) = ((s-1)t - log c)/(m + sn) in closed form
    #[test]
    fn power_rate_has_closed_form(sh in shape(), c_num in 1i64..10, s_num in 1i64..12, t in 0.0f64..60.0) {
        let (c, s) = (c_num as f64 / 10.0, s_num as f64 / 4.0);
        let psi = PsiSpec::power(CertifiedReal::ratio(c_num, 10), CertifiedReal::ratio(s_num, 4));
        let rate = RateFunction::new(psi, sh).unwrap();
        let expected = ((s - 1.0) * t - c.ln()) / (sh.m as f64 + s * sh.n as f64);
        let r = rate.solve(t).unwrap();
        prop_assert!((r - expected).abs() < 1e-9 * (1.0 + expected.abs()), "{} vs {}", r, expected);
        let iv = rate.enclosure(t).unwrap();
        prop_assert!(iv.lo_f64() <= expected + 1e-12 && expected - 1e-12 <= iv.hi_f64());
    }

    #[test]
    fn level_time_inverts_the_rate(sh in shape(), log_level in 0.5f64..20.0) {
        let rate = RateFunction::new(PsiSpec::reciprocal(CertifiedReal::ratio(1, 4)), sh).unwrap();
        let t = rate.time_for_level(log_level).unwrap();
        let back = t - sh.n as f64 * rate.solve(t).unwrap();
        prop_assert!((back - log_level).abs() < 1e-8);
    }

    #[test]
    fn zero_flow_minimum_is_the_lattice_minimum(
        nums in prop::collection::vec(-9i64..9, 2),
        dens in prop::collection::vec(1i64..8, 2),
        column in any::<bool>(),
    ) {
        let entries: Vec<CertifiedReal> = nums.iter().zip(&dens).map(|(&n, &d)| CertifiedReal::ratio(n, d)).collect();
        let y = if column { TargetVector::column(entries) } else { TargetVector::linear_form(entries) }.unwrap();
        let p = Precision::default();
        let shape = Shape::new(y.rows(), y.cols()).unwrap();
        let fm = flow_minimum(&y, &FlowVector::zero(shape), &p).unwrap();
        let (delta, _) = first_minimum(&unipotent_lattice(&y).unwrap(), &p).unwrap();
        let log_delta = delta.to_f64().ln();
        prop_assert!(fm.log_delta.0 - 1e-12 <= log_delta && log_delta <= fm.log_delta.1 + 1e-12);
    }
}

#[test]
fn kappa_psi_rate_properties() {
    for (l, m, n) in [(1, 1, 1), (2, 2, 1), (2, 1, 2), (3, 3, 1)] {
        let psi = PsiSpec::kappa_psi(l, CertifiedReal::e(), CertifiedReal::parse_expr("exp(-3)").unwrap());
        let rate = RateFunction::new(psi, Shape::new(m, n).unwrap()).unwrap();
        let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
        let report = rate_property_check(&rate, &grid).unwrap();
        assert!(report.identity_residual < 1e-9, "l={l}: {report:?}");
        assert!(report.r_non_decreasing && report.envelope_holds, "l={l}: {report:?}");
        assert!(report.lower_flow_increasing && report.upper_flow_non_decreasing, "l={l}: {report:?}");
    }
}

#[test]
fn zero_target_is_approximable_on_both_sides() {
    let y = TargetVector::column(vec![CertifiedReal::from_int(0)]).unwrap();
    let psi = PsiSpec::reciprocal(CertifiedReal::ratio(1, 4));
    let report = correspondence_check(&y, &psi, &CertifiedReal::from_int(10), &Precision::default()).unwrap();
    assert!(report.dioph);
    assert!(report.dynamic);
    assert_eq!(report.dioph_q, Some(vec![1]));
}
