use std::cmp::Ordering;

use proptest::prelude::*;

use multapprox::approx::{
    is_mult_approximable, mad_defect, mad_star_defect, recip_sum, HeightSpec, PsiSpec, QStar, TargetVector,
};
use multapprox::real::{CertifiedReal, Precision, Surd};

fn quad(a: i64, b: i64, c: i64, d: i64) -> CertifiedReal {
    CertifiedReal::from_surd(Surd::quad(a.into(), b.into(), c.into(), d.into()).unwrap())
}

fn exact(x: &CertifiedReal) -> Surd {
    x.exact().unwrap().clone()
}

/// Quadratic irrationals `(a + b√D)/c` with `D` not a square.
fn irrational() -> impl Strategy<Value = CertifiedReal> {
    (-20i64..20, 1i64..6, 1i64..9, prop::sample::select(vec![2i64, 3, 5, 6, 7, 10, 11, 13]))
        .prop_map(|(a, b, c, d)| quad(a, b, c, d))
}

fn brute_defect(alpha: f64, h: impl Fn(f64) -> f64, q_max: u64) -> (f64, u64) {
    let mut best = (f64::INFINITY, 0);
    for q in 1..=q_max {
        let v = q as f64 * alpha;
        let val = q as f64 * h(q as f64) * (v - v.round()).abs();
        if val < best.0 {
            best = (val, q);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_even_and_periodic(x in irrational(), k in -50i64..50) {
        let d = exact(&x.dist_to_z());
        let shifted = exact(&x.add(&CertifiedReal::from_int(k)).dist_to_z());
        let negated = exact(&x.neg().dist_to_z());
        prop_assert_eq!(d.cmp_exact(&shifted), Ordering::Equal);
        prop_assert_eq!(d.cmp_exact(&negated), Ordering::Equal);
        prop_assert!(d.signum() > 0);
        prop_assert!(d.cmp_exact(&Surd::from_rational(num_rational::BigRational::new(1.into(), 2.into()))) == Ordering::Less);
    }

    #[test]
    fn scan_matches_brute_force(x in irrational(), q_max in 1u64..400) {
        let y = TargetVector::column(vec![x.clone()]).unwrap();
        let rec = mad_defect(&y, &HeightSpec::constant_one(), q_max, false, &Precision::default()).unwrap();
        let (best, q) = brute_defect(x.to_f64(), |_| 1.0, q_max);
        prop_assert!((rec.value_f64() - best).abs() <= 1e-9 * (1.0 + best));
        if let QStar::Scalar(qs) = rec.q_star {
            // ties are broken towards the smaller q
            prop_assert!(qs as u64 <= q || (rec.value_f64() - best).abs() <= 1e-9 * best);
        } else {
            prop_assert!(false, "scalar scan returned a vector argmin");
        }
    }

    #[test]
    fn scan_is_monotone_in_range(x in irrational(), a in 1u64..200, extra in 0u64..200) {
        let y = TargetVector::column(vec![x]).unwrap();
        let h = HeightSpec::Log { l: 1 };
        let p = Precision::default();
        let short = mad_defect(&y, &h, a, false, &p).unwrap();
        let long = mad_defect(&y, &h, a + extra, false, &p).unwrap();
        prop_assert!(long.value_lo <= short.value_hi);
    }

    #[test]
    fn integer_shift_and_sign_leave_defect_unchanged(x in irrational(), k in -5i64..5) {
        let p = Precision::default();
        let h = HeightSpec::Log { l: 2 };
        let base = mad_defect(&TargetVector::column(vec![x.clone()]).unwrap(), &h, 150, false, &p).unwrap();
        let moved = mad_defect(&TargetVector::column(vec![x.neg().add(&CertifiedReal::from_int(k))]).unwrap(), &h, 150, false, &p).unwrap();
        prop_assert!((base.value_f64() - moved.value_f64()).abs() <= 1e-12 * (1.0 + base.value_f64()));
        prop_assert_eq!(base.q_star, moved.q_star);
    }

    #[test]
    fn dual_and_simultaneous_agree_in_one_variable(x in irrational(), cap in 1u64..300) {
        let p = Precision::default();
        let h = HeightSpec::constant_one();
        let sim = mad_defect(&TargetVector::column(vec![x.clone()]).unwrap(), &h, cap, false, &p).unwrap();
        let dual = mad_star_defect(&TargetVector::linear_form(vec![x]).unwrap(), &h, cap, false, &p).unwrap();
        prop_assert!(dual.value_lo <= sim.value_hi + 1e-12);
        prop_assert!((dual.value_f64() - sim.value_f64()).abs() <= 1e-9 * (1.0 + sim.value_f64()));
    }

    #[test]
    fn reciprocal_sums_grow(x in irrational(), q in 1u64..300, extra in 1u64..100) {
        let y = TargetVector::column(vec![x]).unwrap();
        let p = Precision::default();
        let a = recip_sum(&y, &[q as f64], &p).unwrap();
        let b = recip_sum(&y, &[(q + extra) as f64], &p).unwrap();
        prop_assert!(a.hi_f64() < b.lo_f64());
        // every term is at least 1/‖·‖ >= 2, over 2q nonzero q
        prop_assert!(a.lo_f64() >= 4.0 * q as f64 * (1.0 - 1e-12));
    }

    #[test]
    fn membership_matches_exhaustive_search(
        nums in prop::collection::vec(-12i64..12, 2),
        dens in prop::collection::vec(1i64..7, 2),
        level in 2i64..40,
    ) {
        let entries: Vec<CertifiedReal> = nums.iter().zip(&dens).map(|(&n, &d)| CertifiedReal::ratio(n, d)).collect();
        let y = TargetVector::linear_form(entries).unwrap();
        let psi = PsiSpec::reciprocal(CertifiedReal::ratio(1, 3));
        let got = is_mult_approximable(&y, &psi, &CertifiedReal::from_int(level), &Precision::default()).unwrap();
        // ‖(n₁/d₁)q₁ + (n₂/d₂)q₂‖ with common denominator d₁d₂; ψ(T) = 1/(3T)
        let den = dens[0] * dens[1];
        let mut expected = false;
        for q1 in -(level - 1)..level {
            for q2 in -(level - 1)..level {
                let pi: i64 = [q1, q2].iter().filter(|&&v| v != 0).map(|v| v.abs()).product();
                if (q1, q2) == (0, 0) || pi >= level {
                    continue;
                }
                let r = (nums[0] * dens[1] * q1 + nums[1] * dens[0] * q2).rem_euclid(den);
                if 3 * level * r.min(den - r) < den {
                    expected = true;
                }
            }
        }
        prop_assert_eq!(got.member, expected);
        if let Some(w) = got.witness {
            let pi: i64 = w.q.iter().filter(|&&v| v != 0).map(|v| v.abs()).product();
            prop_assert!(pi < level);
        }
    }
}

#[test]
fn height_families_are_at_least_one() {
    for q in [1.0, 2.0, 10.0, 1e3, 1e6] {
        for h in [HeightSpec::Log { l: 1 }, HeightSpec::Log { l: 3 }, HeightSpec::PowerLog { k: 2 }] {
            assert!(h.log_at_f64(q) >= 0.0, "{h:?} at {q}");
        }
    }
}
