use proptest::prelude::*;

use multapprox::cantor::{Construction, ConstructionParams, Kind, Rounding};
use multapprox::real::{CertifiedReal, Precision};
use multapprox::suites::dangerous_specs;

fn construction(l: usize) -> Construction {
    let s = if l == 1 { vec![] } else { vec![2] };
    let x = CertifiedReal::parse_entry("quad 1 1 2 5").unwrap();
    Construction::new(ConstructionParams::demo(2, l, s, vec![x]), Precision::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn inner_rounding_sits_inside_outer(seed in any::<u64>(), l in 1usize..=2) {
        let c = construction(l);
        for spec in dangerous_specs(&c, seed, 6).unwrap() {
            let outer = c.dangerous(&spec, Rounding::Outer).unwrap().expect("suite specs have a nonempty outer interval");
            if let Some(inner) = c.dangerous(&spec, Rounding::Inner).unwrap() {
                prop_assert!(outer.lo <= inner.lo && inner.hi <= outer.hi, "{:?}", spec);
            }
            if l == 1 && spec.kind == Kind::Dual {
                prop_assert!(c.swap_identity(&spec).unwrap());
            }
        }
    }
}
