use std::cmp::Ordering;

use proptest::prelude::*;

use multapprox::geometry::{
    check_mahler, check_minkowski, check_wedge_duality, count_points, dual_basis, first_minimum, rational_basis,
    same_lattice, successive_minima, Box, LatticeBasis,
};
use multapprox::real::{CertifiedReal, Precision};

type Rows = Vec<Vec<(i64, i64)>>;

fn rows(max_dim: usize) -> impl Strategy<Value = Rows> {
    (1..=max_dim).prop_flat_map(|d| prop::collection::vec(prop::collection::vec((-6i64..=6, 1i64..=4), d), d))
}

fn basis(rows: &Rows) -> Option<LatticeBasis> {
    let b = rational_basis(rows, &Precision::default()).ok()?;
    (b.det().to_f64().abs() > 1e-9).then_some(b)
}

fn inverse_f64(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().copied().chain((0..d).map(|j| if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for c in 0..d {
        let p = (c..d).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..d {
            if r != c {
                let f = a[r][c];
                let pivot_row = a[c].clone();
                a[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    a.into_iter().map(|r| r[d..].to_vec()).collect()
}

/// Closed and open counts by enumerating coefficient vectors, in integers
/// scaled by 12 (all denominators divide 4 and half-widths are quarters).
fn naive_count(rows: &Rows, quarters: &[i64]) -> (u64, u64) {
    let d = rows.len();
    let scaled: Vec<Vec<i64>> = rows.iter().map(|r| r.iter().map(|&(n, den)| n * 12 / den).collect()).collect();
    let inv = inverse_f64(&rows.iter().map(|r| r.iter().map(|&(n, den)| n as f64 / den as f64).collect()).collect::<Vec<_>>());
    let reach: Vec<i64> = inv
        .iter()
        .map(|r| r.iter().zip(quarters).map(|(a, &w)| a.abs() * w as f64 / 4.0).sum::<f64>().ceil() as i64 + 1)
        .collect();
    let (mut closed, mut open) = (0, 0);
    let mut c: Vec<i64> = reach.iter().map(|r| -r).collect();
    loop {
        let x: Vec<i64> = scaled.iter().map(|r| r.iter().zip(&c).map(|(a, b)| a * b).sum()).collect();
        if x.iter().zip(quarters).all(|(v, &w)| v.abs() <= 3 * w) {
            closed += 1;
        }
        if x.iter().zip(quarters).all(|(v, &w)| v.abs() < 3 * w) {
            open += 1;
        }
        let mut i = 0;
        while i < d {
            c[i] += 1;
            if c[i] <= reach[i] {
                break;
            }
            c[i] = -reach[i];
            i += 1;
        }
        if i == d {
            return (closed, open);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn first_minimum_is_the_first_successive_minimum(r in rows(4)) {
        let Some(b) = basis(&r) else { return Ok(()) };
        let p = Precision::default();
        let (delta, w) = first_minimum(&b, &p).unwrap();
        let m = successive_minima(&b, &p).unwrap();
        prop_assert_eq!(delta.cmp(&m.deltas[0], &p).unwrap(), Ordering::Equal);
        prop_assert!(w.iter().any(|&c| c != 0));
        let ds = m.deltas_f64();
        prop_assert!(ds.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)));
    }

    #[test]
    fn minkowski_and_polar_mahler_hold(r in rows(3)) {
        let Some(b) = basis(&r) else { return Ok(()) };
        let p = Precision::default();
        let mk = check_minkowski(&b, &p).unwrap();
        prop_assert!(mk.lower_holds && mk.upper_holds, "{:?}", mk);
        let mh = check_mahler(&b, &p).unwrap();
        prop_assert!(mh.polar_holds, "{:?}", mh);
        prop_assert!(check_wedge_duality(&b, &p).unwrap().upper_holds);
    }

    #[test]
    fn dual_of_dual_is_the_lattice(r in rows(3)) {
        let Some(b) = basis(&r) else { return Ok(()) };
        let p = Precision::default();
        let back = dual_basis(&dual_basis(&b, &p).unwrap(), &p).unwrap();
        prop_assert!(same_lattice(&b, &back, &p).unwrap());
    }

    #[test]
    fn minima_scale_linearly(r in rows(3), num in 1i64..5, den in 1i64..5) {
        let Some(b) = basis(&r) else { return Ok(()) };
        let p = Precision::default();
        let scaled_rows: Rows = r.iter().map(|row| row.iter().map(|&(n, d)| (n * num, d * den)).collect()).collect();
        let c = basis(&scaled_rows).unwrap();
        let factor = CertifiedReal::ratio(num, den);
        let (m, mc) = (successive_minima(&b, &p).unwrap(), successive_minima(&c, &p).unwrap());
        for (x, y) in m.deltas.iter().zip(&mc.deltas) {
            prop_assert_eq!(x.mul(&factor).cmp(y, &p).unwrap(), Ordering::Equal);
        }
    }

    #[test]
    fn point_counts_match_enumeration(r in rows(3), widths in prop::collection::vec(1i64..12, 3)) {
        let Some(b) = basis(&r) else { return Ok(()) };
        let p = Precision::default();
        let quarters = &widths[..r.len()];
        let bx = Box::new(quarters.iter().map(|&w| CertifiedReal::ratio(w, 4)).collect(), &p).unwrap();
        let got = count_points(&b, &bx, &p).unwrap();
        let (closed, open) = naive_count(&r, quarters);
        prop_assert_eq!((got.count, got.open_count), (closed, open));
    }
}

#[test]
fn identity_and_diagonal_minima() {
    let p = Precision::default();
    let m = successive_minima(&LatticeBasis::identity(3), &p).unwrap();
    assert_eq!(m.deltas_f64(), [1.0, 1.0, 1.0]);
    let diag = LatticeBasis::diagonal(vec![CertifiedReal::from_int(2), CertifiedReal::ratio(1, 2)], &p).unwrap();
    let m = successive_minima(&diag, &p).unwrap();
    assert_eq!(m.deltas_f64(), [0.5, 2.0]);
    assert_eq!(m.witnesses, [vec![0, 1], vec![1, 0]]);
}
