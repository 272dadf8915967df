use condnorm::basis::{fourier_terms, BasisSpec, KnotPlacement, SmoothBasis};
use proptest::prelude::*;

/// Composite Simpson quadrature of `f_i'' f_j''` with 10^4 points spread over
/// the knot spans, so no panel straddles a knot.
fn quadrature_penalty(b: &SmoothBasis) -> Vec<Vec<f64>> {
    let mut locs = b.knots().to_vec();
    locs.dedup();
    let spans = locs.len() - 1;
    let per = (10_000 / spans) & !1;
    let k = b.dim();
    let mut s = vec![vec![0.0; k]; k];
    for w in locs.windows(2) {
        let h = (w[1] - w[0]) / per as f64;
        for step in 0..=per {
            let x = if step == per { w[1] } else { w[0] + h * step as f64 };
            // evaluate just inside the span so one-sided values are used at knots
            let xe = x.clamp(w[0] + 1e-12 * h, w[1] - 1e-12 * h);
            let d = b.eval_second_derivative(xe);
            let wt = if step == 0 || step == per {
                1.0
            } else if step % 2 == 1 {
                4.0
            } else {
                2.0
            } * h
                / 3.0;
            for i in 0..k {
                for j in 0..k {
                    s[i][j] += wt * d[i] * d[j];
                }
            }
        }
    }
    s
}

#[test]
fn penalty_matches_quadrature() {
    let x: Vec<f64> = (0..400)
        .map(|i| ((i * 37) % 400) as f64 / 40.0 + (i as f64 * 0.01).sin())
        .collect();
    for spec in [
        BasisSpec::natural_cubic(10),
        BasisSpec::natural_cubic(6).with_knots(KnotPlacement::Uniform),
        BasisSpec::cubic_bspline(10),
        BasisSpec::cubic_bspline(5).with_knots(KnotPlacement::Uniform),
    ] {
        let b = SmoothBasis::fit(&spec, &x).unwrap();
        let s = b.penalty();
        let q = quadrature_penalty(&b);
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                assert!(
                    (s[(i, j)] - q[i][j]).abs() < 1e-6,
                    "{:?} ({i},{j}): {} vs {}",
                    spec.kind,
                    s[(i, j)],
                    q[i][j]
                );
            }
        }
    }
}

#[test]
fn fourier_columns_are_centered_and_orthogonal() {
    let t: Vec<i64> = (1..=73).collect();
    let f = fourier_terms(&t, 73.0, 5).unwrap();
    assert_eq!(f.columns.len(), 10);
    for (a, ca) in f.columns.iter().enumerate() {
        assert!((ca.iter().sum::<f64>() / 73.0).abs() < 1e-12);
        assert!(ca.iter().all(|v| v.abs() <= 1.0));
        for cb in f.columns.iter().skip(a + 1) {
            let dot: f64 = ca.iter().zip(cb).map(|(u, v)| u * v).sum();
            assert!(dot.abs() < 1e-9);
        }
    }
}

#[test]
fn fourier_periodicity() {
    let f = fourier_terms(&[12], 12.0, 1).unwrap();
    assert!(f.columns[0][0].abs() < 1e-15);
    assert!((f.columns[1][0] - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn penalty_is_psd_and_kills_lines(seed in 0u64..10_000, k in 4usize..12, bspline: bool) {
        let x: Vec<f64> = (0..200).map(|i| ((i as u64 * 7919 + seed) % 1009) as f64 / 100.0).collect();
        let spec = if bspline { BasisSpec::cubic_bspline(k) } else { BasisSpec::natural_cubic(k) };
        let b = SmoothBasis::fit(&spec, &x).unwrap();
        let s = b.penalty();
        let eig = s.clone().symmetric_eigen();
        let top = eig.eigenvalues.max();
        prop_assert!(eig.eigenvalues.iter().all(|v| *v >= -1e-10 * top.max(1.0)));
        // coefficients reproducing a + c x
        let design = b.design(&x);
        let target = nalgebra::DVector::from_iterator(x.len(), x.iter().map(|v| 2.0 - 0.5 * v));
        let beta = design.clone().svd(true, true).solve(&target, 1e-12).unwrap();
        prop_assert!((&design * &beta - &target).amax() < 1e-8);
        prop_assert!(beta.dot(&(&s * &beta)).abs() < 1e-8 * top.max(1.0));
    }
}
