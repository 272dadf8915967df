use condnorm::basis::BasisSpec;
use condnorm::corr::*;
use condnorm::error::Error;
use condnorm::gam::{Frame, Term};
use condnorm::normalize::ConditionalNormalizer;
use condnorm::series::{CovariateSet, TimeSeries};
use condnorm::synth::oracle::oracle_classical_ccf;
use condnorm::synth::{simulate, CovariateProcess, LagRule, SimData, SimSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn z_terms() -> Vec<Term> {
    vec![Term::new("z", BasisSpec::natural_cubic(8))]
}

fn normalized(d: &SimData) -> (TimeSeries, TimeSeries) {
    let terms = z_terms();
    let nx = ConditionalNormalizer::fit(&d.x, &d.z, &terms)
        .unwrap()
        .normalize(&d.x, &d.z)
        .unwrap();
    let ny = ConditionalNormalizer::fit(&d.y, &d.z, &terms)
        .unwrap()
        .normalize(&d.y, &d.z)
        .unwrap();
    (nx.y_star, ny.y_star)
}

fn planted(n: usize, rule: LagRule, seed: u64) -> SimData {
    let mut spec = SimSpec::basic(n, seed);
    spec.lag = Some(rule);
    spec.transport_noise = 0.5;
    simulate(&spec).unwrap()
}

fn z_grid() -> Frame {
    Frame::new().with_column("z", (0..41).map(|i| -0.95 + 0.0475 * i as f64).collect())
}

fn series(name: &str, values: Vec<f64>) -> TimeSeries {
    TimeSeries::from_values(name, SimSpec::basic(1, 0).start, 300, values).unwrap()
}

fn walk(n: usize, seed: u64) -> CovariateSet {
    simulate(&SimSpec::basic(n, seed)).unwrap().z
}

fn mixed(n: usize, seed: u64) -> SimSpec {
    let mut spec = SimSpec::basic(n, seed);
    spec.covariate = CovariateProcess::UniformWalk { step: 1.0 };
    spec
}

#[test]
fn iid_series_has_no_conditional_autocorrelation() {
    let n = 5000;
    let mut within = 0;
    for seed in 0..10 {
        let z = simulate(&mixed(n, 100 + seed)).unwrap().z;
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let y = series("y", (0..n).map(|_| rng.sample(StandardNormal)).collect());
        let models = conditional_acf(&y, &z, 5, &z_terms()).unwrap();
        assert_eq!(models.len(), 5);
        let worst = models
            .iter()
            .flat_map(|m| m.fitted().unwrap().correlation(&z_grid()).unwrap())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        within += usize::from(worst < 0.1);
    }
    assert!(within >= 9, "{within} of 10 datasets inside (-0.1, 0.1)");
}

#[test]
fn regime_autocorrelation_is_recovered() {
    let n = 10000;
    let z = walk(n, 21);
    let zv = z.column("z").unwrap().raw_values().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut y = vec![0.0; n];
    for t in 0..n {
        let psi: f64 = if zv[t] > 0.0 { 0.8 } else { 0.0 };
        let e: f64 = rng.sample(StandardNormal);
        let prev = if t > 0 { y[t - 1] } else { 0.0 };
        y[t] = psi * prev + (1.0 - psi * psi).sqrt() * e;
    }
    let models = conditional_acf(&series("y", y), &z, 1, &z_terms()).unwrap();
    let m = models[0].fitted().unwrap();
    let r = m.correlation(&Frame::new().with_column("z", vec![0.5, -0.5])).unwrap();
    assert!(r[0] > 0.6 && r[0] < 0.95, "{r:?}");
    assert!(r[1] > -0.15 && r[1] < 0.15, "{r:?}");
}

#[test]
fn short_series_gives_one_outcome_per_lag() {
    let z = walk(60, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = series("y", (0..60).map(|_| rng.sample(StandardNormal)).collect());
    let models = conditional_acf(&y, &z, 1, &z_terms()).unwrap();
    assert_eq!(models.len(), 1);
    assert_eq!(models[0].lag(), 1);

    let z = walk(52, 3);
    let y = series("y", (0..52).map(|_| rng.sample(StandardNormal)).collect());
    let models = conditional_acf(&y, &z, 3, &z_terms()).unwrap();
    assert!(models[0].fitted().is_some() && models[1].fitted().is_some());
    assert!(matches!(models[2], LagOutcome::Skipped { lag: 3, .. }));

    let z = walk(40, 3);
    let y = series("y", (0..40).map(|_| rng.sample(StandardNormal)).collect());
    let models = conditional_acf(&y, &z, 3, &z_terms()).unwrap();
    assert!(models.iter().all(|m| matches!(m, LagOutcome::Skipped { .. })));
    assert!(matches!(
        estimate_lag_time(&models, &z, &[0, 1]),
        Err(Error::Estimation(_))
    ));
}

#[test]
fn zero_max_lag_is_rejected() {
    let z = walk(100, 1);
    let y = series("y", vec![0.0; 100]);
    assert!(matches!(
        conditional_ccf(&y, &y, &z, 0, &z_terms()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn planted_lag_dominates_the_ccf() {
    let d = planted(5000, LagRule::Constant { lag: 3 }, 31);
    let (x, y) = normalized(&d);
    let models = conditional_ccf(&x, &y, &d.z, 6, &z_terms()).unwrap();
    let rows = evaluation_rows(&models, &d.z);
    let est = estimate_lag_time(&models, &d.z, &rows).unwrap();
    let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
    let c3 = mean(&est.curves[2]);
    for (k, c) in est.lags.iter().zip(&est.curves) {
        if *k != 3 {
            assert!(c3 > mean(c) + 0.2, "lag {k}");
        }
    }
    let hits = est.lag_time.iter().filter(|l| **l == 3).count();
    assert!(hits as f64 >= 0.9 * rows.len() as f64);
    let ev = evaluate_lag_time(&x, &y, &d.z, &est, &models).unwrap();
    assert!(ev.fraction >= 0.85, "{}", ev.fraction);
    assert!(ev.fraction_inclusive <= ev.fraction);
}

#[test]
fn independent_series_have_no_cross_correlation() {
    let d = simulate(&mixed(5000, 41)).unwrap();
    let (x, y) = normalized(&d);
    let models = conditional_ccf(&x, &y, &d.z, 6, &z_terms()).unwrap();
    for m in &models {
        let c = m.fitted().unwrap().correlation(&z_grid()).unwrap();
        assert!(c.iter().all(|v| v.abs() < 0.1), "lag {}: {c:?}", m.lag());
    }
}

#[test]
fn single_lag_and_ties() {
    let d = planted(600, LagRule::Constant { lag: 2 }, 5);
    let (x, y) = normalized(&d);
    let models = conditional_ccf(&x, &y, &d.z, 5, &z_terms()).unwrap();
    let only: Vec<LagOutcome> = models.into_iter().filter(|m| m.lag() == 5).collect();
    let rows = evaluation_rows(&only, &d.z);
    let est = estimate_lag_time(&only, &d.z, &rows).unwrap();
    assert!(est.lag_time.iter().all(|l| *l == 5));

    let flat = vec![vec![0.3; 4]; 3];
    assert_eq!(argmax_lags(&[1, 2, 3], &flat), vec![Some(1); 4]);
}

#[test]
fn intercept_only_matches_classical_ccf() {
    let mut spec = SimSpec::basic(5000, 51);
    spec.lag = Some(LagRule::Constant { lag: 2 });
    spec.transport_noise = 1.0;
    spec.noise = condnorm::synth::Noise::Ar {
        coefficients: vec![0.5],
    };
    let d = simulate(&spec).unwrap();
    let (x, y) = normalized(&d);
    let models = conditional_ccf(&x, &y, &d.z, 10, &[]).unwrap();
    let classical = oracle_classical_ccf(x.raw_values(), y.raw_values(), 10);
    for m in &models {
        let f = m.fitted().unwrap();
        let mean = f.model.fitted.iter().sum::<f64>() / f.model.fitted.len() as f64;
        assert!((mean - condnorm::gam::corr_link_inv(f.model.intercept)).abs() < 1e-12);
        assert!((mean - classical[m.lag() - 1]).abs() < 0.05, "lag {}", m.lag());
    }
}

#[test]
fn bootstrap_is_deterministic_and_nested() {
    let d = planted(
        1500,
        LagRule::Threshold {
            threshold: 0.0,
            below: 2,
            above: 4,
        },
        61,
    );
    let (x, y) = normalized(&d);
    let models = conditional_ccf(&x, &y, &d.z, 5, &z_terms()).unwrap();
    let rows = evaluation_rows(&models, &d.z);
    let opts = BootstrapOptions {
        replicates: 40,
        seed: 7,
        ..Default::default()
    };
    let a = sieve_bootstrap_ci(&models, &d.z, &rows, &opts).unwrap();
    let b = with_threads(1, || sieve_bootstrap_ci(&models, &d.z, &rows, &opts))
        .unwrap()
        .unwrap();
    assert_eq!(a, b);
    let est = estimate_lag_time(&models, &d.z, &rows).unwrap().with_bounds(&a);
    let b80 = est.bounds_at(0.20).unwrap();
    let b95 = est.bounds_at(0.05).unwrap();
    for i in 0..rows.len() {
        assert!(1 <= b95.lower[i] && b95.upper[i] <= 5);
        assert!(b95.lower[i] <= b80.lower[i] && b80.upper[i] <= b95.upper[i]);
        assert!(b80.lower[i] <= est.lag_time[i] && est.lag_time[i] <= b80.upper[i]);
    }
}

#[test]
fn noiseless_products_give_zero_width_intervals() {
    let n = 300;
    let z = walk(n, 71);
    let x = series("x", vec![0.5; n]);
    let y = series("y", vec![0.4; n]);
    let models = conditional_ccf(&x, &y, &z, 3, &z_terms()).unwrap();
    let rows = evaluation_rows(&models, &z);
    let est = estimate_lag_time(&models, &z, &rows).unwrap();
    assert!(est.lag_time.iter().all(|l| *l == 1));
    let opts = BootstrapOptions {
        replicates: 5,
        seed: 1,
        ..Default::default()
    };
    let boot = sieve_bootstrap_ci(&models, &z, &rows, &opts).unwrap();
    for b in &boot.bounds {
        assert!(b.lower.iter().zip(&b.upper).all(|(l, u)| l == u && *l == 1));
    }
}

#[test]
fn single_replicate_and_burn_in() {
    let d = planted(800, LagRule::Constant { lag: 2 }, 81);
    let (x, y) = normalized(&d);
    let models = conditional_ccf(&x, &y, &d.z, 4, &z_terms()).unwrap();
    let rows = evaluation_rows(&models, &d.z);
    let est = estimate_lag_time(&models, &d.z, &rows).unwrap();
    for burn_in in [false, true] {
        let opts = BootstrapOptions {
            replicates: 1,
            seed: 3,
            burn_in,
            ..Default::default()
        };
        let boot = sieve_bootstrap_ci(&models, &d.z, &rows, &opts).unwrap();
        for b in &boot.bounds {
            assert_eq!(b.lower, b.upper);
        }
        let agree = boot.bounds[0]
            .lower
            .iter()
            .zip(&est.lag_time)
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree as f64 > 0.9 * rows.len() as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn argmax_is_invariant_to_monotone_maps(
        curves in prop::collection::vec(prop::collection::vec(-0.99f64..0.99, 12), 1..6),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let lags: Vec<usize> = (1..=curves.len()).collect();
        let mapped: Vec<Vec<f64>> = curves
            .iter()
            .map(|c| c.iter().map(|v| (scale * condnorm::gam::corr_link(*v) + shift).exp()).collect())
            .collect();
        prop_assert_eq!(argmax_lags(&lags, &curves), argmax_lags(&lags, &mapped));
    }
}
