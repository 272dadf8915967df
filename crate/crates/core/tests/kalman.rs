use condnorm::ar::ArModel;
use condnorm::kalman::kalman_smooth;
use condnorm::synth::oracle::{oracle_ar_autocovariance, oracle_gaussian_condition, oracle_gaussian_condition_var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn toeplitz(g: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| g[i.abs_diff(j)]).collect()).collect()
}

fn check_against_dense(psi: &[f64], mu: f64, x: &[f64]) {
    let intercept = mu * (1.0 - psi.iter().sum::<f64>());
    let model = ArModel::new(psi.to_vec(), intercept, 1.3).unwrap();
    let n = x.len();
    let cov = toeplitz(&oracle_ar_autocovariance(psi, 1.3, n).unwrap(), n);
    let obs: Vec<usize> = (0..n).filter(|i| x[*i].is_finite()).collect();
    let vals: Vec<f64> = obs.iter().map(|i| x[*i] - mu).collect();
    let mean = oracle_gaussian_condition(&cov, &obs, &vals).unwrap();
    let var = oracle_gaussian_condition_var(&cov, &obs).unwrap();
    let s = kalman_smooth(x, &model).unwrap();
    for t in 0..n {
        assert!(
            (s.mean[t] - (mean[t] + mu)).abs() < 1e-6,
            "t={t}: {} vs {}",
            s.mean[t],
            mean[t] + mu
        );
        assert!((s.variance[t] - var[t]).abs() < 1e-6);
        assert!(s.variance[t] <= s.filtered_variance[t] + 1e-12);
    }
}

fn ar_path(psi: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; n + 300];
    for t in 0..x.len() {
        let mut v: f64 = rng.sample(StandardNormal);
        for (i, c) in psi.iter().enumerate() {
            if t > i {
                v += c * x[t - 1 - i];
            }
        }
        x[t] = v;
    }
    x.split_off(300)
}

#[test]
fn matches_dense_conditioning_ar1_and_ar2() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for psi in [vec![0.8], vec![0.5, 0.3], vec![1.2, -0.5]] {
        for _ in 0..5 {
            let mut x: Vec<f64> = ar_path(&psi, 30, &mut rng).iter().map(|v| v + 2.0).collect();
            for v in x.iter_mut() {
                if rng.random::<f64>() < 0.2 {
                    *v = f64::NAN;
                }
            }
            check_against_dense(&psi, 2.0, &x);
        }
    }
}

#[test]
fn leading_missing_run_is_backcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut x = ar_path(&[0.6, 0.2], 30, &mut rng);
    for v in x.iter_mut().take(8) {
        *v = f64::NAN;
    }
    x[20] = f64::NAN;
    check_against_dense(&[0.6, 0.2], 0.0, &x);
}

#[test]
fn everything_missing_gives_the_stationary_mean() {
    let model = ArModel::new(vec![0.5], 1.0, 1.0).unwrap();
    let s = kalman_smooth(&[f64::NAN; 6], &model).unwrap();
    assert!(s.mean.iter().all(|m| (m - 2.0).abs() < 1e-12));
    assert!(s.variance.iter().all(|v| (v - 1.0 / 0.75).abs() < 1e-10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smoother_equals_brute_force(seed in 0u64..10_000, a in -0.9f64..0.9, b in -0.5f64..0.4, n in 5usize..50, frac in 0.0f64..0.6) {
        prop_assume!(a.abs() + b < 0.95 && b > -0.95);
        let psi = [a, b];
        prop_assume!(ArModel::new(psi.to_vec(), 0.0, 1.0).unwrap().stationary);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = ar_path(&psi, n, &mut rng);
        for v in x.iter_mut() {
            if rng.random::<f64>() < frac {
                *v = f64::NAN;
            }
        }
        check_against_dense(&psi, -1.0, &x);
    }
}
