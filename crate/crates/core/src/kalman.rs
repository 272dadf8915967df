//! Exact Kalman filtering and disturbance smoothing for AR(p) processes
//! observed without noise at a subset of times.

use nalgebra::{DMatrix, DVector};

use crate::ar::ArModel;
use crate::error::{Error, Result};

/// Companion-form state space of a stationary AR(p):
/// `a_{t+1} = T a_t + e_1 eta_t`, `x_t = mean + a_t[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub transition: DMatrix<f64>,
    pub observation: DVector<f64>,
    /// State disturbance covariance `sigma2 e_1 e_1'`.
    pub state_noise: DMatrix<f64>,
    /// Stationary state covariance.
    pub initial_cov: DMatrix<f64>,
    pub mean: f64,
}

impl StateSpace {
    pub fn from_ar(model: &ArModel) -> Result<Self> {
        if !(model.spectral_radius() < 1.0) {
            return Err(Error::Contract(format!(
                "AR({}) model is not stationary (spectral radius {:.6})",
                model.order,
                model.spectral_radius()
            )));
        }
        let t = model.companion();
        let m = t.nrows();
        let mut q = DMatrix::zeros(m, m);
        q[(0, 0)] = model.sigma2;
        let p0 = stationary_covariance(&t, &q)?;
        let mut z = DVector::zeros(m);
        z[0] = 1.0;
        Ok(Self {
            transition: t,
            observation: z,
            state_noise: q,
            initial_cov: p0,
            mean: model.mean(),
        })
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }
}

/// Solves `P = T P T' + Q` through the vectorized system.
fn stationary_covariance(t: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = t.nrows();
    let kron = t.kronecker(t);
    let a = DMatrix::identity(m * m, m * m) - kron;
    let b = DVector::from_column_slice(q.as_slice());
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Contract("stationary covariance equation is singular".into()))?;
    let p = DMatrix::from_column_slice(m, m, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Smoother output for `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub mean: Vec<f64>,
    /// Conditional variance given all observations (zero where observed).
    pub variance: Vec<f64>,
    /// Conditional variance given observations up to and including `t`.
    pub filtered_variance: Vec<f64>,
}

/// Conditional means and variances of `x_t` given every finite entry of `x`.
///
/// Observed positions are returned unchanged with zero variance.
pub fn kalman_smooth(x: &[f64], model: &ArModel) -> Result<Smoothed> {
    let ss = StateSpace::from_ar(model)?;
    let n = x.len();
    let m = ss.dim();
    let t = &ss.transition;
    let q = &ss.state_noise;

    let mut a = DVector::zeros(m);
    let mut p = ss.initial_cov.clone();
    let mut a_pred = Vec::with_capacity(n);
    let mut p_pred = Vec::with_capacity(n);
    let mut innov = vec![0.0; n];
    let mut gain_f = vec![0.0; n];
    let mut gains: Vec<Option<DVector<f64>>> = Vec::with_capacity(n);
    let mut filtered_variance = vec![0.0; n];

    for (i, xi) in x.iter().enumerate() {
        a_pred.push(a.clone());
        p_pred.push(p.clone());
        if xi.is_finite() {
            let f = p[(0, 0)];
            if !(f > 0.0) {
                return Err(Error::Contract("prediction variance is not positive".into()));
            }
            let v = xi - ss.mean - a[0];
            let pz = p.column(0).into_owned();
            let k = (t * &pz) / f;
            a = t * &a + &k * v;
            let mut l = t.clone();
            for r in 0..m {
                l[(r, 0)] -= k[r];
            }
            p = t * &p * l.transpose() + q;
            innov[i] = v;
            gain_f[i] = f;
            gains.push(Some(k));
            filtered_variance[i] = 0.0;
        } else {
            filtered_variance[i] = p[(0, 0)];
            a = t * &a;
            p = t * &p * t.transpose() + q;
            gains.push(None);
        }
        p = (&p + p.transpose()) * 0.5;
    }

    let mut r = DVector::<f64>::zeros(m);
    let mut nmat = DMatrix::<f64>::zeros(m, m);
    let mut mean = vec![0.0; n];
    let mut variance = vec![0.0; n];
    for i in (0..n).rev() {
        match &gains[i] {
            Some(k) => {
                let mut l = t.clone();
                for row in 0..m {
                    l[(row, 0)] -= k[row];
                }
                let mut r_prev = l.tr_mul(&r);
                r_prev[0] += innov[i] / gain_f[i];
                let mut n_prev = l.tr_mul(&nmat) * &l;
                n_prev[(0, 0)] += 1.0 / gain_f[i];
                r = r_prev;
                nmat = n_prev;
            }
            None => {
                r = t.tr_mul(&r);
                nmat = t.tr_mul(&nmat) * t;
            }
        }
        if x[i].is_finite() {
            mean[i] = x[i];
            variance[i] = 0.0;
        } else {
            let pp = &p_pred[i];
            let alpha = &a_pred[i] + pp * &r;
            mean[i] = ss.mean + alpha[0];
            let v = pp[(0, 0)] - (pp.row(0) * &nmat * pp.column(0))[(0, 0)];
            variance[i] = v.max(0.0);
        }
    }
    Ok(Smoothed {
        mean,
        variance,
        filtered_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_observed_is_identity() {
        let m = ArModel::new(vec![0.6, -0.2], 0.3, 1.0).unwrap();
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let s = kalman_smooth(&x, &m).unwrap();
        assert_eq!(s.mean, x);
        assert!(s.variance.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_gap_matches_closed_form() {
        let psi = 0.7;
        let m = ArModel::new(vec![psi], 0.0, 1.0).unwrap();
        let x = [0.3, -1.0, 2.0, f64::NAN, 1.5, 0.2];
        let s = kalman_smooth(&x, &m).unwrap();
        let expect = psi * (2.0 + 1.5) / (1.0 + psi * psi);
        assert!((s.mean[3] - expect).abs() < 1e-12);
        assert!((s.variance[3] - 1.0 / (1.0 + psi * psi)).abs() < 1e-12);
    }

    #[test]
    fn stationary_covariance_of_ar1() {
        let m = ArModel::new(vec![0.5], 0.0, 2.0).unwrap();
        let ss = StateSpace::from_ar(&m).unwrap();
        assert!((ss.initial_cov[(0, 0)] - 2.0 / 0.75).abs() < 1e-12);
    }

    #[test]
    fn nonstationary_model_is_rejected() {
        let m = ArModel::new(vec![1.1], 0.0, 1.0).unwrap();
        assert!(matches!(kalman_smooth(&[1.0, f64::NAN], &m), Err(Error::Contract(_))));
    }

    #[test]
    fn white_noise_gap_is_the_mean() {
        let m = ArModel::new(vec![], 2.0, 1.0).unwrap();
        let s = kalman_smooth(&[1.0, f64::NAN, 3.0], &m).unwrap();
        assert_eq!(s.mean[1], 2.0);
        assert_eq!(s.variance[1], 1.0);
    }
}
