//! Autoregressive models fitted by conditional least squares with AICc
//! order selection.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ORDER: usize = 10;
/// Innovation variance assigned to a constant series.
pub const VAR_FLOOR: f64 = 1e-10;
/// Spectral radius targeted when shrinking a non-stationary fit.
const SHRINK_TARGET: f64 = 0.99;

/// `x_t = intercept + sum_i psi_i x_{t-i} + e_t`, `e_t ~ N(0, sigma2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub sigma2: f64,
    /// AICc at selection (NaN when constructed directly).
    pub aicc: f64,
    pub stationary: bool,
    /// Rows used by the final least-squares fit.
    pub n_used: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ArModel {
    pub fn new(coefficients: Vec<f64>, intercept: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Contract(format!(
                "innovation variance must be positive, got {sigma2}"
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) || !intercept.is_finite() {
            return Err(Error::Contract("AR parameters must be finite".into()));
        }
        let mut m = Self {
            order: coefficients.len(),
            intercept,
            coefficients,
            sigma2,
            aicc: f64::NAN,
            stationary: false,
            n_used: 0,
            warnings: Vec::new(),
        };
        m.stationary = m.spectral_radius() < 1.0;
        Ok(m)
    }

    /// Process mean `intercept / (1 - sum psi)`.
    pub fn mean(&self) -> f64 {
        let s: f64 = self.coefficients.iter().sum();
        self.intercept / (1.0 - s)
    }

    /// Largest eigenvalue modulus of the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.coefficients)
    }

    /// `p x p` companion matrix (1 x 1 zero for `p = 0`).
    pub fn companion(&self) -> DMatrix<f64> {
        companion(&self.coefficients)
    }
}

fn companion(psi: &[f64]) -> DMatrix<f64> {
    let m = psi.len().max(1);
    let mut t = DMatrix::zeros(m, m);
    for (i, c) in psi.iter().enumerate() {
        t[(0, i)] = *c;
    }
    for i in 1..m {
        t[(i, i - 1)] = 1.0;
    }
    t
}

fn spectral_radius(psi: &[f64]) -> f64 {
    if psi.is_empty() {
        return 0.0;
    }
    companion(psi)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// AICc with `m' = p + 2` parameters (coefficients, mean, variance).
pub fn aicc(n: usize, sigma2: f64, p: usize) -> f64 {
    let n = n as f64;
    let m = (p + 2) as f64;
    n * sigma2.ln() + 2.0 * m + 2.0 * m * (m + 1.0) / (n - m - 1.0)
}

/// Rows `t >= lags` whose value and `lags` predecessors are all finite.
fn lagged_rows(x: &[f64], lags: usize) -> Vec<usize> {
    (lags..x.len())
        .filter(|t| (0..=lags).all(|i| x[t - i].is_finite()))
        .collect()
}

/// Least squares of `x_t` on `[1, x_{t-1}, ..., x_{t-p}]` over `rows`.
/// Returns `(intercept, coefficients, rss)`.
fn least_squares(x: &[f64], rows: &[usize], p: usize) -> Option<(f64, Vec<f64>, f64)> {
    let n = rows.len();
    let design = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { x[rows[r] - c] });
    let target = DVector::from_iterator(n, rows.iter().map(|t| x[*t]));
    let xtx = design.tr_mul(&design);
    let xty = design.tr_mul(&target);
    let beta = match xtx.clone().cholesky() {
        Some(c) => c.solve(&xty),
        None => xtx.svd(true, true).solve(&xty, 1e-12).ok()?,
    };
    let resid = &target - &design * &beta;
    let rss = resid.norm_squared();
    Some((beta[0], beta.iter().skip(1).copied().collect(), rss))
}

/// Fits AR(p) for `p = 0..=max_order` on a common sample and keeps the
/// AICc minimizer (smaller `p` on ties), then re-estimates it on all rows
/// usable at that order. Non-finite entries of `x` are missing. When gaps
/// leave fewer than `10 * max_order` complete lagged rows the largest
/// candidate order is lowered until enough rows remain.
pub fn fit_ar(x: &[f64], max_order: usize) -> Result<ArModel> {
    let observed: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    let min_rows = (10 * max_order).max(10);
    if observed.len() < min_rows {
        return Err(Error::Estimation(format!(
            "AR fitting needs at least {min_rows} observed values, found {}",
            observed.len()
        )));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let spread = observed.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        let msg = "series is constant; using a white-noise model with floored variance".to_string();
        warn!("{msg}");
        return Ok(ArModel {
            order: 0,
            intercept: mean,
            coefficients: Vec::new(),
            sigma2: VAR_FLOOR,
            aicc: f64::NAN,
            stationary: true,
            n_used: observed.len(),
            warnings: vec![msg],
        });
    }

    let mut warnings = Vec::new();
    let mut top = max_order;
    let mut common = lagged_rows(x, top);
    while common.len() < (10 * top).max(10) && top > 0 {
        top -= 1;
        common = lagged_rows(x, top);
    }
    if common.len() < (10 * top).max(10) {
        return Err(Error::Estimation(format!(
            "only {} complete rows, need {}",
            common.len(),
            (10 * top).max(10)
        )));
    }
    if top < max_order {
        let msg = format!("too few complete lagged rows for order {max_order}; orders limited to {top}");
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut best: Option<(usize, f64)> = None;
    for p in 0..=top {
        let Some((_, _, rss)) = least_squares(x, &common, p) else {
            continue;
        };
        let s2 = (rss / common.len() as f64).max(VAR_FLOOR);
        let score = aicc(common.len(), s2, p);
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((p, score));
        }
    }
    let (p, score) = best.ok_or_else(|| Error::Estimation("no AR order could be fitted".into()))?;

    let rows = lagged_rows(x, p);
    let (intercept, mut psi, rss) =
        least_squares(x, &rows, p).ok_or_else(|| Error::Estimation(format!("AR({p}) least squares is singular")))?;
    let dof = rows.len().saturating_sub(p + 1).max(1);
    let sigma2 = (rss / dof as f64).max(VAR_FLOOR);
    let mut rho = spectral_radius(&psi);
    let mut intercept = intercept;
    if rho >= 1.0 {
        let sum_before: f64 = psi.iter().sum();
        let process_mean = if (1.0 - sum_before).abs() > 1e-8 {
            intercept / (1.0 - sum_before)
        } else {
            mean
        };
        while rho >= 1.0 {
            let s = SHRINK_TARGET / rho;
            let mut f = 1.0;
            for c in psi.iter_mut() {
                f *= s;
                *c *= f;
            }
            rho = spectral_radius(&psi);
        }
        intercept = process_mean * (1.0 - psi.iter().sum::<f64>());
        let msg = format!("AR({p}) fit was not stationary; coefficients shrunk to spectral radius {rho:.4}");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(ArModel {
        order: p,
        intercept,
        coefficients: psi,
        sigma2,
        aicc: score,
        stationary: rho < 1.0,
        n_used: rows.len(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(n: usize, psi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n + 200];
        for t in 1..x.len() {
            x[t] = psi * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        x.split_off(200)
    }

    #[test]
    fn ar1_coefficient_is_recovered() {
        for seed in 0..5 {
            let x = ar1(2000, 0.8, seed);
            let m = fit_ar(&x, 8).unwrap();
            assert!(m.order >= 1);
            assert!(
                m.coefficients[0] > 0.75 && m.coefficients[0] < 0.85,
                "{:?}",
                m.coefficients
            );
            assert!(m.stationary);
        }
    }

    #[test]
    fn constant_series_is_degenerate() {
        let m = fit_ar(&[3.0; 100], 4).unwrap();
        assert_eq!(m.order, 0);
        assert_eq!(m.sigma2, VAR_FLOOR);
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(fit_ar(&[1.0, 2.0, 3.0], 2), Err(Error::Estimation(_))));
    }

    #[test]
    fn missing_values_are_skipped() {
        let mut x = ar1(1000, 0.5, 3);
        for i in (0..x.len()).step_by(9) {
            x[i] = f64::NAN;
        }
        let m = fit_ar(&x, 3).unwrap();
        assert!(m.n_used < 1000);
        assert!((m.coefficients.first().copied().unwrap_or(0.0) - 0.5).abs() < 0.1);
    }

    #[test]
    fn explosive_fit_is_shrunk() {
        let x: Vec<f64> = (0..200).map(|t| 1.05f64.powi(t)).collect();
        let m = fit_ar(&x, 1).unwrap();
        assert!(m.stationary);
        assert!(m.spectral_radius() < 1.0);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn companion_radius() {
        let m = ArModel::new(vec![0.5, 0.3], 0.0, 1.0).unwrap();
        let t = m.companion();
        assert_eq!(t[(1, 0)], 1.0);
        assert!(m.stationary);
        assert!(!ArModel::new(vec![1.2], 0.0, 1.0).unwrap().stationary);
    }
}
