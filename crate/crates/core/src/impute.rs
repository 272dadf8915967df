//! Missing-value imputation: normalize, smooth the normalized series with
//! an AR state space, map back.

use crate::ar::{fit_ar, ArModel, DEFAULT_MAX_ORDER};
use crate::error::{Error, Result};
use crate::gam::Term;
use crate::kalman::kalman_smooth;
use crate::normalize::ConditionalNormalizer;
use crate::series::{CovariateSet, TimeSeries};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct ImputeOptions {
    pub max_order: usize,
    /// Re-mask imputed values below zero.
    pub nonnegative: bool,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        Self {
            max_order: DEFAULT_MAX_ORDER,
            nonnegative: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Imputation {
    /// Observed values kept, masked values filled where covariates allow.
    pub series: TimeSeries,
    pub imputed: Vec<bool>,
    /// Approximate Gaussian 95% bounds; equal to the value at observed rows.
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    pub normalizer: ConditionalNormalizer,
    pub ar: ArModel,
    /// Imputations removed by the nonnegativity filter.
    pub negatives_masked: usize,
}

impl Imputation {
    pub fn imputed_count(&self) -> usize {
        self.imputed.iter().filter(|b| **b).count()
    }
}

/// Fills masked values of `y` given already-fitted normalizer and AR models.
pub fn impute_with(
    y: &TimeSeries,
    z: &CovariateSet,
    normalizer: &ConditionalNormalizer,
    ar: &ArModel,
    nonnegative: bool,
) -> Result<Imputation> {
    let norm = normalizer.normalize(y, z)?;
    let smoothed = kalman_smooth(norm.y_star.raw_values(), ar)?;
    let n = y.len();
    let mut values = y.raw_values().to_vec();
    let mut imputed = vec![false; n];
    let mut lo = values.clone();
    let mut hi = values.clone();
    let mut negatives = 0;
    for i in 0..n {
        if !y.is_missing(i) || !norm.mean_hat[i].is_finite() {
            continue;
        }
        let sd = norm.var_hat[i].sqrt();
        let m = norm.mean_hat[i];
        let s = smoothed.mean[i];
        let half = Z95 * smoothed.variance[i].sqrt();
        let v = s * sd + m;
        if nonnegative && v < 0.0 {
            negatives += 1;
            continue;
        }
        values[i] = v;
        lo[i] = (s - half) * sd + m;
        hi[i] = (s + half) * sd + m;
        imputed[i] = true;
    }
    let series = TimeSeries::from_values(y.name(), y.start(), y.step(), values)?;
    Ok(Imputation {
        series,
        imputed,
        lo95: lo,
        hi95: hi,
        normalizer: normalizer.clone(),
        ar: ar.clone(),
        negatives_masked: negatives,
    })
}

/// Normalizes `y` on `z`, fits an AR model (AICc, up to `max_order`) to the
/// normalized series, smooths it and maps the smoothed values back at the
/// masked positions. Observed values are never changed.
pub fn impute_series(y: &TimeSeries, z: &CovariateSet, terms: &[Term], opts: &ImputeOptions) -> Result<Imputation> {
    let normalizer = ConditionalNormalizer::fit(y, z, terms)?;
    let norm = normalizer.normalize(y, z)?;
    let ar = fit_ar(norm.y_star.raw_values(), opts.max_order)?;
    if !ar.stationary {
        return Err(Error::Estimation(
            "AR model for the normalized series is not stationary".into(),
        ));
    }
    impute_with(y, z, &normalizer, &ar, opts.nonnegative)
}
