//! Conditional normalization `y* = (y - m(z)) / sqrt(v(z))`.
//!
//! `m` is a Gaussian additive model of `y` on the covariates and `v` a Gamma
//! log-link additive model of the squared residuals on the same covariates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gam::{fit_gam, Family, Frame, SmoothModel, Term};
use crate::series::{CovariateSet, TimeSeries};

/// Minimum number of complete rows for fitting.
pub const MIN_ROWS: usize = 50;
/// Fitted variances are floored at this multiple of the sample variance of `y`.
pub const VAR_FLOOR_FACTOR: f64 = 1e-8;

/// A fitted mean model and variance model pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalNormalizer {
    pub mean_model: SmoothModel,
    pub var_model: SmoothModel,
    pub var_floor: f64,
}

/// Normalized values on the input grid with the per-time mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub y_star: TimeSeries,
    /// `m(z_t)`, NaN where a covariate is masked.
    pub mean_hat: Vec<f64>,
    /// `v(z_t)`, NaN where a covariate is masked.
    pub var_hat: Vec<f64>,
}

/// Grid rows where every named covariate (and `y`, when given) is observed.
pub fn complete_rows(z: &CovariateSet, names: &[&str], y: Option<&TimeSeries>) -> Vec<usize> {
    (0..z.len())
        .filter(|i| z.row_complete(*i, names) && y.is_none_or(|s| !s.is_missing(*i)))
        .collect()
}

fn check_names(z: &CovariateSet, names: &[&str]) -> Result<()> {
    for n in names {
        if z.column(n).is_none() {
            return Err(Error::Schema(format!("covariate `{n}` is not in the covariate set")));
        }
    }
    Ok(())
}

impl ConditionalNormalizer {
    /// Fits both models on the rows where `y` and every covariate named in
    /// `terms` are observed.
    pub fn fit(y: &TimeSeries, z: &CovariateSet, terms: &[Term]) -> Result<Self> {
        if !z.accepts(y) {
            return Err(Error::Alignment(format!("`{}` is not on the covariate grid", y.name())));
        }
        let names: Vec<&str> = terms.iter().map(|t| t.covariate.as_str()).collect();
        check_names(z, &names)?;
        let rows = complete_rows(z, &names, Some(y));
        if rows.len() < MIN_ROWS {
            return Err(Error::fit(format!(
                "{} complete rows for `{}`, at least {MIN_ROWS} required",
                rows.len(),
                y.name()
            )));
        }
        let frame = Frame::from_covariates(z, &rows);
        let yv: Vec<f64> = rows.iter().map(|i| y.raw_values()[*i]).collect();
        let n = yv.len() as f64;
        let mean = yv.iter().sum::<f64>() / n;
        let var = yv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let var_floor = (VAR_FLOOR_FACTOR * var).max(f64::MIN_POSITIVE);

        let mean_model = fit_gam(&yv, &frame, terms, Family::GaussianIdentity, None)?;
        let sq: Vec<f64> = yv
            .iter()
            .zip(&mean_model.fitted)
            .map(|(a, m)| (a - m) * (a - m))
            .collect();
        let var_model = fit_gam(&sq, &frame, terms, Family::GammaLog, None)?;
        Ok(Self {
            mean_model,
            var_model,
            var_floor,
        })
    }

    /// Identity normalizer, `m = 0` and `v = 1`.
    pub fn identity() -> Self {
        let constant = |family, value: f64| SmoothModel {
            family,
            intercept: value,
            terms: Vec::new(),
            dispersion: 0.0,
            shape: None,
            edf: 1.0,
            gcv: 0.0,
            deviance: 0.0,
            iterations: 0,
            n: 0,
            covariance: vec![0.0],
            fitted: Vec::new(),
            linear_predictor: Vec::new(),
            warnings: Vec::new(),
        };
        Self {
            mean_model: constant(Family::GaussianIdentity, 0.0),
            var_model: constant(Family::GammaLog, 0.0),
            var_floor: f64::MIN_POSITIVE,
        }
    }

    /// Covariates used by either model.
    pub fn covariates(&self) -> Vec<&str> {
        let mut names = self.mean_model.covariate_names();
        for n in self.var_model.covariate_names() {
            if !names.contains(&n) {
                names.push(n);
            }
        }
        names
    }

    /// `(m, v)` at each frame row, with `v` floored.
    pub fn moments(&self, frame: &Frame) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.mean_model.predict_response(frame)?;
        let v = self
            .var_model
            .predict_response(frame)?
            .into_iter()
            .map(|v| v.max(self.var_floor))
            .collect();
        Ok((m, v))
    }

    fn moments_on_grid(&self, z: &CovariateSet) -> Result<(Vec<f64>, Vec<f64>)> {
        let names = self.covariates();
        check_names(z, &names)?;
        let rows = complete_rows(z, &names, None);
        let frame = Frame::from_covariates(z, &rows);
        let (m, v) = self.moments(&frame)?;
        let mut mean_hat = vec![f64::NAN; z.len()];
        let mut var_hat = vec![f64::NAN; z.len()];
        for (k, i) in rows.iter().enumerate() {
            mean_hat[*i] = m[k];
            var_hat[*i] = v[k];
        }
        Ok((mean_hat, var_hat))
    }

    pub fn normalize(&self, y: &TimeSeries, z: &CovariateSet) -> Result<NormalizedSeries> {
        if !z.accepts(y) {
            return Err(Error::Alignment(format!("`{}` is not on the covariate grid", y.name())));
        }
        let (mean_hat, var_hat) = self.moments_on_grid(z)?;
        let values: Vec<f64> = (0..y.len())
            .map(|i| match y.get(i) {
                Some(v) if mean_hat[i].is_finite() => (v - mean_hat[i]) / var_hat[i].sqrt(),
                _ => f64::NAN,
            })
            .collect();
        Ok(NormalizedSeries {
            y_star: TimeSeries::from_values(y.name(), y.start(), y.step(), values)?,
            mean_hat,
            var_hat,
        })
    }

    /// Inverse of [`normalize`](Self::normalize) at the given covariate rows.
    pub fn unnormalize(&self, y_star: &[f64], frame: &Frame) -> Result<Vec<f64>> {
        if y_star.len() != frame.len() {
            return Err(Error::Schema(format!(
                "{} values for {} covariate rows",
                y_star.len(),
                frame.len()
            )));
        }
        let (m, v) = self.moments(frame)?;
        Ok(y_star
            .iter()
            .zip(m.iter().zip(&v))
            .map(|(s, (m, v))| s * v.sqrt() + m)
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("normalizer serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("invalid normalizer document: {e}")))
    }
}

impl NormalizedSeries {
    /// `y* sqrt(v) + m` at every position (NaN where `y*` or the moments are missing).
    pub fn reconstruct(&self) -> Vec<f64> {
        self.y_star
            .raw_values()
            .iter()
            .zip(self.mean_hat.iter().zip(&self.var_hat))
            .map(|(s, (m, v))| s * v.sqrt() + m)
            .collect()
    }
}

/// Masks negative values; returns the filtered series and the count masked.
pub fn mask_negative(series: &TimeSeries) -> (TimeSeries, usize) {
    let mut out = series.clone();
    let mut count = 0;
    for (i, v) in series.observed() {
        if v < 0.0 {
            out.mask_at(i);
            count += 1;
        }
    }
    (out, count)
}
