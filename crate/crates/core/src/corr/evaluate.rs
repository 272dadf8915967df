use crate::corr::lagtime::LagTimeEstimate;
use crate::corr::{LagOutcome, MIN_LAG_ROWS};
use crate::error::{Error, Result};
use crate::gam::{fit_gam, Family, Frame, SmoothModel};
use crate::series::{CovariateSet, TimeSeries};

/// Lead-response check of a lag-time estimate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Share of rows where the lead-response fit strictly exceeds every
    /// other lag's fit.
    pub fraction: f64,
    /// Share of rows where it strictly exceeds every lag's fit, the
    /// estimated lag included.
    pub fraction_inclusive: f64,
    /// Fitted lead-response correlation at each estimate row.
    pub lead_fit: Vec<f64>,
    pub model: SmoothModel,
    pub n_used: usize,
}

/// Fits a correlation-link model of `y*_{t + d_t} x*_t` on `z_t` and compares
/// it against the per-lag fits stored in `estimate`.
pub fn evaluate_lag_time(
    x_star: &TimeSeries,
    y_star: &TimeSeries,
    z: &CovariateSet,
    estimate: &LagTimeEstimate,
    models: &[LagOutcome],
) -> Result<Evaluation> {
    let terms = models
        .iter()
        .find_map(LagOutcome::fitted)
        .map(|m| m.terms.clone())
        .ok_or_else(|| Error::Estimation("no lag model was fitted".into()))?;
    let n = y_star.len();
    let mut rows = Vec::new();
    let mut response = Vec::new();
    for (t, d) in estimate.rows.iter().zip(&estimate.lag_time) {
        if t + d >= n {
            continue;
        }
        if let (Some(a), Some(b)) = (y_star.get(t + d), x_star.get(*t)) {
            rows.push(*t);
            response.push(a * b);
        }
    }
    if rows.len() < MIN_LAG_ROWS {
        return Err(Error::Estimation(format!(
            "{} rows for the lead-response model, at least {MIN_LAG_ROWS} required",
            rows.len()
        )));
    }
    let model = fit_gam(
        &response,
        &Frame::from_covariates(z, &rows),
        &terms,
        Family::GaussianCorrLink,
        None,
    )?;
    let lead_fit = model.predict_response(&Frame::from_covariates(z, &estimate.rows))?;

    let mut strict = 0usize;
    let mut inclusive = 0usize;
    for (i, lead) in lead_fit.iter().enumerate() {
        let d = estimate.lag_time[i];
        let mut beats_others = true;
        let mut beats_all = true;
        for (k, c) in estimate.lags.iter().zip(&estimate.curves) {
            let v = c[i];
            if !v.is_finite() {
                continue;
            }
            if !(*lead > v) {
                beats_all = false;
                if *k != d {
                    beats_others = false;
                }
            }
        }
        strict += usize::from(beats_others);
        inclusive += usize::from(beats_all);
    }
    let total = lead_fit.len().max(1) as f64;
    Ok(Evaluation {
        fraction: strict as f64 / total,
        fraction_inclusive: inclusive as f64 / total,
        lead_fit,
        model,
        n_used: rows.len(),
    })
}
