//! Conditional auto- and cross-correlation of normalized series, lag-time
//! estimation, sieve-bootstrap intervals and the lead-response evaluation.

mod bootstrap;
mod evaluate;
mod lagtime;

pub use bootstrap::{sieve_bootstrap_ci, BootstrapOptions, BootstrapResult, LagBounds, DEFAULT_REPLICATES};
pub use evaluate::{evaluate_lag_time, Evaluation};
pub use lagtime::{argmax_lags, estimate_lag_time, evaluation_rows, LagTimeEstimate, DEFAULT_MAX_LAG};

use rayon::prelude::*;

use crate::ar::{fit_ar, ArModel, DEFAULT_MAX_ORDER};
use crate::error::{Error, Result};
use crate::gam::{fit_gam, Family, Frame, SmoothModel, Term};
use crate::normalize::complete_rows;
use crate::series::{CovariateSet, TimeSeries};

/// Minimum usable rows for a per-lag fit.
pub const MIN_LAG_ROWS: usize = 50;

/// A correlation-link model of one lagged cross-product.
#[derive(Debug, Clone)]
pub struct CondCorrModel {
    pub lag: usize,
    pub model: SmoothModel,
    pub terms: Vec<Term>,
    /// Grid index `t` of each training row (covariates are taken at `t`).
    pub rows: Vec<usize>,
    /// Training covariates, one row per entry of `rows`.
    pub frame: Frame,
    pub response: Vec<f64>,
    /// `response - fitted` on the full grid, NaN off the training rows.
    pub residuals: Vec<f64>,
    /// AR model of the residual sequence, used by the sieve bootstrap.
    pub residual_ar: ArModel,
    pub n_used: usize,
}

impl CondCorrModel {
    /// Fitted correlations at new covariate rows.
    pub fn correlation(&self, frame: &Frame) -> Result<Vec<f64>> {
        self.model.predict_response(frame)
    }
}

/// Result of one lag: a fitted model or the reason it was skipped.
#[derive(Debug, Clone)]
pub enum LagOutcome {
    Fitted(Box<CondCorrModel>),
    Skipped { lag: usize, reason: String },
}

impl LagOutcome {
    pub fn lag(&self) -> usize {
        match self {
            LagOutcome::Fitted(m) => m.lag,
            LagOutcome::Skipped { lag, .. } => *lag,
        }
    }

    pub fn fitted(&self) -> Option<&CondCorrModel> {
        match self {
            LagOutcome::Fitted(m) => Some(m),
            LagOutcome::Skipped { .. } => None,
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (0 uses the global pool).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn check_inputs(a: &TimeSeries, b: &TimeSeries, z: &CovariateSet, terms: &[Term], max_lag: usize) -> Result<()> {
    if max_lag == 0 {
        return Err(Error::Contract("maximum lag must be at least 1".into()));
    }
    for s in [a, b] {
        if !z.accepts(s) {
            return Err(Error::Alignment(format!("`{}` is not on the covariate grid", s.name())));
        }
    }
    for t in terms {
        if z.column(&t.covariate).is_none() {
            return Err(Error::Schema(format!(
                "covariate `{}` is not in the covariate set",
                t.covariate
            )));
        }
    }
    Ok(())
}

/// Fits one lag on the rows `t` where `product(t)` is defined and the
/// covariates at `t` are observed.
fn fit_lag(z: &CovariateSet, terms: &[Term], k: usize, product: impl Fn(usize) -> Option<f64>) -> LagOutcome {
    let names: Vec<&str> = terms.iter().map(|t| t.covariate.as_str()).collect();
    let mut rows = Vec::new();
    let mut response = Vec::new();
    for t in complete_rows(z, &names, None) {
        if let Some(v) = product(t) {
            rows.push(t);
            response.push(v);
        }
    }
    if rows.len() < MIN_LAG_ROWS {
        return LagOutcome::Skipped {
            lag: k,
            reason: format!("{} usable rows, at least {MIN_LAG_ROWS} required", rows.len()),
        };
    }
    let mut frame = Frame::with_rows(rows.len());
    for name in &names {
        let col = z.column(name).expect("names checked").raw_values();
        frame.push(*name, rows.iter().map(|t| col[*t]).collect());
    }
    match fit_corr_model(k, terms, rows, frame, response, z.len()) {
        Ok(m) => LagOutcome::Fitted(Box::new(m)),
        Err(e) => LagOutcome::Skipped {
            lag: k,
            reason: e.to_string(),
        },
    }
}

pub(crate) fn fit_corr_model(
    lag: usize,
    terms: &[Term],
    rows: Vec<usize>,
    frame: Frame,
    response: Vec<f64>,
    grid_len: usize,
) -> Result<CondCorrModel> {
    let model = fit_gam(&response, &frame, terms, Family::GaussianCorrLink, None)?;
    let mut residuals = vec![f64::NAN; grid_len];
    for ((t, r), f) in rows.iter().zip(&response).zip(&model.fitted) {
        residuals[*t] = r - f;
    }
    let order = DEFAULT_MAX_ORDER.min(rows.len() / 10);
    let residual_ar = fit_ar(&residuals, order)?;
    Ok(CondCorrModel {
        lag,
        model,
        terms: terms.to_vec(),
        n_used: rows.len(),
        rows,
        frame,
        response,
        residuals,
        residual_ar,
    })
}

/// Conditional autocorrelation `r_k(z_t)`: for each `k = 1..=max_lag` a
/// correlation-link model of `y*_t y*_{t-k}` on `z_t`.
pub fn conditional_acf(
    y_star: &TimeSeries,
    z: &CovariateSet,
    max_lag: usize,
    terms: &[Term],
) -> Result<Vec<LagOutcome>> {
    check_inputs(y_star, y_star, z, terms, max_lag)?;
    Ok((1..=max_lag)
        .into_par_iter()
        .map(|k| fit_lag(z, terms, k, |t| Some(y_star.get(t)? * y_star.get(t.checked_sub(k)?)?)))
        .collect())
}

/// Conditional cross-correlation `c_k(z_t)`: for each `k = 1..=max_lag` a
/// correlation-link model of `y*_{t+k} x*_t` on `z_t`.
pub fn conditional_ccf(
    x_star: &TimeSeries,
    y_star: &TimeSeries,
    z: &CovariateSet,
    max_lag: usize,
    terms: &[Term],
) -> Result<Vec<LagOutcome>> {
    check_inputs(x_star, y_star, z, terms, max_lag)?;
    Ok((1..=max_lag)
        .into_par_iter()
        .map(|k| {
            fit_lag(z, terms, k, |t| {
                let lead = if t + k < y_star.len() {
                    y_star.get(t + k)?
                } else {
                    return None;
                };
                Some(lead * x_star.get(t)?)
            })
        })
        .collect())
}
