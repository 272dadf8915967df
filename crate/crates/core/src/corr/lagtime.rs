use crate::corr::bootstrap::{BootstrapResult, LagBounds};
use crate::corr::LagOutcome;
use crate::error::{Error, Result};
use crate::gam::Frame;
use crate::normalize::complete_rows;
use crate::series::CovariateSet;

/// Default largest lag (two hours at five-minute spacing).
pub const DEFAULT_MAX_LAG: usize = 24;

/// Per-row lag of maximal conditional cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct LagTimeEstimate {
    /// Grid index of each evaluation row.
    pub rows: Vec<usize>,
    /// Lags with a fitted model, ascending.
    pub lags: Vec<usize>,
    /// `curves[j][i]` is the fitted correlation of `lags[j]` at row `i`.
    pub curves: Vec<Vec<f64>>,
    pub lag_time: Vec<usize>,
    pub c_max: Vec<f64>,
    /// Bootstrap bounds, one entry per interval level.
    pub bounds: Vec<LagBounds>,
}

impl LagTimeEstimate {
    /// Attaches bootstrap bounds, widened where needed to contain the point estimate.
    pub fn with_bounds(mut self, boot: &BootstrapResult) -> Self {
        self.bounds = boot
            .bounds
            .iter()
            .map(|b| LagBounds {
                alpha: b.alpha,
                lower: b.lower.iter().zip(&self.lag_time).map(|(l, d)| (*l).min(*d)).collect(),
                upper: b.upper.iter().zip(&self.lag_time).map(|(u, d)| (*u).max(*d)).collect(),
            })
            .collect();
        self
    }

    /// Bounds at the given level, if computed.
    pub fn bounds_at(&self, alpha: f64) -> Option<&LagBounds> {
        self.bounds.iter().find(|b| (b.alpha - alpha).abs() < 1e-12)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Grid rows where every covariate used by a fitted model is observed.
pub fn evaluation_rows(models: &[LagOutcome], z: &CovariateSet) -> Vec<usize> {
    let mut names: Vec<&str> = Vec::new();
    for m in models.iter().filter_map(LagOutcome::fitted) {
        for t in &m.terms {
            if !names.contains(&t.covariate.as_str()) {
                names.push(&t.covariate);
            }
        }
    }
    complete_rows(z, &names, None)
}

/// Index of the largest finite value per row; the earliest wins ties.
pub(crate) fn argmax_index(curves: &[Vec<f64>], rows: usize) -> Vec<Option<usize>> {
    (0..rows)
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for (j, c) in curves.iter().enumerate() {
                let v = c[i];
                if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

/// Per-row argmax over `curves`, reported as the matching entry of `lags`
/// (smallest lag on ties). Rows with no finite value get `None`.
pub fn argmax_lags(lags: &[usize], curves: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = curves.first().map_or(0, Vec::len);
    argmax_index(curves, rows)
        .into_iter()
        .map(|j| j.map(|j| lags[j]))
        .collect()
}

/// Fitted correlations of every fitted lag at the frame rows.
pub(crate) fn lag_curves(models: &[LagOutcome], frame: &Frame) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut fitted: Vec<_> = models.iter().filter_map(LagOutcome::fitted).collect();
    fitted.sort_by_key(|m| m.lag);
    if fitted.is_empty() {
        return Err(Error::Estimation("no lag model was fitted".into()));
    }
    let lags = fitted.iter().map(|m| m.lag).collect();
    let curves = fitted
        .iter()
        .map(|m| m.correlation(frame))
        .collect::<Result<Vec<_>>>()?;
    Ok((lags, curves))
}

/// `d_t = argmax_k c_k(z_t)` over the fitted lags at the given grid rows.
pub fn estimate_lag_time(models: &[LagOutcome], z: &CovariateSet, rows: &[usize]) -> Result<LagTimeEstimate> {
    let frame = Frame::from_covariates(z, rows);
    let (lags, curves) = lag_curves(models, &frame)?;
    let idx = argmax_index(&curves, rows.len());
    let mut lag_time = Vec::with_capacity(rows.len());
    let mut c_max = Vec::with_capacity(rows.len());
    for (i, j) in idx.iter().enumerate() {
        let j = j.ok_or_else(|| Error::Estimation(format!("no finite correlation at grid row {}", rows[i])))?;
        lag_time.push(lags[j]);
        c_max.push(curves[j][i]);
    }
    Ok(LagTimeEstimate {
        rows: rows.to_vec(),
        lags,
        curves,
        lag_time,
        c_max,
        bounds: Vec::new(),
    })
}
