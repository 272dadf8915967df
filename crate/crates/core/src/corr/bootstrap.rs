use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corr::lagtime::{argmax_index, lag_curves};
use crate::corr::{CondCorrModel, LagOutcome};
use crate::error::{Error, Result};
use crate::gam::{fit_gam, Family, Frame, SmoothModel};
use crate::series::CovariateSet;

pub const DEFAULT_REPLICATES: usize = 1000;
/// Largest share of failed replicates tolerated.
const MAX_DROP_SHARE: f64 = 0.05;
const BURN_IN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    /// Two-sided levels; `0.05` gives a 95% interval.
    pub alphas: Vec<f64>,
    pub seed: u64,
    /// Start the residual recursion from the process mean with a burn-in
    /// instead of the first observed residuals.
    pub burn_in: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            alphas: vec![0.20, 0.05],
            seed: 0,
            burn_in: false,
        }
    }
}

/// Integer lag bounds at one level, one entry per evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct LagBounds {
    pub alpha: f64,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub bounds: Vec<LagBounds>,
    /// Replicates that produced a lag-time path.
    pub completed: usize,
    pub dropped: usize,
}

/// Centered one-step innovations of the residual AR model.
fn innovations(m: &CondCorrModel) -> Vec<f64> {
    let ar = &m.residual_ar;
    let e = &m.residuals;
    let p = ar.order;
    let mut z: Vec<f64> = (p..e.len())
        .filter(|t| (0..=p).all(|i| e[t - i].is_finite()))
        .map(|t| {
            let pred: f64 = ar.coefficients.iter().enumerate().map(|(i, c)| c * e[t - 1 - i]).sum();
            e[t] - ar.intercept - pred
        })
        .collect();
    if z.is_empty() {
        z = e.iter().copied().filter(|v| v.is_finite()).collect();
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    z.iter_mut().for_each(|v| *v -= mean);
    z
}

/// One bootstrap residual path over the grid span of the training rows.
fn residual_path(m: &CondCorrModel, innov: &[f64], burn_in: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ar = &m.residual_ar;
    let p = ar.order;
    let first = m.rows[0];
    let last = *m.rows.last().expect("fitted model has rows");
    let span = last - first + 1;
    let draw = |rng: &mut ChaCha8Rng| innov[rng.random_range(0..innov.len())];
    let step = |hist: &[f64], z: f64| {
        let n = hist.len();
        ar.intercept
            + ar.coefficients
                .iter()
                .enumerate()
                .map(|(i, c)| c * hist[n - 1 - i])
                .sum::<f64>()
            + z
    };
    let mut e: Vec<f64> = Vec::with_capacity(span + BURN_IN + p);
    let history = if burn_in {
        e.resize(p, ar.mean());
        for _ in 0..BURN_IN {
            let v = step(&e, draw(rng));
            e.push(v);
        }
        e.drain(..e.len() - p);
        p
    } else {
        e.extend(m.residuals.iter().copied().filter(|v| v.is_finite()).take(p.min(span)));
        0
    };
    while e.len() < span + history {
        let v = step(&e, draw(rng));
        e.push(v);
    }
    e.split_off(history)
}

/// Refits one lag on a bootstrap response built from a resampled residual path.
fn refit(m: &CondCorrModel, innov: &[f64], burn_in: bool, rng: &mut ChaCha8Rng) -> Result<SmoothModel> {
    let path = residual_path(m, innov, burn_in, rng);
    let first = m.rows[0];
    let y: Vec<f64> = m
        .rows
        .iter()
        .zip(&m.model.fitted)
        .map(|(t, f)| f + path[t - first])
        .collect();
    fit_gam(&y, &m.frame, &m.terms, Family::GaussianCorrLink, None)
}

/// Empirical quantile of sorted integers: the smallest value whose
/// cumulative share reaches `q`.
fn quantile(sorted: &[u16], q: f64) -> usize {
    let m = sorted.len() as f64;
    let idx = ((q * m - 1e-9).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx] as usize
}

/// Sieve-bootstrap intervals for the lag time at the given grid rows.
///
/// Each replicate resamples the centered innovations of every lag's residual
/// AR model, rebuilds the residual path by the AR recursion, refits every lag
/// on fitted values plus that path and takes the per-row argmax. Replicate
/// `b` draws from its own ChaCha stream `b` under `seed`, so results do not
/// depend on scheduling. Replicates with a failed refit are dropped; more
/// than 5% dropped is an error.
pub fn sieve_bootstrap_ci(
    models: &[LagOutcome],
    z: &CovariateSet,
    rows: &[usize],
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if opts.replicates == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    if let Some(a) = opts.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Config(format!("interval level {a} is outside (0, 1)")));
    }
    let frame = Frame::from_covariates(z, rows);
    let (lags, _) = lag_curves(models, &frame)?;
    let mut fitted: Vec<&CondCorrModel> = models.iter().filter_map(LagOutcome::fitted).collect();
    fitted.sort_by_key(|m| m.lag);
    let innov: Vec<Vec<f64>> = fitted.iter().map(|m| innovations(m)).collect();

    let paths: Vec<Option<Vec<u16>>> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let mut curves = Vec::with_capacity(fitted.len());
            for (m, zeta) in fitted.iter().zip(&innov) {
                let model = refit(m, zeta, opts.burn_in, &mut rng).ok()?;
                curves.push(model.predict_response(&frame).ok()?);
            }
            argmax_index(&curves, rows.len())
                .into_iter()
                .map(|j| j.map(|j| lags[j] as u16))
                .collect()
        })
        .collect();

    let kept: Vec<Vec<u16>> = paths.into_iter().flatten().collect();
    let dropped = opts.replicates - kept.len();
    if kept.is_empty() || dropped as f64 > MAX_DROP_SHARE * opts.replicates as f64 {
        return Err(Error::Bootstrap {
            dropped,
            requested: opts.replicates,
        });
    }

    let mut bounds: Vec<LagBounds> = opts
        .alphas
        .iter()
        .map(|a| LagBounds {
            alpha: *a,
            lower: Vec::with_capacity(rows.len()),
            upper: Vec::with_capacity(rows.len()),
        })
        .collect();
    let mut column = Vec::with_capacity(kept.len());
    for i in 0..rows.len() {
        column.clear();
        column.extend(kept.iter().map(|r| r[i]));
        column.sort_unstable();
        for b in &mut bounds {
            b.lower.push(quantile(&column, b.alpha / 2.0));
            b.upper.push(quantile(&column, 1.0 - b.alpha / 2.0));
        }
    }
    Ok(BootstrapResult {
        bounds,
        completed: kept.len(),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_is_an_order_statistic() {
        let v: Vec<u16> = (1..=200).collect();
        assert_eq!(quantile(&v, 0.025), 5);
        assert_eq!(quantile(&v, 0.975), 195);
        assert_eq!(quantile(&v, 0.0), 1);
        assert_eq!(quantile(&v, 1.0), 200);
        assert_eq!(quantile(&[4], 0.1), 4);
    }
}
