//! Sensor cleaning: quality-flag removal, wiper spikes, aggregation and
//! linear gap filling. Every operation keeps the grid and only touches
//! the mask (and values at filled positions).

use crate::error::{Error, Result};
use crate::series::{QualityFlag, TimeSeries};

/// Masks every position flagged [`QualityFlag::RangeFlag`].
pub fn remove_range_flagged(series: &TimeSeries, flags: &[QualityFlag]) -> Result<TimeSeries> {
    if flags.len() != series.len() {
        return Err(Error::Alignment(format!(
            "{} flags for a series of length {}",
            flags.len(),
            series.len()
        )));
    }
    let mut out = series.clone();
    for (i, f) in flags.iter().enumerate() {
        if *f == QualityFlag::RangeFlag {
            out.mask_at(i);
        }
    }
    Ok(out)
}

/// Residue class of the wiper cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WiperPhase {
    Fixed(usize),
    Auto,
}

/// Result of wiper removal, with the phase that was applied.
#[derive(Debug, Clone)]
pub struct WiperRemoval {
    pub series: TimeSeries,
    pub phase: usize,
    pub removed: usize,
}

/// Masks every position `p` with `p % period == phase`.
///
/// With [`WiperPhase::Auto`] the phase is the residue class whose values sit
/// furthest (mean absolute deviation) from a centered rolling median. When
/// every class scores the same the phase is ambiguous and an estimation
/// error is returned; partial ties go to the smallest residue.
pub fn remove_wiper_anomalies(series: &TimeSeries, period: usize, phase: WiperPhase) -> Result<WiperRemoval> {
    if period < 2 {
        return Err(Error::Config(format!("wiper period must be at least 2, got {period}")));
    }
    let phase = match phase {
        WiperPhase::Fixed(p) if p < period => p,
        WiperPhase::Fixed(p) => {
            return Err(Error::Config(format!(
                "wiper phase {p} is not below the period {period}"
            )));
        }
        WiperPhase::Auto => detect_wiper_phase(series, period)?,
    };
    let mut out = series.clone();
    let mut removed = 0;
    for i in (phase..series.len()).step_by(period) {
        if !out.is_missing(i) {
            removed += 1;
        }
        out.mask_at(i);
    }
    Ok(WiperRemoval {
        series: out,
        phase,
        removed,
    })
}

/// Scores each residue class by its mean absolute deviation from a centered
/// rolling median (odd window of `period`, or `period + 1` when even).
pub fn wiper_phase_scores(series: &TimeSeries, period: usize) -> Vec<f64> {
    let half = period / 2;
    let n = series.len();
    let mut sum = vec![0.0; period];
    let mut count = vec![0usize; period];
    let mut window = Vec::with_capacity(2 * half + 1);
    for i in 0..n {
        let Some(v) = series.get(i) else { continue };
        window.clear();
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        window.extend((lo..=hi).filter_map(|j| series.get(j)));
        if window.len() < 3 {
            continue;
        }
        let med = median_in_place(&mut window);
        sum[i % period] += (v - med).abs();
        count[i % period] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, c)| if *c == 0 { f64::NEG_INFINITY } else { s / *c as f64 })
        .collect()
}

fn detect_wiper_phase(series: &TimeSeries, period: usize) -> Result<usize> {
    if series.observed_count() < 2 * period {
        return Err(Error::Estimation(format!(
            "wiper phase detection needs at least {} observed values, found {}",
            2 * period,
            series.observed_count()
        )));
    }
    let scores = wiper_phase_scores(series, period);
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * best.abs().max(1.0);
    let tied: Vec<usize> = (0..period).filter(|r| (scores[*r] - best).abs() <= tol).collect();
    if tied.len() == period {
        return Err(Error::Estimation(
            "wiper phase is ambiguous: every residue class scores the same".into(),
        ));
    }
    Ok(tied[0])
}

fn median_in_place(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Bin means on a coarser grid of spacing `target_step`.
///
/// Bins are aligned to epoch multiples of `target_step`, closed on the left
/// and labeled by their left edge. A bin with no observed member is masked.
pub fn aggregate(series: &TimeSeries, target_step: i64) -> Result<TimeSeries> {
    let step = series.step();
    if target_step <= 0 || target_step % step != 0 {
        return Err(Error::Alignment(format!(
            "target spacing {target_step}s is not a positive multiple of {step}s"
        )));
    }
    if target_step == step {
        return Ok(series.clone());
    }
    let first_bin = series.start().div_euclid(target_step);
    let last_bin = series.end().div_euclid(target_step);
    let nbins = (last_bin - first_bin + 1) as usize;
    let mut sum = vec![0.0; nbins];
    let mut count = vec![0usize; nbins];
    for (i, v) in series.observed() {
        let b = (series.timestamp(i).div_euclid(target_step) - first_bin) as usize;
        sum[b] += v;
        count[b] += 1;
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(s, c)| if *c == 0 { None } else { Some(s / *c as f64) })
        .collect::<Vec<_>>();
    TimeSeries::from_options(series.name(), first_bin * target_step, target_step, &values)
}

/// Series with gap-filled positions marked.
#[derive(Debug, Clone)]
pub struct FilledSeries {
    pub series: TimeSeries,
    /// True where a value was imputed.
    pub imputed: Vec<bool>,
}

impl FilledSeries {
    pub fn imputed_count(&self) -> usize {
        self.imputed.iter().filter(|b| **b).count()
    }
}

/// Straight-line interpolation across interior gaps.
///
/// Leading and trailing gaps stay masked. Observed values are untouched.
pub fn linear_interpolate(series: &TimeSeries) -> Result<FilledSeries> {
    let obs: Vec<(usize, f64)> = series.observed().collect();
    if obs.len() < 2 {
        return Err(Error::Estimation(format!(
            "linear interpolation of `{}` needs two observed values, found {}",
            series.name(),
            obs.len()
        )));
    }
    let mut out = series.clone();
    let mut imputed = vec![false; series.len()];
    for w in obs.windows(2) {
        let (i0, v0) = w[0];
        let (i1, v1) = w[1];
        let span = (i1 - i0) as f64;
        for (j, flag) in imputed.iter_mut().enumerate().take(i1).skip(i0 + 1) {
            let frac = (j - i0) as f64 / span;
            out.set_value(j, v0 + frac * (v1 - v0));
            *flag = true;
        }
    }
    Ok(FilledSeries { series: out, imputed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(vals: &[Option<f64>]) -> TimeSeries {
        TimeSeries::from_options("s", 0, 60, vals).unwrap()
    }

    fn full(vals: &[f64]) -> TimeSeries {
        TimeSeries::from_values("s", 0, 60, vals.to_vec()).unwrap()
    }

    #[test]
    fn range_flags_mask_positions() {
        let x = full(&[1.0; 10]);
        let mut flags = vec![QualityFlag::Clean; 10];
        assert_eq!(remove_range_flagged(&x, &flags).unwrap(), x);
        flags[3] = QualityFlag::RangeFlag;
        flags[7] = QualityFlag::RangeFlag;
        flags[5] = QualityFlag::Manual;
        let out = remove_range_flagged(&x, &flags).unwrap();
        let masked: Vec<usize> = (0..10).filter(|i| out.is_missing(*i)).collect();
        assert_eq!(masked, vec![3, 7]);
    }

    #[test]
    fn all_flagged_gives_fully_masked_series() {
        let x = full(&[1.0; 4]);
        let out = remove_range_flagged(&x, &[QualityFlag::RangeFlag; 4]).unwrap();
        assert_eq!(out.observed_count(), 0);
        assert!(linear_interpolate(&out).is_err());
    }

    #[test]
    fn flag_length_mismatch() {
        let x = full(&[1.0; 4]);
        assert!(matches!(
            remove_range_flagged(&x, &[QualityFlag::Clean; 3]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn fixed_wiper_phase() {
        let x = full(&[1.0; 10]);
        let out = remove_wiper_anomalies(&x, 5, WiperPhase::Fixed(0)).unwrap();
        let masked: Vec<usize> = (0..10).filter(|i| out.series.is_missing(*i)).collect();
        assert_eq!(masked, vec![0, 5]);
        assert_eq!(out.removed, 2);
    }

    #[test]
    fn constant_series_phase_is_ambiguous() {
        let x = full(&[2.0; 50]);
        assert!(matches!(
            remove_wiper_anomalies(&x, 5, WiperPhase::Auto),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn spikes_at_residue_three_are_found() {
        let vals: Vec<f64> = (0..200)
            .map(|i| {
                let base = 10.0 + (i as f64 * 0.05).sin();
                if i % 5 == 3 {
                    base + 100.0
                } else {
                    base
                }
            })
            .collect();
        let out = remove_wiper_anomalies(&full(&vals), 5, WiperPhase::Auto).unwrap();
        assert_eq!(out.phase, 3);
        assert_eq!(out.removed, 40);
    }

    #[test]
    fn auto_phase_needs_data() {
        let x = s(&[Some(1.0), None, Some(2.0), None, None, None, None, None, None, None]);
        assert!(matches!(
            remove_wiper_anomalies(&x, 5, WiperPhase::Auto),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn aggregate_partial_bin() {
        let x = s(&[Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0), None]);
        let out = aggregate(&x, 300).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.get(0), Some(3.0));
        assert!(out.is_missing(1));
        assert_eq!(out.step(), 300);
    }

    #[test]
    fn aggregate_identity_and_bad_multiple() {
        let x = full(&[1.0, 2.0, 3.0]);
        assert_eq!(aggregate(&x, 60).unwrap(), x);
        assert!(matches!(aggregate(&x, 90), Err(Error::Alignment(_))));
    }

    #[test]
    fn aggregate_only_empty_bin_masked() {
        let mut vals: Vec<Option<f64>> = (0..15).map(|i| Some(i as f64)).collect();
        for v in &mut vals[5..10] {
            *v = None;
        }
        let out = aggregate(&s(&vals), 300).unwrap();
        assert_eq!(out.get(0), Some(2.0));
        assert!(out.is_missing(1));
        assert_eq!(out.get(2), Some(12.0));
    }

    #[test]
    fn interpolation_examples() {
        let out = linear_interpolate(&s(&[Some(1.0), None, Some(3.0)])).unwrap();
        assert_eq!(out.series.get(1), Some(2.0));
        assert_eq!(out.imputed, vec![false, true, false]);

        let out = linear_interpolate(&s(&[None, Some(5.0), Some(5.0), None])).unwrap();
        assert!(out.series.is_missing(0));
        assert!(out.series.is_missing(3));
        assert_eq!(out.imputed_count(), 0);

        let out = linear_interpolate(&s(&[Some(0.0), None, None, Some(9.0)])).unwrap();
        assert_eq!(
            out.series.to_options(),
            vec![Some(0.0), Some(3.0), Some(6.0), Some(9.0)]
        );
    }
}
