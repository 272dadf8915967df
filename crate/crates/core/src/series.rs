//! Regular-grid time series with explicit missingness.
//!
//! Missing observations stay on the grid with their mask bit set, so lag
//! arithmetic `t - k` is plain index arithmetic everywhere in the crate.
//! Timestamps are integer epoch seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A univariate series on a regular grid `start + i * step`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    start: i64,
    step: i64,
    values: Vec<f64>,
    mask: Vec<bool>,
}

/// Equal when names, grids and masks match and values agree bit for bit.
impl PartialEq for TimeSeries {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.start == other.start
            && self.step == other.step
            && self.mask == other.mask
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl TimeSeries {
    /// Builds a series. Non-finite values are masked.
    pub fn new(name: impl Into<String>, start: i64, step: i64, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if step <= 0 {
            return Err(Error::Alignment(format!("grid spacing must be positive, got {step}")));
        }
        if values.is_empty() {
            return Err(Error::Range("a series needs at least one grid position".into()));
        }
        if values.len() != mask.len() {
            return Err(Error::Alignment(format!(
                "{} values but {} mask entries",
                values.len(),
                mask.len()
            )));
        }
        let mut values = values;
        let mut mask = mask;
        for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
            if !v.is_finite() {
                *m = true;
            }
            if *m {
                *v = f64::NAN;
            }
        }
        Ok(Self {
            name: name.into(),
            start,
            step,
            values,
            mask,
        })
    }

    /// A fully observed series; NaN entries become missing.
    pub fn from_values(name: impl Into<String>, start: i64, step: i64, values: Vec<f64>) -> Result<Self> {
        let mask = values.iter().map(|v| !v.is_finite()).collect();
        Self::new(name, start, step, values, mask)
    }

    /// A series from optional values (`None` = missing).
    pub fn from_options(name: impl Into<String>, start: i64, step: i64, values: &[Option<f64>]) -> Result<Self> {
        let mask = values.iter().map(|v| v.is_none()).collect();
        let vals = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Self::new(name, start, step, vals, mask)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> i64 {
        self.start + i as i64 * self.step
    }

    pub fn timestamps(&self) -> Vec<i64> {
        (0..self.len()).map(|i| self.timestamp(i)).collect()
    }

    /// Last grid timestamp.
    pub fn end(&self) -> i64 {
        self.timestamp(self.len() - 1)
    }

    /// Value at `i`, or `None` when masked.
    pub fn get(&self, i: usize) -> Option<f64> {
        if self.mask[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Raw value buffer. Masked positions hold NaN.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    /// Iterator over `(index, value)` of observed positions.
    pub fn observed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, m))| !**m)
            .map(|(i, (v, _))| (i, *v))
    }

    pub fn to_options(&self) -> Vec<Option<f64>> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// Same grid, with position `i` masked.
    pub(crate) fn mask_at(&mut self, i: usize) {
        self.mask[i] = true;
        self.values[i] = f64::NAN;
    }

    pub(crate) fn set_value(&mut self, i: usize, v: f64) {
        if v.is_finite() {
            self.mask[i] = false;
            self.values[i] = v;
        } else {
            self.mask_at(i);
        }
    }

    /// Index of `timestamp` on this grid, if it is a grid point.
    pub fn index_of(&self, timestamp: i64) -> Option<usize> {
        let off = timestamp - self.start;
        if off < 0 || off % self.step != 0 {
            return None;
        }
        let i = (off / self.step) as usize;
        (i < self.len()).then_some(i)
    }

    /// Sub-series covering grid indices `from..to`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(Error::Range(format!(
                "invalid slice {from}..{to} of length {}",
                self.len()
            )));
        }
        Self::new(
            self.name.clone(),
            self.timestamp(from),
            self.step,
            self.values[from..to].to_vec(),
            self.mask[from..to].to_vec(),
        )
    }

    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        self.start == other.start && self.step == other.step && self.len() == other.len()
    }
}

/// Per-position quality flag attached to one variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityFlag {
    Clean,
    RangeFlag,
    Wiper,
    Manual,
}

impl std::str::FromStr for QualityFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "clean" => Ok(QualityFlag::Clean),
            "range_flag" => Ok(QualityFlag::RangeFlag),
            "wiper" => Ok(QualityFlag::Wiper),
            "manual" => Ok(QualityFlag::Manual),
            other => Err(Error::Schema(format!("unknown quality flag `{other}`"))),
        }
    }
}

/// Named covariate columns sharing a single grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSet {
    columns: Vec<TimeSeries>,
}

impl CovariateSet {
    pub fn new(columns: Vec<TimeSeries>) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::Schema("a covariate set needs at least one column".into()))?;
        for c in &columns[1..] {
            if !c.same_grid(first) {
                return Err(Error::Alignment(format!(
                    "column `{}` is not on the grid of `{}`",
                    c.name(),
                    first.name()
                )));
            }
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name() == c.name()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name())));
            }
        }
        Ok(Self { columns })
    }

    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn start(&self) -> i64 {
        self.columns[0].start()
    }

    pub fn step(&self) -> i64 {
        self.columns[0].step()
    }

    pub fn timestamp(&self, i: usize) -> i64 {
        self.columns[0].timestamp(i)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name()).collect()
    }

    pub fn columns(&self) -> &[TimeSeries] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&TimeSeries> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn into_columns(self) -> Vec<TimeSeries> {
        self.columns
    }

    /// Keeps only the named columns, in the order given.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                self.column(n)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("no column named `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cols)
    }

    /// True when every named column is observed at `i`.
    pub fn row_complete(&self, i: usize, names: &[&str]) -> bool {
        names.iter().all(|n| self.column(n).is_some_and(|c| !c.is_missing(i)))
    }

    pub fn accepts(&self, series: &TimeSeries) -> bool {
        self.columns[0].same_grid(series)
    }
}

/// Intersects the grids of several series and returns them as one set.
///
/// Every input must share the grid spacing and phase. Positions missing
/// in a source stay masked in that column only.
pub fn align(series: &[&TimeSeries]) -> Result<CovariateSet> {
    let first = series
        .first()
        .ok_or_else(|| Error::Alignment("nothing to align".into()))?;
    let step = first.step();
    for s in series {
        if s.step() != step {
            return Err(Error::Alignment(format!(
                "`{}` has spacing {}s but `{}` has {}s",
                s.name(),
                s.step(),
                first.name(),
                step
            )));
        }
        if (s.start() - first.start()).rem_euclid(step) != 0 {
            return Err(Error::Alignment(format!(
                "`{}` is offset from the grid of `{}`",
                s.name(),
                first.name()
            )));
        }
    }
    let lo = series.iter().map(|s| s.start()).max().unwrap();
    let hi = series.iter().map(|s| s.end()).min().unwrap();
    if lo > hi {
        return Err(Error::Range("the inputs do not overlap in time".into()));
    }
    let cols = series
        .iter()
        .map(|s| {
            let from = s.index_of(lo).unwrap();
            let to = s.index_of(hi).unwrap() + 1;
            s.slice(from, to)
        })
        .collect::<Result<Vec<_>>>()?;
    CovariateSet::new(cols)
}
