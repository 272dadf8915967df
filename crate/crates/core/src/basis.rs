//! Univariate smooth bases with second-derivative roughness penalties.
//!
//! The natural cubic basis is parameterized by the function values at the
//! knots (cardinal form): a coefficient vector `beta` describes the natural
//! interpolating spline through `(knot_j, beta_j)`. With knot spacings `h`,
//! the second derivatives at the knots are `delta = [0; Bm^-1 D beta; 0]`
//! and the exact roughness is `beta' D' Bm^-1 D beta`.
//!
//! Outside `[lo, hi]` every spline basis continues linearly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    NaturalCubic,
    CubicBspline,
    /// A single unpenalized centered column, for parametric covariates
    /// such as Fourier terms.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotPlacement {
    Quantile,
    Uniform,
}

/// How to build the smooth for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Number of basis functions.
    pub k: usize,
    pub knots: KnotPlacement,
    /// Covariate range. Defaults to the data range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
    /// Fixed smoothing parameter; `None` selects it by GCV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

pub const DEFAULT_K: usize = 10;

impl Default for BasisSpec {
    fn default() -> Self {
        Self::natural_cubic(DEFAULT_K)
    }
}

impl BasisSpec {
    pub fn natural_cubic(k: usize) -> Self {
        Self {
            kind: BasisKind::NaturalCubic,
            k,
            knots: KnotPlacement::Quantile,
            range: None,
            lambda: None,
        }
    }

    pub fn cubic_bspline(k: usize) -> Self {
        Self {
            kind: BasisKind::CubicBspline,
            ..Self::natural_cubic(k)
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: BasisKind::Linear,
            k: 1,
            ..Self::natural_cubic(1)
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_knots(mut self, knots: KnotPlacement) -> Self {
        self.knots = knots;
        self
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some((lo, hi));
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BasisKind::NaturalCubic if self.k < 3 => {
                return Err(Error::Basis(format!(
                    "natural cubic basis needs k >= 3, got {}",
                    self.k
                )));
            }
            BasisKind::CubicBspline if self.k < 4 => {
                return Err(Error::Basis(format!(
                    "cubic B-spline basis needs k >= 4, got {}",
                    self.k
                )));
            }
            _ => {}
        }
        if let Some((lo, hi)) = self.range {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Basis(format!("invalid covariate range [{lo}, {hi}]")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::Basis(format!(
                    "smoothing parameter must be finite and >= 0, got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// A constructed basis: knots fixed, ready to evaluate anywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "BasisRecord", into = "BasisRecord")]
pub struct SmoothBasis {
    kind: BasisKind,
    knots: Vec<f64>,
    /// Centering offset for linear terms; unused otherwise.
    center: f64,
    /// Natural cubic: maps values at knots to second derivatives at knots.
    second_deriv: Option<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct BasisRecord {
    kind: BasisKind,
    knots: Vec<f64>,
    center: f64,
}

impl From<BasisRecord> for SmoothBasis {
    fn from(r: BasisRecord) -> Self {
        SmoothBasis::from_parts(r.kind, r.knots, r.center)
    }
}

impl From<SmoothBasis> for BasisRecord {
    fn from(b: SmoothBasis) -> Self {
        BasisRecord {
            kind: b.kind,
            knots: b.knots,
            center: b.center,
        }
    }
}

impl PartialEq for SmoothBasis {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.knots == other.knots && self.center.to_bits() == other.center.to_bits()
    }
}

/// Evaluation matrix and penalty for a set of covariate values.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub basis: SmoothBasis,
    /// n x k evaluation matrix.
    pub design: DMatrix<f64>,
    /// k x k roughness penalty.
    pub penalty: DMatrix<f64>,
}

/// Builds a basis for `spec` from the covariate values `x` and evaluates it.
pub fn build_basis(spec: &BasisSpec, x: &[f64]) -> Result<BasisMatrix> {
    let basis = SmoothBasis::fit(spec, x)?;
    let design = basis.design(x);
    let penalty = basis.penalty();
    Ok(BasisMatrix { basis, design, penalty })
}

impl SmoothBasis {
    /// Places knots for `spec` using the covariate values `x`.
    pub fn fit(spec: &BasisSpec, x: &[f64]) -> Result<Self> {
        spec.validate()?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Basis("covariate values must be finite".into()));
        }
        if x.is_empty() {
            return Err(Error::Basis("no covariate values".into()));
        }
        if spec.kind == BasisKind::Linear {
            let center = x.iter().sum::<f64>() / x.len() as f64;
            return Ok(Self::from_parts(BasisKind::Linear, Vec::new(), center));
        }
        let (dmin, dmax) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let (lo, hi) = spec.range.unwrap_or((dmin, dmax));
        if !(lo < hi) {
            return Err(Error::Basis(format!("degenerate covariate range [{lo}, {hi}]")));
        }
        let mut uniq: Vec<f64> = x.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        let needed = match spec.kind {
            BasisKind::NaturalCubic => spec.k,
            _ => spec.k - 2,
        };
        if spec.knots == KnotPlacement::Quantile && uniq.len() < spec.k {
            return Err(Error::Basis(format!(
                "{} distinct covariate values, need at least {}",
                uniq.len(),
                spec.k
            )));
        }
        // number of distinct knot locations including both ends
        let mut locs = match spec.knots {
            KnotPlacement::Uniform => (0..needed)
                .map(|j| lo + (hi - lo) * j as f64 / (needed - 1) as f64)
                .collect::<Vec<_>>(),
            KnotPlacement::Quantile => (0..needed)
                .map(|j| quantile_sorted(&uniq, j as f64 / (needed - 1) as f64))
                .collect(),
        };
        locs[0] = lo;
        locs[needed - 1] = hi;
        if locs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Basis("knot locations are not strictly increasing".into()));
        }
        let knots = match spec.kind {
            BasisKind::NaturalCubic => locs,
            _ => {
                let mut t = vec![lo; 3];
                t.extend_from_slice(&locs);
                t.extend_from_slice(&[hi; 3]);
                t
            }
        };
        Ok(Self::from_parts(spec.kind, knots, 0.0))
    }

    /// Rebuilds a basis from stored knots.
    pub fn from_parts(kind: BasisKind, knots: Vec<f64>, center: f64) -> Self {
        let second_deriv = (kind == BasisKind::NaturalCubic).then(|| natural_second_deriv_map(&knots));
        Self {
            kind,
            knots,
            center,
            second_deriv,
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        match self.kind {
            BasisKind::NaturalCubic => self.knots.len(),
            BasisKind::CubicBspline => self.knots.len() - 4,
            BasisKind::Linear => 1,
        }
    }

    /// Covariate range the basis was built on.
    pub fn range(&self) -> (f64, f64) {
        match self.kind {
            BasisKind::Linear => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (self.knots[0], *self.knots.last().unwrap()),
        }
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::zeros(x.len(), k);
        let mut row = vec![0.0; k];
        for (i, xi) in x.iter().enumerate() {
            self.eval_into(*xi, &mut row);
            for j in 0..k {
                m[(i, j)] = row[j];
            }
        }
        m
    }

    /// Basis function values at `x`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.dim()];
        self.eval_into(x, &mut row);
        row
    }

    fn eval_into(&self, x: f64, row: &mut [f64]) {
        match self.kind {
            BasisKind::Linear => row[0] = x - self.center,
            BasisKind::NaturalCubic => self.eval_natural(x, row),
            BasisKind::CubicBspline => self.eval_bspline(x, row),
        }
    }

    /// Second derivatives of the basis functions at `x` (zero outside the range).
    pub fn eval_second_derivative(&self, x: f64) -> Vec<f64> {
        let k = self.dim();
        let (lo, hi) = self.range();
        if self.kind == BasisKind::Linear || x < lo || x > hi {
            return vec![0.0; k];
        }
        match self.kind {
            BasisKind::NaturalCubic => {
                let f = self.second_deriv.as_ref().unwrap();
                let j = interval(&self.knots, x);
                let h = self.knots[j + 1] - self.knots[j];
                let wl = (self.knots[j + 1] - x) / h;
                let wr = (x - self.knots[j]) / h;
                (0..k).map(|c| wl * f[(j, c)] + wr * f[(j + 1, c)]).collect()
            }
            _ => bspline_derivs(&self.knots, 3, x, 2),
        }
    }

    /// Integrated squared second derivative penalty, k x k.
    pub fn penalty(&self) -> DMatrix<f64> {
        match self.kind {
            BasisKind::Linear => DMatrix::zeros(1, 1),
            BasisKind::NaturalCubic => natural_penalty(&self.knots),
            BasisKind::CubicBspline => self.bspline_penalty(),
        }
    }

    fn eval_natural(&self, x: f64, row: &mut [f64]) {
        let t = &self.knots;
        let k = t.len();
        let f = self.second_deriv.as_ref().unwrap();
        row.iter_mut().for_each(|v| *v = 0.0);
        if x < t[0] {
            // f(x0) + f'(x0) (x - x0); delta_0 = 0
            let h = t[1] - t[0];
            let d = x - t[0];
            row[0] += 1.0 - d / h;
            row[1] += d / h;
            for (c, r) in row.iter_mut().enumerate() {
                *r -= d * h / 6.0 * f[(1, c)];
            }
            return;
        }
        if x > t[k - 1] {
            let h = t[k - 1] - t[k - 2];
            let d = x - t[k - 1];
            row[k - 1] += 1.0 + d / h;
            row[k - 2] -= d / h;
            for (c, r) in row.iter_mut().enumerate() {
                *r += d * h / 6.0 * f[(k - 2, c)];
            }
            return;
        }
        let j = interval(t, x);
        let h = t[j + 1] - t[j];
        let am = (t[j + 1] - x) / h;
        let ap = (x - t[j]) / h;
        let cm = ((t[j + 1] - x).powi(3) / h - h * (t[j + 1] - x)) / 6.0;
        let cp = ((x - t[j]).powi(3) / h - h * (x - t[j])) / 6.0;
        row[j] += am;
        row[j + 1] += ap;
        for (c, r) in row.iter_mut().enumerate() {
            *r += cm * f[(j, c)] + cp * f[(j + 1, c)];
        }
    }

    fn eval_bspline(&self, x: f64, row: &mut [f64]) {
        let (lo, hi) = self.range();
        if x < lo || x > hi {
            let edge = if x < lo { lo } else { hi };
            let v = bspline_derivs(&self.knots, 3, edge, 0);
            let d = bspline_derivs(&self.knots, 3, edge, 1);
            for (j, r) in row.iter_mut().enumerate() {
                *r = v[j] + (x - edge) * d[j];
            }
            return;
        }
        let v = bspline_derivs(&self.knots, 3, x, 0);
        row.copy_from_slice(&v);
    }

    fn bspline_penalty(&self) -> DMatrix<f64> {
        // second derivatives are linear on each knot span; two-point
        // Gauss-Legendre integrates their products exactly
        let k = self.dim();
        let mut s = DMatrix::zeros(k, k);
        let g = 1.0 / 3f64.sqrt();
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for node in [mid - half * g, mid + half * g] {
                let d2 = bspline_derivs(&self.knots, 3, node, 2);
                for i in 0..k {
                    if d2[i] == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        s[(i, j)] += half * d2[i] * d2[j];
                    }
                }
            }
        }
        s
    }
}

/// Knot interval containing `x` (clamped to the last interval at the top).
fn interval(t: &[f64], x: f64) -> usize {
    let n = t.len();
    match t.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

/// Tridiagonal pieces of the natural spline relations: `D` is (k-2) x k,
/// `Bm` is (k-2) x (k-2).
fn natural_pieces(t: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut d = DMatrix::zeros(k - 2, k);
    let mut bm = DMatrix::zeros(k - 2, k - 2);
    for i in 0..k - 2 {
        d[(i, i)] = 1.0 / h[i];
        d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
        d[(i, i + 2)] = 1.0 / h[i + 1];
        bm[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i + 1 < k - 2 {
            bm[(i, i + 1)] = h[i + 1] / 6.0;
            bm[(i + 1, i)] = h[i + 1] / 6.0;
        }
    }
    (d, bm)
}

fn natural_second_deriv_map(t: &[f64]) -> DMatrix<f64> {
    let k = t.len();
    let (d, bm) = natural_pieces(t);
    let inner = bm
        .cholesky()
        .expect("spline band matrix is positive definite")
        .solve(&d);
    let mut f = DMatrix::zeros(k, k);
    f.view_mut((1, 0), (k - 2, k)).copy_from(&inner);
    f
}

fn natural_penalty(t: &[f64]) -> DMatrix<f64> {
    let (d, bm) = natural_pieces(t);
    let inner = bm
        .cholesky()
        .expect("spline band matrix is positive definite")
        .solve(&d);
    let s = d.transpose() * inner;
    // exact symmetry
    (&s + s.transpose()) * 0.5
}

/// Cox-de Boor values (or derivatives of order `deriv`) of all B-splines of
/// `degree` on knot vector `t` at `x`.
fn bspline_derivs(t: &[f64], degree: usize, x: f64, deriv: usize) -> Vec<f64> {
    if deriv == 0 {
        return bspline_values(t, degree, x);
    }
    if deriv > degree {
        return vec![0.0; t.len() - degree - 1];
    }
    let lower = bspline_derivs(t, degree - 1, x, deriv - 1);
    let p = degree as f64;
    (0..t.len() - degree - 1)
        .map(|i| {
            let a = t[i + degree] - t[i];
            let b = t[i + degree + 1] - t[i + 1];
            let left = if a > 0.0 { lower[i] / a } else { 0.0 };
            let right = if b > 0.0 { lower[i + 1] / b } else { 0.0 };
            p * (left - right)
        })
        .collect()
}

fn bspline_values(t: &[f64], degree: usize, x: f64) -> Vec<f64> {
    let m = t.len();
    let last = *t.last().unwrap();
    // degree-0 indicator; the top end belongs to the last non-empty span
    let mut n: Vec<f64> = (0..m - 1)
        .map(|i| {
            let inside = if x == last {
                t[i] < t[i + 1] && t[i + 1] == last
            } else {
                t[i] <= x && x < t[i + 1]
            };
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for d in 1..=degree {
        let next: Vec<f64> = (0..m - d - 1)
            .map(|i| {
                let a = t[i + d] - t[i];
                let b = t[i + d + 1] - t[i + 1];
                let left = if a > 0.0 { (x - t[i]) / a * n[i] } else { 0.0 };
                let right = if b > 0.0 {
                    (t[i + d + 1] - x) / b * n[i + 1]
                } else {
                    0.0
                };
                left + right
            })
            .collect();
        n = next;
    }
    n
}

/// Linearly interpolated quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = pos - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Harmonic regressors `sin(2 pi t k / m)`, `cos(2 pi t k / m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerms {
    pub period: f64,
    pub pairs: usize,
    /// Columns in the order sin_1, cos_1, sin_2, cos_2, ...
    pub columns: Vec<Vec<f64>>,
}

impl FourierTerms {
    pub fn names(&self) -> Vec<String> {
        (1..=self.pairs)
            .flat_map(|k| [format!("sin{k}"), format!("cos{k}")])
            .collect()
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        let n = self.columns.first().map_or(0, Vec::len);
        DMatrix::from_fn(n, self.columns.len(), |i, j| self.columns[j][i])
    }
}

pub fn fourier_terms(t: &[i64], period: f64, pairs: usize) -> Result<FourierTerms> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Config(format!("seasonal period must be positive, got {period}")));
    }
    if 2.0 * pairs as f64 >= period {
        return Err(Error::Config(format!(
            "{pairs} Fourier pairs need a period above {}, got {period}",
            2 * pairs
        )));
    }
    let mut columns = Vec::with_capacity(2 * pairs);
    for k in 1..=pairs {
        let angles: Vec<f64> = t
            .iter()
            .map(|ti| 2.0 * PI * (*ti as f64 * k as f64).rem_euclid(period) / period)
            .collect();
        columns.push(angles.iter().map(|a| a.sin()).collect());
        columns.push(angles.iter().map(|a| a.cos()).collect());
    }
    Ok(FourierTerms { period, pairs, columns })
}

/// Householder basis for the null space of a single row constraint `c' b = 0`.
///
/// Returns a k x (k-1) matrix with orthonormal columns.
pub(crate) fn sum_to_zero_basis(c: &DVector<f64>) -> DMatrix<f64> {
    let k = c.len();
    let norm = c.norm();
    if norm == 0.0 {
        return DMatrix::identity(k, k).columns(1, k - 1).into_owned();
    }
    let mut v = c / norm;
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vv = v.dot(&v);
    let h = DMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / vv);
    h.columns(1, k - 1).into_owned()
}
