use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, SmoothBasis};
use crate::error::{Error, Result};
use crate::gam::family::Family;
use crate::series::CovariateSet;

/// Named covariate columns without missing values, one row per observation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    rows: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    /// A frame with `rows` rows and no columns (for intercept-only models).
    pub fn with_rows(rows: usize) -> Self {
        Self {
            rows,
            ..Self::default()
        }
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.push(name, values);
        self
    }

    /// Adds or replaces a column.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let name = name.into();
        if self.names.is_empty() {
            self.rows = values.len();
        }
        if let Some(i) = self.names.iter().position(|n| *n == name) {
            self.columns[i] = values;
        } else {
            self.names.push(name);
            self.columns.push(values);
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of a covariate set at the given grid indices. Masked entries
    /// come through as NaN.
    pub fn from_covariates(z: &CovariateSet, rows: &[usize]) -> Self {
        let mut f = Frame::with_rows(rows.len());
        for c in z.columns() {
            f.push(c.name(), rows.iter().map(|i| c.raw_values()[*i]).collect());
        }
        f
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut f = Frame::with_rows(rows.len());
        for (n, c) in self.names.iter().zip(&self.columns) {
            f.push(n.clone(), rows.iter().map(|i| c[*i]).collect());
        }
        f
    }

    /// Single-row frame with every column at its median.
    pub fn medians(&self) -> Self {
        let mut f = Frame::with_rows(1);
        for (n, c) in self.names.iter().zip(&self.columns) {
            let mut s: Vec<f64> = c.iter().copied().filter(|v| v.is_finite()).collect();
            s.sort_by(f64::total_cmp);
            let med = if s.is_empty() {
                f64::NAN
            } else if s.len() % 2 == 1 {
                s[s.len() / 2]
            } else {
                0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
            };
            f.push(n.clone(), vec![med]);
        }
        f
    }

    pub(crate) fn require(&self, name: &str, rows: usize) -> Result<&[f64]> {
        let col = self
            .column(name)
            .ok_or_else(|| Error::Schema(format!("covariate `{name}` is not in the frame")))?;
        if col.len() != rows {
            return Err(Error::Schema(format!(
                "covariate `{name}` has {} rows, expected {rows}",
                col.len()
            )));
        }
        Ok(col)
    }
}

/// One additive term: a smooth of a named covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub covariate: String,
    pub spec: BasisSpec,
}

impl Term {
    pub fn new(covariate: impl Into<String>, spec: BasisSpec) -> Self {
        Self {
            covariate: covariate.into(),
            spec,
        }
    }
}

/// A term after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTerm {
    pub covariate: String,
    pub spec: BasisSpec,
    /// `None` when the covariate was constant and the term was dropped.
    pub basis: Option<SmoothBasis>,
    /// Coefficients on the basis functions (length = basis dimension).
    pub coefficients: Vec<f64>,
    /// Smoothing parameter applied to the basis penalty.
    pub lambda: f64,
    /// Internal penalty normalization; `lambda / penalty_scale` is the
    /// value on the selection grid.
    pub penalty_scale: f64,
    /// Effective degrees of freedom of the term.
    pub edf: f64,
}

impl FittedTerm {
    pub fn dim(&self) -> usize {
        self.basis.as_ref().map_or(0, SmoothBasis::dim)
    }

    pub fn is_dropped(&self) -> bool {
        self.basis.is_none()
    }

    /// Smoothing parameter on the selection grid scale.
    pub fn grid_lambda(&self) -> f64 {
        if self.penalty_scale > 0.0 {
            self.lambda / self.penalty_scale
        } else {
            0.0
        }
    }
}

/// A fitted additive model on the link scale:
/// `eta = intercept + sum_j f_j(z_j)`, mean `linkinv(eta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothModel {
    pub family: Family,
    pub intercept: f64,
    pub terms: Vec<FittedTerm>,
    /// Residual variance (Gaussian families) or Pearson dispersion (Gamma).
    pub dispersion: f64,
    /// Gamma shape, `1 / dispersion`, for the Gamma family.
    pub shape: Option<f64>,
    /// Total effective degrees of freedom including the intercept.
    pub edf: f64,
    pub gcv: f64,
    pub deviance: f64,
    pub iterations: usize,
    pub n: usize,
    /// Row-major covariance of `[intercept, term coefficients...]`.
    pub covariance: Vec<f64>,
    pub fitted: Vec<f64>,
    pub linear_predictor: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Model output at new covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub response: Vec<f64>,
    pub link: Vec<f64>,
    /// Standard errors on the link scale.
    pub se_link: Vec<f64>,
}

impl SmoothModel {
    /// Number of coefficients including the intercept.
    pub fn n_coef(&self) -> usize {
        1 + self.terms.iter().map(FittedTerm::dim).sum::<usize>()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let p = self.n_coef();
        DMatrix::from_row_slice(p, p, &self.covariance)
    }

    pub fn coefficients(&self) -> DVector<f64> {
        let mut v = vec![self.intercept];
        for t in &self.terms {
            v.extend_from_slice(&t.coefficients);
        }
        DVector::from_vec(v)
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.covariate.as_str()).collect()
    }

    /// Model matrix rows `[1, b_1(z_1), b_2(z_2), ...]` for a frame.
    pub fn model_matrix(&self, frame: &Frame) -> Result<DMatrix<f64>> {
        let n = frame.len();
        let p = self.n_coef();
        let mut x = DMatrix::zeros(n, p);
        x.column_mut(0).fill(1.0);
        let mut off = 1;
        for t in &self.terms {
            let Some(basis) = &t.basis else { continue };
            let col = frame.require(&t.covariate, n)?;
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "covariate `{}` has non-finite values",
                    t.covariate
                )));
            }
            let b = basis.design(col);
            x.view_mut((0, off), (n, b.ncols())).copy_from(&b);
            off += b.ncols();
        }
        Ok(x)
    }

    /// Linear predictor, response and link-scale standard errors.
    pub fn predict(&self, frame: &Frame) -> Result<Prediction> {
        let x = self.model_matrix(frame)?;
        let beta = self.coefficients();
        let v = self.covariance_matrix();
        let link: Vec<f64> = (&x * &beta).iter().copied().collect();
        let xv = &x * &v;
        let se_link = (0..x.nrows())
            .map(|i| xv.row(i).dot(&x.row(i)).max(0.0).sqrt())
            .collect();
        let response = link.iter().map(|e| self.family.linkinv(*e)).collect();
        Ok(Prediction {
            response,
            link,
            se_link,
        })
    }

    /// Response-scale predictions only.
    pub fn predict_response(&self, frame: &Frame) -> Result<Vec<f64>> {
        let x = self.model_matrix(frame)?;
        let beta = self.coefficients();
        Ok((&x * &beta).iter().map(|e| self.family.linkinv(*e)).collect())
    }

    /// Partial effect of one term and its standard error at the given values.
    pub fn term_effect(&self, covariate: &str, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut off = 1;
        for t in &self.terms {
            if t.covariate != covariate {
                off += t.dim();
                continue;
            }
            let Some(basis) = &t.basis else {
                return Ok((vec![0.0; values.len()], vec![0.0; values.len()]));
            };
            let b = basis.design(values);
            let k = b.ncols();
            let beta = DVector::from_column_slice(&t.coefficients);
            let v = self.covariance_matrix().view((off, off), (k, k)).into_owned();
            let fx: Vec<f64> = (&b * &beta).iter().copied().collect();
            let bv = &b * &v;
            let se = (0..b.nrows())
                .map(|i| bv.row(i).dot(&b.row(i)).max(0.0).sqrt())
                .collect();
            return Ok((fx, se));
        }
        Err(Error::Schema(format!("model has no term for `{covariate}`")))
    }

    /// Structured text form (JSON); reloads bit-exactly.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("invalid model document: {e}")))
    }
}
