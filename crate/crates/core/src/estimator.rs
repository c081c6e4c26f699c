//! Linear and linear-plus-quadratic estimators of the coefficient vector,
//! their closed-form moments, and their exact variance under a finite
//! distribution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::jsonio;
use crate::linalg::{pseudo_inverse, SymMatrix, DEFAULT_REL_TOL};
use crate::model::DesignMatrix;
use crate::poly::Polynomial;

/// A linear estimator u(y) = Aᵀy, stored through its n×k coefficient matrix A.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    a: DMatrix<f64>,
}

impl LinearEstimator {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "estimator coefficient matrix must be nonempty".into(),
            ));
        }
        Ok(LinearEstimator { a })
    }

    /// n×k coefficient matrix A.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y has length {}, estimator expects {}",
                y.len(),
                self.a.nrows()
            )));
        }
        Ok(self.a.transpose() * y)
    }

    /// Lifts to the linear-plus-quadratic representation with zero kernels.
    pub fn lift(&self) -> LPQEstimator {
        let kernels = (0..self.a.ncols())
            .map(|_| SymMatrix::zeros(self.a.nrows()))
            .collect();
        LPQEstimator {
            a: self.a.clone(),
            kernels,
        }
    }
}

/// A linear-plus-quadratic estimator: coordinate j maps y to
/// (Aᵀy)ⱼ + yᵀBⱼy with symmetric kernels Bⱼ.
#[derive(Debug, Clone)]
pub struct LPQEstimator {
    a: DMatrix<f64>,
    kernels: Vec<SymMatrix>,
}

impl LPQEstimator {
    pub fn new(a: DMatrix<f64>, kernels: Vec<SymMatrix>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "estimator coefficient matrix must be nonempty".into(),
            ));
        }
        if kernels.len() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} kernels for {} coordinates",
                kernels.len(),
                a.ncols()
            )));
        }
        if kernels.iter().any(|b| b.dim() != a.nrows()) {
            return Err(Error::DimensionMismatch(
                "kernel dimensions must match the sample dimension".into(),
            ));
        }
        Ok(LPQEstimator { a, kernels })
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn kernels(&self) -> &[SymMatrix] {
        &self.kernels
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    /// Whether every kernel is the zero matrix (the estimator is linear).
    pub fn is_linear(&self, tol: f64) -> bool {
        self.kernels.iter().all(|b| b.max_abs() <= tol)
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y has length {}, estimator expects {}",
                y.len(),
                self.a.nrows()
            )));
        }
        let mut out = self.a.transpose() * y;
        for (j, b) in self.kernels.iter().enumerate() {
            out[j] += (y.transpose() * b.as_matrix() * y)[(0, 0)];
        }
        Ok(out)
    }

    /// The j-th coordinate as a polynomial y ↦ (Aᵀy)ⱼ + yᵀBⱼy.
    pub fn coordinate_polynomial(&self, j: usize) -> Result<Polynomial> {
        if j >= self.k() {
            return Err(Error::DimensionMismatch(format!(
                "coordinate {j} out of range for k = {}",
                self.k()
            )));
        }
        Polynomial::from_parts(
            0.0,
            self.a.column(j).into_owned(),
            self.kernels[j].clone(),
            vec![],
        )
    }

    /// self + t·other, coordinatewise on coefficients and kernels.
    pub fn add_scaled(&self, other: &LPQEstimator, t: f64) -> Result<LPQEstimator> {
        if other.n() != self.n() || other.k() != self.k() {
            return Err(Error::DimensionMismatch(
                "estimators have different shapes".into(),
            ));
        }
        let a = &self.a + t * &other.a;
        let kernels = self
            .kernels
            .iter()
            .zip(&other.kernels)
            .map(|(b, d)| SymMatrix::new(b.as_matrix() + t * d.as_matrix()))
            .collect::<Result<Vec<_>>>()?;
        LPQEstimator::new(a, kernels)
    }

    /// Closed-form expectation under mean Xβ and covariance Λ:
    /// E[u(Y)]ⱼ = (AᵀXβ)ⱼ + βᵀXᵀBⱼXβ + tr(BⱼΛ).
    pub fn expectation_closed_form(
        &self,
        design: &DesignMatrix,
        beta: &DVector<f64>,
        lambda: Option<&SymMatrix>,
    ) -> Result<DVector<f64>> {
        if design.n() != self.n() {
            return Err(Error::DimensionMismatch(
                "design and estimator sample dimensions differ".into(),
            ));
        }
        if beta.len() != design.k() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, design has {} columns",
                beta.len(),
                design.k()
            )));
        }
        if let Some(l) = lambda {
            if l.dim() != self.n() {
                return Err(Error::DimensionMismatch(
                    "covariance dimension differs from the sample dimension".into(),
                ));
            }
        }
        let mu = design.matrix() * beta;
        let mut out = self.a.transpose() * &mu;
        for (j, b) in self.kernels.iter().enumerate() {
            out[j] += (mu.transpose() * b.as_matrix() * &mu)[(0, 0)];
            if let Some(l) = lambda {
                out[j] += (b.as_matrix() * l.as_matrix()).trace();
            }
        }
        Ok(out)
    }

    /// Exact mean of u(Y) under a finite distribution, by atom enumeration.
    pub fn mean_under(&self, f: &DiscreteDistribution) -> Result<DVector<f64>> {
        if f.dim() != self.n() {
            return Err(Error::DimensionMismatch(
                "distribution dimension differs from the sample dimension".into(),
            ));
        }
        let mut mean = DVector::zeros(self.k());
        for (atom, &w) in f.atoms().iter().zip(f.weights()) {
            mean += self.evaluate(atom)? * w;
        }
        Ok(mean)
    }

    /// Exact covariance matrix of u(Y) under a finite distribution, from
    /// centered atom evaluations.
    pub fn variance_under(&self, f: &DiscreteDistribution) -> Result<SymMatrix> {
        let mean = self.mean_under(f)?;
        let mut cov = DMatrix::zeros(self.k(), self.k());
        for (atom, &w) in f.atoms().iter().zip(f.weights()) {
            let centered = self.evaluate(atom)? - &mean;
            cov += w * &centered * centered.transpose();
        }
        SymMatrix::new(cov)
    }

    /// Parses the JSON encoding `{"a": [[…]], "kernels": [[[…]]]}`; absent
    /// kernels mean a linear estimator.
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: EstimatorJson =
            serde_json::from_str(json).map_err(|e| Error::Parse(format!("estimator: {e}")))?;
        let a = jsonio::matrix_from_rows(&raw.a)?;
        let kernels = match raw.kernels {
            None => (0..a.ncols())
                .map(|_| SymMatrix::zeros(a.nrows()))
                .collect(),
            Some(rows) => rows
                .iter()
                .map(|r| SymMatrix::new(jsonio::matrix_from_rows(r)?))
                .collect::<Result<Vec<_>>>()?,
        };
        LPQEstimator::new(a, kernels)
    }

    /// Serializes to the JSON encoding accepted by [`LPQEstimator::from_json`].
    pub fn to_json(&self) -> String {
        let raw = EstimatorJson {
            a: jsonio::matrix_to_rows(&self.a),
            kernels: Some(
                self.kernels
                    .iter()
                    .map(|b| jsonio::matrix_to_rows(b.as_matrix()))
                    .collect(),
            ),
        };
        serde_json::to_string_pretty(&raw).expect("estimator serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct EstimatorJson {
    a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernels: Option<Vec<Vec<Vec<f64>>>>,
}

/// Ordinary least squares: A = X(XᵀX)⁻¹, so Aᵀy is the usual coefficient
/// estimate. The design is full column rank by construction, so XᵀX is
/// invertible.
pub fn ols(design: &DesignMatrix) -> LinearEstimator {
    let x = design.matrix();
    let gram = x.transpose() * x;
    let gram_inv = gram
        .try_inverse()
        .expect("full-column-rank design has invertible Gram matrix");
    LinearEstimator::new(x * gram_inv).expect("design is nonempty")
}

/// Generalized least squares for covariance Σ: A = Σ⁻X(XᵀΣ⁻X)⁻, computed
/// with pseudo-inverses so that positive semidefinite Σ is accepted whenever
/// the estimator is identified; identification is checked through AᵀX = I.
pub fn gls(design: &DesignMatrix, sigma: &SymMatrix) -> Result<LinearEstimator> {
    let x = design.matrix();
    if sigma.dim() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, design has {} rows",
            sigma.dim(),
            sigma.dim(),
            design.n()
        )));
    }
    if sigma.min_eigenvalue() < -1e-10 * sigma.max_abs().max(1.0) {
        return Err(Error::NotPositiveDefinite(
            "generalized least squares needs a positive semidefinite covariance".into(),
        ));
    }
    let sigma_pinv = pseudo_inverse(sigma.as_matrix(), DEFAULT_REL_TOL);
    let inner = x.transpose() * &sigma_pinv * x;
    let inner_pinv = pseudo_inverse(&inner, DEFAULT_REL_TOL);
    let a = &sigma_pinv * x * inner_pinv;
    let gap = (a.transpose() * x - DMatrix::identity(design.k(), design.k()))
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if gap > 1e-8 {
        return Err(Error::RankDeficient(format!(
            "generalized least squares is not identified for this covariance \
             (unbiasedness gap {gap:.3e}); the design is not fully visible \
             through the covariance's range"
        )));
    }
    LinearEstimator::new(a)
}
