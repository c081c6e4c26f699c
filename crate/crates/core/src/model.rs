//! Fixed-design linear models: the design matrix, finite grids of mean and
//! covariance parameters, and the moment constraint functions whose zero
//! expectations characterize membership in a model family.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio;
use crate::linalg::{self, sym_vec, SymMatrix, DEFAULT_REL_TOL};
use crate::poly::Polynomial;

/// Smallest eigenvalue a covariance matrix may have and still count as
/// positive semidefinite (absorbs symmetric-eigensolver noise).
pub const PSD_EIGEN_TOL: f64 = -1e-10;

/// An n×k design matrix of full column rank k ≤ n.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
}

impl DesignMatrix {
    /// Validates full column rank (relative singular-value threshold
    /// [`DEFAULT_REL_TOL`]) and k ≤ n.
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, k) = (x.nrows(), x.ncols());
        if k == 0 || n == 0 {
            return Err(Error::DimensionMismatch(
                "design matrix must have at least one row and one column".into(),
            ));
        }
        if k > n {
            return Err(Error::RankDeficient(format!(
                "design matrix has more columns ({k}) than rows ({n})"
            )));
        }
        let r = linalg::rank(&x, DEFAULT_REL_TOL);
        if r < k {
            return Err(Error::RankDeficient(format!(
                "design matrix has rank {r}, expected full column rank {k}"
            )));
        }
        Ok(DesignMatrix { x })
    }

    /// Observation count n.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Parameter count k.
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// Borrow the underlying matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Row i as a column vector (the regressor of observation i).
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }
}

/// The moment constraints identifying one family member: mean Xβ and,
/// optionally, a fixed covariance Λ.
#[derive(Debug, Clone)]
pub struct MomentConstraintSet {
    design: DesignMatrix,
    beta: DVector<f64>,
    lambda: Option<SymMatrix>,
}

impl MomentConstraintSet {
    pub fn new(
        design: DesignMatrix,
        beta: DVector<f64>,
        lambda: Option<SymMatrix>,
    ) -> Result<Self> {
        if beta.len() != design.k() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, design has {} columns",
                beta.len(),
                design.k()
            )));
        }
        if let Some(l) = &lambda {
            if l.dim() != design.n() {
                return Err(Error::DimensionMismatch(format!(
                    "covariance is {}x{}, design has {} rows",
                    l.dim(),
                    l.dim(),
                    design.n()
                )));
            }
        }
        Ok(MomentConstraintSet {
            design,
            beta,
            lambda,
        })
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn lambda(&self) -> Option<&SymMatrix> {
        self.lambda.as_ref()
    }

    /// Number of constraint functions: n linear, plus n(n+1)/2 quadratic when
    /// a covariance is fixed.
    pub fn constraint_count(&self) -> usize {
        let n = self.design.n();
        match self.lambda {
            Some(_) => n + n * (n + 1) / 2,
            None => n,
        }
    }

    /// The constraint functions as polynomials in y.
    ///
    /// First the n mean constraints y_i − x_iᵀβ, then (when a covariance Λ is
    /// fixed) the deduplicated products
    /// (y_i − x_iᵀβ)(y_ℓ − x_ℓᵀβ) − Λ_{iℓ} for i ≤ ℓ, ordered row-major.
    /// A distribution lies in the family member exactly when every function
    /// has expectation zero.
    pub fn constraint_functions(&self) -> Vec<Polynomial> {
        let n = self.design.n();
        let mu = self.design.matrix() * &self.beta; // Xβ
        let mut out = Vec::with_capacity(self.constraint_count());
        for i in 0..n {
            let mut a = DVector::zeros(n);
            a[i] = 1.0;
            out.push(Polynomial::affine(-mu[i], a));
        }
        if let Some(lambda) = &self.lambda {
            let lam = lambda.as_matrix();
            for i in 0..n {
                for l in i..n {
                    // (y_i − μ_i)(y_ℓ − μ_ℓ) − Λ_{iℓ}
                    //   = y_i y_ℓ − μ_ℓ y_i − μ_i y_ℓ + μ_i μ_ℓ − Λ_{iℓ}
                    let q = SymMatrix::from_fn(n, |r, c| {
                        if (r == i && c == l) || (r == l && c == i) {
                            if i == l {
                                1.0
                            } else {
                                0.5
                            }
                        } else {
                            0.0
                        }
                    });
                    let mut a = DVector::zeros(n);
                    a[i] += -mu[l];
                    a[l] += -mu[i];
                    let c = mu[i] * mu[l] - lam[(i, l)];
                    out.push(
                        Polynomial::from_parts(c, a, q, vec![])
                            .expect("constraint polynomial shapes are consistent"),
                    );
                }
            }
        }
        out
    }
}

/// A finite model family: one design, a grid of mean parameters β, and an
/// optional grid of covariance matrices.
#[derive(Debug, Clone)]
pub struct ModelFamily {
    design: DesignMatrix,
    betas: Vec<DVector<f64>>,
    covariances: Vec<SymMatrix>,
}

impl ModelFamily {
    /// Validates a nonempty β grid with consistent lengths and positive
    /// semidefinite covariances (smallest eigenvalue ≥ [`PSD_EIGEN_TOL`]).
    pub fn new(
        design: DesignMatrix,
        betas: Vec<DVector<f64>>,
        covariances: Vec<SymMatrix>,
    ) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Precondition(
                "model family must contain at least one beta".into(),
            ));
        }
        for b in &betas {
            if b.len() != design.k() {
                return Err(Error::DimensionMismatch(format!(
                    "beta has length {}, design has {} columns",
                    b.len(),
                    design.k()
                )));
            }
        }
        for c in &covariances {
            if c.dim() != design.n() {
                return Err(Error::DimensionMismatch(format!(
                    "covariance is {}x{}, design has {} rows",
                    c.dim(),
                    c.dim(),
                    design.n()
                )));
            }
            let min_eig = c.min_eigenvalue();
            if min_eig < PSD_EIGEN_TOL {
                return Err(Error::NotPositiveDefinite(format!(
                    "covariance has eigenvalue {min_eig:.3e} below the PSD tolerance"
                )));
            }
        }
        Ok(ModelFamily {
            design,
            betas,
            covariances,
        })
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn betas(&self) -> &[DVector<f64>] {
        &self.betas
    }

    pub fn covariances(&self) -> &[SymMatrix] {
        &self.covariances
    }

    /// Constraint set for one (β, Λ) pair of the grid; `cov_index` of `None`
    /// selects the mean-only constraints.
    pub fn member(
        &self,
        beta_index: usize,
        cov_index: Option<usize>,
    ) -> Result<MomentConstraintSet> {
        let beta = self
            .betas
            .get(beta_index)
            .ok_or_else(|| Error::Precondition(format!("beta index {beta_index} out of range")))?
            .clone();
        let lambda = match cov_index {
            Some(ci) => Some(
                self.covariances
                    .get(ci)
                    .ok_or_else(|| {
                        Error::Precondition(format!("covariance index {ci} out of range"))
                    })?
                    .clone(),
            ),
            None => None,
        };
        MomentConstraintSet::new(self.design.clone(), beta, lambda)
    }

    /// Parses the JSON encoding `{"x": [[…]], "betas": [[…]], "covariances":
    /// [[[…]]]}` (row-major), running full validation.
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: ModelFamilyJson =
            serde_json::from_str(json).map_err(|e| Error::Parse(format!("model family: {e}")))?;
        let design = DesignMatrix::new(jsonio::matrix_from_rows(&raw.x)?)?;
        let betas = raw
            .betas
            .iter()
            .map(|b| jsonio::vector_from_list(b))
            .collect::<Result<Vec<_>>>()?;
        let covariances = raw
            .covariances
            .iter()
            .map(|c| SymMatrix::new(jsonio::matrix_from_rows(c)?))
            .collect::<Result<Vec<_>>>()?;
        ModelFamily::new(design, betas, covariances)
    }

    /// Serializes to the JSON encoding accepted by [`ModelFamily::from_json`].
    pub fn to_json(&self) -> String {
        let raw = ModelFamilyJson {
            x: jsonio::matrix_to_rows(self.design.matrix()),
            betas: self.betas.iter().map(jsonio::vector_to_list).collect(),
            covariances: self
                .covariances
                .iter()
                .map(|c| jsonio::matrix_to_rows(c.as_matrix()))
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("model family serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFamilyJson {
    x: Vec<Vec<f64>>,
    betas: Vec<Vec<f64>>,
    #[serde(default)]
    covariances: Vec<Vec<Vec<f64>>>,
}

/// Checks whether a β grid spans the space needed for identification
/// arguments of the given order.
///
/// Order 1 requires the β vectors to span R^k; order 2 requires the lifted
/// vectors sym_vec(ββᵀ) to span the k(k+1)/2-dimensional symmetric
/// coordinate space.
pub fn spanning_check_betas(betas: &[DVector<f64>], order: u32) -> Result<bool> {
    if betas.is_empty() {
        return Err(Error::Precondition(
            "spanning check needs at least one beta".into(),
        ));
    }
    let k = betas[0].len();
    if betas.iter().any(|b| b.len() != k) {
        return Err(Error::DimensionMismatch(
            "betas have inconsistent lengths".into(),
        ));
    }
    match order {
        1 => {
            let mut m = DMatrix::zeros(k, betas.len());
            for (j, b) in betas.iter().enumerate() {
                m.set_column(j, b);
            }
            Ok(linalg::rank(&m, DEFAULT_REL_TOL) == k)
        }
        2 => {
            let target = k * (k + 1) / 2;
            let mut m = DMatrix::zeros(target, betas.len());
            for (j, b) in betas.iter().enumerate() {
                let outer = SymMatrix::new(b * b.transpose())?;
                m.set_column(j, sym_vec(&outer).as_vector());
            }
            Ok(linalg::rank(&m, DEFAULT_REL_TOL) == target)
        }
        o => Err(Error::Precondition(format!(
            "spanning check order must be 1 or 2, got {o}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: usize, cols: usize, entries: &[f64]) -> DesignMatrix {
        DesignMatrix::new(DMatrix::from_row_slice(rows, cols, entries)).unwrap()
    }

    #[test]
    fn design_matrix_rejects_rank_deficiency() {
        let err = DesignMatrix::new(DMatrix::from_row_slice(3, 2, &[1., 2., 2., 4., 3., 6.]));
        assert!(matches!(err, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn design_matrix_rejects_wide_shape() {
        assert!(DesignMatrix::new(DMatrix::from_row_slice(1, 2, &[1., 0.])).is_err());
    }

    #[test]
    fn mean_only_constraints_are_residual_coordinates() {
        // n=1, k=1, X=[1], β=0: the single constraint is y ↦ y.
        let g = MomentConstraintSet::new(design(1, 1, &[1.0]), DVector::from_vec(vec![0.0]), None)
            .unwrap();
        let fns = g.constraint_functions();
        assert_eq!(fns.len(), 1);
        assert_eq!(fns[0].constant_part(), 0.0);
        assert_eq!(fns[0].linear_part()[0], 1.0);

        // n=2, X=(1,1)ᵀ, β=1: constraints y₁−1 and y₂−1.
        let g = MomentConstraintSet::new(
            design(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            None,
        )
        .unwrap();
        let fns = g.constraint_functions();
        assert_eq!(fns.len(), 2);
        for (i, f) in fns.iter().enumerate() {
            assert_eq!(f.constant_part(), -1.0);
            assert_eq!(f.linear_part()[i], 1.0);
        }
    }

    #[test]
    fn covariance_constraints_are_deduplicated_products() {
        // n=2, β=0, Λ=I: functions {y₁, y₂, y₁²−1, y₁y₂, y₂²−1}.
        let g = MomentConstraintSet::new(
            design(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![0.0]),
            Some(SymMatrix::identity(2)),
        )
        .unwrap();
        let fns = g.constraint_functions();
        assert_eq!(fns.len(), 5);
        let y = DVector::from_vec(vec![3.0, -2.0]);
        let values: Vec<f64> = fns.iter().map(|f| f.eval(&y).unwrap()).collect();
        assert_eq!(values, vec![3.0, -2.0, 8.0, -6.0, 3.0]);
    }

    #[test]
    fn constraint_count_matches_formula() {
        for n in 1..=5 {
            let x = DMatrix::from_fn(n, 1, |_, _| 1.0);
            let d = DesignMatrix::new(x).unwrap();
            let beta = DVector::from_vec(vec![0.5]);
            let without = MomentConstraintSet::new(d.clone(), beta.clone(), None).unwrap();
            assert_eq!(without.constraint_functions().len(), n);
            let with = MomentConstraintSet::new(d, beta, Some(SymMatrix::identity(n))).unwrap();
            assert_eq!(with.constraint_functions().len(), n + n * (n + 1) / 2);
        }
    }

    #[test]
    fn spanning_check_distinguishes_orders() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let mixed = DVector::from_vec(vec![1.0, 1.0]);
        // {e₁, e₂} spans R² but the lifted outer products miss the cross term.
        assert!(spanning_check_betas(&[e1.clone(), e2.clone()], 1).unwrap());
        assert!(!spanning_check_betas(&[e1.clone(), e2.clone()], 2).unwrap());
        assert!(spanning_check_betas(&[e1, e2, mixed], 2).unwrap());
    }

    #[test]
    fn spanning_check_rejects_bad_order() {
        let e1 = DVector::from_vec(vec![1.0]);
        assert!(spanning_check_betas(&[e1], 3).is_err());
    }

    #[test]
    fn model_family_json_round_trip() {
        let json = r#"{
            "x": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            "betas": [[0.0, 0.0], [1.0, -1.0]],
            "covariances": [[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]]
        }"#;
        let fam = ModelFamily::from_json(json).unwrap();
        assert_eq!(fam.design().n(), 3);
        assert_eq!(fam.design().k(), 2);
        assert_eq!(fam.betas().len(), 2);
        assert_eq!(fam.covariances().len(), 1);
        let round = ModelFamily::from_json(&fam.to_json()).unwrap();
        assert_eq!(round.betas()[1][1], -1.0);
    }

    #[test]
    fn model_family_rejects_indefinite_covariance() {
        let json = r#"{
            "x": [[1.0], [1.0]],
            "betas": [[0.0]],
            "covariances": [[[0.0, 1.0], [1.0, 0.0]]]
        }"#;
        assert!(matches!(
            ModelFamily::from_json(json),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn model_family_rejects_ragged_matrix() {
        let json = r#"{"x": [[1.0], [1.0, 2.0]], "betas": [[0.0]]}"#;
        assert!(matches!(ModelFamily::from_json(json), Err(Error::Parse(_))));
    }

    #[test]
    fn model_family_requires_a_beta() {
        let json = r#"{"x": [[1.0]], "betas": []}"#;
        assert!(ModelFamily::from_json(json).is_err());
    }
}
