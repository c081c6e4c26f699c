//! The verification and optimization layer: a finite-support representation
//! oracle for unbiased-estimator-of-zero spaces, minimum-variance search over
//! the unbiased linear-plus-quadratic class, the orthogonality certificate
//! that decides when generalized least squares is variance-optimal, and an
//! exact variance comparison harness.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dist::{DiscreteDistribution, ATOM_MERGE_TOL};
use crate::error::{Error, Result};
use crate::estimator::{gls, LPQEstimator};
use crate::jsonio::format_float_17;
use crate::koopmann::{parameterize_member, KoopmannConstraints};
use crate::linalg::{
    column_space, max_principal_angle, null_space, subspace_equal, Subspace, SymMatrix,
    DEFAULT_REL_TOL,
};
use crate::model::{DesignMatrix, MomentConstraintSet};
use crate::poly::Polynomial;

/// Tolerance for witness feasibility and subspace equality in the oracle.
pub const ORACLE_TOL: f64 = 1e-8;

/// Tolerance for matching a distribution's moments against a model.
pub const MOMENT_MATCH_TOL: f64 = 1e-8;

/// Residual threshold for the orthogonality certificate's verdict.
pub const CERTIFICATE_TOL: f64 = 1e-10;

/// Threshold below which whitened third central moments count as vanishing.
pub const THIRD_MOMENT_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Representation oracle
// ---------------------------------------------------------------------------

/// Outcome of comparing the unbiased-estimator-of-zero space on a finite atom
/// set against the span of the moment constraint functions.
#[derive(Debug, Clone)]
pub struct RepresentationReport {
    /// Atom set the comparison lives on; both subspaces sit in R^{|atoms|}.
    pub ambient_atoms: Vec<DVector<f64>>,
    /// Span of the constraint-function evaluation vectors.
    pub span_g: Subspace,
    /// Functions on the atoms with zero mean under every nonnegative
    /// normalized weight vector annihilated by the constraints.
    pub unbiased_zero: Subspace,
    /// Whether the two subspaces agree at the oracle tolerance.
    pub equal: bool,
    /// Largest principal angle between the two subspaces.
    pub max_principal_angle: f64,
}

/// Decides whether every function that is unbiased-for-zero across all
/// distributions on `atoms` satisfying the moment constraints lies in the
/// span of the constraint functions themselves.
///
/// The witness must put strictly positive weight on every atom and satisfy
/// the constraints; it plays the role of a dominating distribution. With M
/// stacking the constraint-function evaluations, the unbiased-for-zero space
/// is computed by the affine-hull identity
/// rowspace([𝟙ᵀ; M]) ∩ {u : u·witness = 0}: a function kills every feasible
/// weight vector exactly when it kills the affine hull of the feasible set,
/// which the strictly positive witness pins down.
pub fn representation_oracle(
    atoms: &[DVector<f64>],
    g: &MomentConstraintSet,
    strict_positive_witness: &DiscreteDistribution,
) -> Result<RepresentationReport> {
    let n = g.design().n();
    if atoms.is_empty() {
        return Err(Error::DimensionMismatch("atom list is empty".into()));
    }
    if atoms.iter().any(|a| a.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "atoms must live in R^{n} to match the design"
        )));
    }
    let m = atoms.len();
    if strict_positive_witness.dim() != n {
        return Err(Error::DimensionMismatch(
            "witness dimension differs from the atoms".into(),
        ));
    }
    if strict_positive_witness.support_size() != m {
        return Err(Error::InfeasibleWitness(format!(
            "witness has {} atoms but the ambient set has {m}; support must match exactly",
            strict_positive_witness.support_size()
        )));
    }
    // Align witness weights with the given atom order.
    let mut w = DVector::zeros(m);
    for (i, atom) in atoms.iter().enumerate() {
        let found = strict_positive_witness
            .atoms()
            .iter()
            .position(|b| (atom - b).amax() <= ATOM_MERGE_TOL)
            .ok_or_else(|| {
                Error::InfeasibleWitness(format!("witness puts no weight on atom {i}"))
            })?;
        let weight = strict_positive_witness.weights()[found];
        if weight <= 0.0 {
            return Err(Error::InfeasibleWitness(format!(
                "witness weight on atom {i} must be strictly positive, got {weight}"
            )));
        }
        w[i] = weight;
    }
    // Feasibility: the witness must satisfy every constraint.
    let functions = g.constraint_functions();
    for (c, p) in functions.iter().enumerate() {
        let residual = strict_positive_witness.expect_poly(p)?;
        if residual.abs() > ORACLE_TOL {
            return Err(Error::InfeasibleWitness(format!(
                "witness violates constraint {c}: expectation {residual:.3e}"
            )));
        }
    }

    // M stacks constraint evaluations; span_g is its row space.
    let mut evals = DMatrix::zeros(functions.len(), m);
    for (c, p) in functions.iter().enumerate() {
        for (i, atom) in atoms.iter().enumerate() {
            evals[(c, i)] = p.eval(atom)?;
        }
    }
    let span_g = column_space(&evals.transpose(), DEFAULT_REL_TOL);

    // rowspace([𝟙ᵀ; M]) ∩ {u : u·w = 0}.
    let mut stacked = DMatrix::zeros(functions.len() + 1, m);
    for i in 0..m {
        stacked[(0, i)] = 1.0;
    }
    stacked
        .view_mut((1, 0), (functions.len(), m))
        .copy_from(&evals);
    let rowspace_aug = column_space(&stacked.transpose(), DEFAULT_REL_TOL);
    let witness_orth = null_space(&DMatrix::from_rows(&[w.transpose()]), DEFAULT_REL_TOL);
    let unbiased_zero = rowspace_aug.intersect(&witness_orth)?;

    let equal = subspace_equal(&span_g, &unbiased_zero, ORACLE_TOL)?;
    let max_angle = max_principal_angle(&span_g, &unbiased_zero)?;
    Ok(RepresentationReport {
        ambient_atoms: atoms.to_vec(),
        span_g,
        unbiased_zero,
        equal,
        max_principal_angle: max_angle,
    })
}

/// The span, inside the coefficient space R^{1+n+n(n+1)/2} of degree-two
/// polynomials, of a constraint set's functions. Intersecting these spans
/// across family members identifies the estimators-of-zero shared by the
/// whole family.
pub fn constraint_coefficient_span(g: &MomentConstraintSet) -> Result<Subspace> {
    let functions = g.constraint_functions();
    let len = Polynomial::coefficient_len(g.design().n());
    let mut m = DMatrix::zeros(len, functions.len());
    for (c, p) in functions.iter().enumerate() {
        m.set_column(c, &p.coefficient_vector()?);
    }
    Ok(column_space(&m, DEFAULT_REL_TOL))
}

/// Intersection of finitely many subspaces of a common ambient space.
pub fn intersect_spans(spans: &[Subspace]) -> Result<Subspace> {
    let first = spans
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no subspaces to intersect".into()))?;
    let mut acc = first.clone();
    for s in &spans[1..] {
        acc = acc.intersect(s)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Minimum-variance search
// ---------------------------------------------------------------------------

fn validate_matched_moments(
    design: &DesignMatrix,
    sigma: &SymMatrix,
    f: &DiscreteDistribution,
) -> Result<(DVector<f64>, f64)> {
    if f.dim() != design.n() {
        return Err(Error::DimensionMismatch(
            "distribution dimension differs from the design".into(),
        ));
    }
    let x = design.matrix();
    let mu = f.moment1();
    let gram_inv = (x.transpose() * x)
        .try_inverse()
        .expect("full-column-rank design has invertible Gram matrix");
    let beta_hat = &gram_inv * x.transpose() * &mu;
    let mean_gap = (&mu - x * &beta_hat).amax();
    if mean_gap > MOMENT_MATCH_TOL * mu.amax().max(1.0) {
        return Err(Error::MomentMismatch(format!(
            "distribution mean is {mean_gap:.3e} away from the design column space"
        )));
    }
    let cov = f.moment2_central();
    let denom = (sigma.as_matrix() * sigma.as_matrix()).trace();
    let sigma2 = (cov.as_matrix() * sigma.as_matrix()).trace() / denom;
    let cov_gap = (cov.as_matrix() - sigma2 * sigma.as_matrix()).amax();
    if sigma2 < -MOMENT_MATCH_TOL || cov_gap > MOMENT_MATCH_TOL * cov.max_abs().max(1.0) {
        return Err(Error::MomentMismatch(format!(
            "distribution covariance is not a nonnegative multiple of the model covariance \
             (best scale {sigma2:.3e}, residual {cov_gap:.3e})"
        )));
    }
    Ok((beta_hat, sigma2))
}

/// Minimizes Var_f(directionᵀ·u(Y)) over the full affine parameterization of
/// the class, returning the optimizer and its variance.
///
/// The objective is a convex quadratic in the free coordinates, solved by its
/// normal equations on the Gram matrix of centered direction evaluations;
/// a singular system falls back to the minimum-norm solution. Requires the
/// distribution's moments to match the constraint system (mean in the design
/// column space, covariance a nonnegative multiple of Σ), so that every class
/// member has the same mean under `f` and variance differences are exact.
pub fn min_variance_member(
    c: &KoopmannConstraints,
    f: &DiscreteDistribution,
    direction: &DVector<f64>,
) -> Result<(LPQEstimator, f64)> {
    let design = c.design();
    if direction.len() != design.k() {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, design has {} columns",
            direction.len(),
            design.k()
        )));
    }
    if direction.amax() == 0.0 {
        return Err(Error::Precondition("direction must be nonzero".into()));
    }
    validate_matched_moments(design, c.sigma(), f)?;

    let param = parameterize_member(c)?;
    let dim = param.dim();
    let atoms = f.atoms();
    let weights = f.weights();

    // Centered scalar evaluations s(y) = directionᵀ·u(y) per atom, for the
    // base point and every direction.
    let centered = |est: &LPQEstimator| -> Result<Vec<f64>> {
        let mut vals = Vec::with_capacity(atoms.len());
        for a in atoms {
            vals.push(direction.dot(&est.evaluate(a)?));
        }
        let mean: f64 = vals.iter().zip(weights).map(|(v, w)| v * w).sum();
        Ok(vals.into_iter().map(|v| v - mean).collect())
    };
    let base_vals = centered(param.base())?;
    let dir_vals = param
        .directions()
        .iter()
        .map(centered)
        .collect::<Result<Vec<_>>>()?;

    let weighted_dot = |u: &[f64], v: &[f64]| -> f64 {
        u.iter()
            .zip(v)
            .zip(weights)
            .map(|((a, b), w)| w * a * b)
            .sum()
    };

    // Var(base + Σ t_m dir_m) = t'Gt + 2g't + const; solve Gt = −g.
    let mut gram = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for l in 0..dim {
        rhs[l] = -weighted_dot(&base_vals, &dir_vals[l]);
        for m_idx in l..dim {
            let v = weighted_dot(&dir_vals[l], &dir_vals[m_idx]);
            gram[(l, m_idx)] = v;
            gram[(m_idx, l)] = v;
        }
    }
    let t = crate::linalg::pseudo_inverse(&gram, DEFAULT_REL_TOL) * rhs;
    let optimizer = param.member(&t)?;
    let cov = optimizer.variance_under(f)?;
    let variance = (direction.transpose() * cov.as_matrix() * direction)[(0, 0)];
    Ok((optimizer, variance))
}

// ---------------------------------------------------------------------------
// Orthogonality certificate
// ---------------------------------------------------------------------------

/// The cross-covariance Cov_F(β̂_GLS, u − β̂_GLS) split into its three exact
/// summands: the linear-part block, the mean-interaction block, and the
/// third-moment block. Generalized least squares is variance-optimal against
/// `u` exactly when the total vanishes; under matched moments the first two
/// blocks vanish identically and the third carries the skewness obstruction.
#[derive(Debug, Clone)]
pub struct BueCertificate {
    /// Cov(ẑ, (Ã−Ẑ)ᵀε̃): the purely linear block.
    pub term1: DMatrix<f64>,
    /// 2·Cov(ẑ, (B̃ⱼX̃β)ᵀε̃) per column j: the mean-interaction block.
    pub term2: DMatrix<f64>,
    /// Cov(ẑ, ε̃ᵀB̃ⱼε̃) per column j: the third-moment block.
    pub term3: DMatrix<f64>,
    /// Cov_F(β̂_GLS(Y), u(Y) − β̂_GLS(Y)), computed independently by direct
    /// atom enumeration.
    pub cross_cov: DMatrix<f64>,
    /// Whether all three blocks vanish below the certificate tolerance.
    pub passed: bool,
}

impl BueCertificate {
    /// Max-norm gap between the three-term decomposition and the directly
    /// enumerated cross-covariance.
    pub fn decomposition_gap(&self) -> f64 {
        (&self.term1 + &self.term2 + &self.term3 - &self.cross_cov).amax()
    }

    /// Largest entry across the three blocks.
    pub fn max_block(&self) -> f64 {
        self.term1
            .amax()
            .max(self.term2.amax())
            .max(self.term3.amax())
    }
}

fn matrix_sqrt_pair(sigma: &SymMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let scale = sigma.max_abs().max(1.0);
    if sigma.min_eigenvalue() <= 1e-10 * scale {
        return Err(Error::NotPositiveDefinite(
            "whitening requires a positive definite covariance".into(),
        ));
    }
    let eig = sigma.as_matrix().clone().symmetric_eigen();
    let mut sqrt = DMatrix::zeros(sigma.dim(), sigma.dim());
    let mut inv_sqrt = DMatrix::zeros(sigma.dim(), sigma.dim());
    for i in 0..sigma.dim() {
        let root = eig.eigenvalues[i].sqrt();
        let v = eig.eigenvectors.column(i);
        sqrt += root * v * v.transpose();
        inv_sqrt += (1.0 / root) * v * v.transpose();
    }
    Ok((sqrt, inv_sqrt))
}

/// Whitened, centered copy of `f`: atoms Σ^{-1/2}(y − μ).
fn whitened_residuals(
    f: &DiscreteDistribution,
    inv_sqrt: &DMatrix<f64>,
) -> Result<DiscreteDistribution> {
    let mu = f.moment1();
    DiscreteDistribution::new(
        f.atoms().iter().map(|y| inv_sqrt * (y - &mu)).collect(),
        f.weights().to_vec(),
    )
}

/// Produces the orthogonality certificate for an estimator u against
/// generalized least squares under `f`.
///
/// Everything is computed in whitened coordinates ε̃ = Σ^{-1/2}(Y − Xβ):
/// with X̃ = Σ^{-1/2}X, Ẑ = X̃(X̃ᵀX̃)⁻¹, Ã = Σ^{1/2}A and B̃ⱼ = Σ^{1/2}BⱼΣ^{1/2},
/// the difference u − β̂_GLS splits into a linear part, a mean interaction,
/// and a pure quadratic, whose covariances with β̂_GLS = β + Ẑᵀε̃ are the
/// three blocks. Each block is an exact polynomial expectation; the direct
/// cross-covariance is enumerated separately so the decomposition identity
/// can be checked rather than assumed.
pub fn bue_certificate(
    u: &LPQEstimator,
    design: &DesignMatrix,
    f: &DiscreteDistribution,
    sigma: &SymMatrix,
) -> Result<BueCertificate> {
    let n = design.n();
    let k = design.k();
    if u.n() != n || u.k() != k {
        return Err(Error::DimensionMismatch(
            "estimator shape does not match the design".into(),
        ));
    }
    if sigma.dim() != n {
        return Err(Error::DimensionMismatch(
            "covariance dimension differs from the design".into(),
        ));
    }
    let (beta_hat, _sigma2) = validate_matched_moments(design, sigma, f)?;
    let (sqrt, inv_sqrt) = matrix_sqrt_pair(sigma)?;
    let residuals = whitened_residuals(f, &inv_sqrt)?;

    let x_tilde = &inv_sqrt * design.matrix();
    let gram_inv = (x_tilde.transpose() * &x_tilde)
        .try_inverse()
        .expect("whitened design keeps full column rank");
    let z_hat = &x_tilde * gram_inv; // n×k
    let a_tilde = &sqrt * u.coefficients();
    let a_diff = &a_tilde - &z_hat;
    let x_beta_tilde = &x_tilde * &beta_hat;

    let cov_of = |left: &DVector<f64>, right: &Polynomial| -> Result<f64> {
        let lp = Polynomial::affine(0.0, left.clone());
        let product = lp.mul(right)?;
        Ok(residuals.expect_poly(&product)?
            - residuals.expect_poly(&lp)? * residuals.expect_poly(right)?)
    };

    let mut term1 = DMatrix::zeros(k, k);
    let mut term2 = DMatrix::zeros(k, k);
    let mut term3 = DMatrix::zeros(k, k);
    for l in 0..k {
        let z_l = z_hat.column(l).into_owned();
        for j in 0..k {
            let linear_part = Polynomial::affine(0.0, a_diff.column(j).into_owned());
            term1[(l, j)] = cov_of(&z_l, &linear_part)?;

            let b_tilde = SymMatrix::new(&sqrt * u.kernels()[j].as_matrix() * &sqrt)?;
            let mean_part = Polynomial::affine(0.0, 2.0 * b_tilde.as_matrix() * &x_beta_tilde);
            term2[(l, j)] = cov_of(&z_l, &mean_part)?;

            let quad_part = Polynomial::quadratic_form(b_tilde);
            term3[(l, j)] = cov_of(&z_l, &quad_part)?;
        }
    }

    // Independent route: enumerate Cov(β̂_GLS(Y), u(Y) − β̂_GLS(Y)) directly.
    let gls_est = gls(design, sigma)?;
    let mut gls_vals = Vec::with_capacity(f.atoms().len());
    let mut diff_vals = Vec::with_capacity(f.atoms().len());
    for y in f.atoms() {
        let g = gls_est.evaluate(y)?;
        diff_vals.push(u.evaluate(y)? - &g);
        gls_vals.push(g);
    }
    let mut gls_mean = DVector::zeros(k);
    let mut diff_mean = DVector::zeros(k);
    for ((g, d), &w) in gls_vals.iter().zip(&diff_vals).zip(f.weights()) {
        gls_mean += g * w;
        diff_mean += d * w;
    }
    let mut cross_cov = DMatrix::zeros(k, k);
    for ((g, d), &w) in gls_vals.iter().zip(&diff_vals).zip(f.weights()) {
        cross_cov += w * (g - &gls_mean) * (d - &diff_mean).transpose();
    }

    let max_block = term1.amax().max(term2.amax()).max(term3.amax());
    Ok(BueCertificate {
        term1,
        term2,
        term3,
        cross_cov,
        passed: max_block < CERTIFICATE_TOL,
    })
}

/// Whether all whitened central third moments E[ε̃ᵢε̃ⱼε̃ₗ] with non-identical
/// index triples vanish below the third-moment tolerance. This is the
/// condition under which the third certificate block vanishes for every
/// admissible kernel.
pub fn check_g3(
    f: &DiscreteDistribution,
    design: &DesignMatrix,
    sigma: &SymMatrix,
) -> Result<bool> {
    if f.dim() != design.n() || sigma.dim() != design.n() {
        return Err(Error::DimensionMismatch(
            "distribution, design, and covariance dimensions must agree".into(),
        ));
    }
    let x = design.matrix();
    let mu = f.moment1();
    let gram_inv = (x.transpose() * x)
        .try_inverse()
        .expect("full-column-rank design has invertible Gram matrix");
    let mean_gap = (&mu - x * (gram_inv * x.transpose() * &mu)).amax();
    if mean_gap > MOMENT_MATCH_TOL * mu.amax().max(1.0) {
        return Err(Error::MomentMismatch(format!(
            "distribution mean is {mean_gap:.3e} away from the design column space"
        )));
    }
    let (_, inv_sqrt) = matrix_sqrt_pair(sigma)?;
    let residuals = whitened_residuals(f, &inv_sqrt)?;
    let n = design.n();
    for i in 0..n {
        for j in i..n {
            for l in j..n {
                if i == j && j == l {
                    continue;
                }
                let mut moment = 0.0;
                for (atom, &w) in residuals.atoms().iter().zip(residuals.weights()) {
                    moment += w * atom[i] * atom[j] * atom[l];
                }
                if moment.abs() >= THIRD_MOMENT_TOL {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Variance comparison harness
// ---------------------------------------------------------------------------

/// One exact variance evaluation; `variance` is `None` when the estimator and
/// distribution dimensions do not match (the cell is invalid but the run
/// continues).
#[derive(Debug, Clone, Serialize)]
pub struct VarianceCell {
    pub estimator: String,
    pub distribution: String,
    pub coordinate: usize,
    pub variance: Option<f64>,
}

/// Exact variances per (estimator, distribution, coordinate), in the
/// deterministic order estimators × distributions × coordinates.
#[derive(Debug, Clone)]
pub struct VarianceTable {
    cells: Vec<VarianceCell>,
}

impl VarianceTable {
    pub fn cells(&self) -> &[VarianceCell] {
        &self.cells
    }

    /// CSV with the mandatory header row; floats carry 17 significant
    /// digits, invalid cells leave the variance field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,distribution,coordinate,variance\n");
        for cell in &self.cells {
            out.push_str(&csv_field(&cell.estimator));
            out.push(',');
            out.push_str(&csv_field(&cell.distribution));
            out.push(',');
            out.push_str(&cell.coordinate.to_string());
            out.push(',');
            if let Some(v) = cell.variance {
                out.push_str(&format_float_17(v));
            }
            out.push('\n');
        }
        out
    }

    /// JSON array of cells; invalid cells carry `null` variances.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.cells).expect("table serialization cannot fail")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Evaluates every estimator against every distribution, coordinate by
/// coordinate. Cells are assembled in deterministic order regardless of
/// evaluation order; dimension mismatches mark cells invalid without
/// aborting the run.
pub fn variance_comparison_table(
    estimators: &[(String, LPQEstimator)],
    fs: &[(String, DiscreteDistribution)],
) -> VarianceTable {
    let mut cells = Vec::new();
    for (est_name, est) in estimators {
        for (f_name, f) in fs {
            if est.n() != f.dim() {
                for coordinate in 0..est.k() {
                    cells.push(VarianceCell {
                        estimator: est_name.clone(),
                        distribution: f_name.clone(),
                        coordinate,
                        variance: None,
                    });
                }
                continue;
            }
            let cov = est
                .variance_under(f)
                .expect("dimensions were checked above");
            for coordinate in 0..est.k() {
                cells.push(VarianceCell {
                    estimator: est_name.clone(),
                    distribution: f_name.clone(),
                    coordinate,
                    variance: Some(cov.as_matrix()[(coordinate, coordinate)]),
                });
            }
        }
    }
    VarianceTable { cells }
}
