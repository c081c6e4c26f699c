//! The constraint system that carves out the unbiased linear-plus-quadratic
//! estimators for a fixed design and error covariance shape, a complete
//! affine parameterization of that class, and constructions of nontrivial
//! quadratic kernels inside it.
//!
//! An estimator u(y) = Aᵀy + (yᵀBⱼy)ⱼ belongs to the class exactly when
//! AᵀX = I, tr(BⱼΣ) = 0 and XᵀBⱼX = 0 for every coordinate j. The kernel
//! conditions are linear in sym_vec(Bⱼ), so they are stored as one matrix
//! acting on half-vectorized kernels.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{gls, ols, LPQEstimator};
use crate::linalg::{
    null_space, rank, sym_unvec, sym_vec, sym_vec_len, Subspace, SymMatrix, SymVec, DEFAULT_REL_TOL,
};
use crate::model::DesignMatrix;

/// Default residual tolerance for membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// The linear constraint system on kernels for a fixed design X and error
/// covariance Σ, acting on sym_vec(B) ∈ R^{n(n+1)/2}.
#[derive(Debug, Clone)]
pub struct KoopmannConstraints {
    design: DesignMatrix,
    sigma: SymMatrix,
    kernel_block: DMatrix<f64>,
}

/// Residuals of one estimator against the class constraints.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    /// max |AᵀX − I| over entries.
    pub unbiasedness_gap: f64,
    /// |tr(BⱼΣ)| for each coordinate j.
    pub trace_residuals: Vec<f64>,
    /// max |XᵀBⱼX| over entries, for each coordinate j.
    pub design_residuals: Vec<f64>,
    /// Tolerance the verdict was taken at.
    pub tol: f64,
    /// Whether every residual is within tolerance.
    pub is_member: bool,
}

impl MembershipReport {
    /// Largest residual across all constraint groups.
    pub fn max_residual(&self) -> f64 {
        let kernel_max = self
            .trace_residuals
            .iter()
            .chain(self.design_residuals.iter())
            .fold(0.0f64, |acc, v| acc.max(*v));
        self.unbiasedness_gap.max(kernel_max)
    }
}

/// Builds the constraint system for the given design and covariance.
pub fn build_constraints(design: &DesignMatrix, sigma: &SymMatrix) -> Result<KoopmannConstraints> {
    if sigma.dim() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, design has {} rows",
            sigma.dim(),
            sigma.dim(),
            design.n()
        )));
    }
    let n = design.n();
    let k = design.k();
    let cols = sym_vec_len(n);
    let mut block = DMatrix::zeros(1 + sym_vec_len(k), cols);
    // tr(BΣ) = ⟨sym_vec(B), sym_vec(Σ)⟩.
    set_row(&mut block, 0, &sym_vec(sigma));
    // (XᵀBX)_{pq} = ⟨sym_vec(B), sym_vec(½(x_p x_qᵀ + x_q x_pᵀ))⟩ for p ≤ q.
    let mut row = 1;
    for p in 0..k {
        for q in p..k {
            let xp = design.matrix().column(p).into_owned();
            let xq = design.matrix().column(q).into_owned();
            let sym_outer = SymMatrix::new(&xp * xq.transpose())?;
            set_row(&mut block, row, &sym_vec(&sym_outer));
            row += 1;
        }
    }
    Ok(KoopmannConstraints {
        design: design.clone(),
        sigma: sigma.clone(),
        kernel_block: block,
    })
}

fn set_row(m: &mut DMatrix<f64>, row: usize, v: &SymVec) {
    for (j, &val) in v.as_vector().iter().enumerate() {
        m[(row, j)] = val;
    }
}

impl KoopmannConstraints {
    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    /// The (1 + k(k+1)/2) × n(n+1)/2 matrix whose null space consists of the
    /// admissible half-vectorized kernels.
    pub fn kernel_block(&self) -> &DMatrix<f64> {
        &self.kernel_block
    }

    /// The subspace of admissible half-vectorized kernels.
    pub fn kernel_null_space(&self) -> Subspace {
        null_space(&self.kernel_block, DEFAULT_REL_TOL)
    }

    /// Checks one estimator against every class constraint.
    pub fn is_member(&self, est: &LPQEstimator, tol: f64) -> Result<MembershipReport> {
        if est.n() != self.design.n() || est.k() != self.design.k() {
            return Err(Error::DimensionMismatch(
                "estimator shape does not match the design".into(),
            ));
        }
        let x = self.design.matrix();
        let unbiasedness_gap = (est.coefficients().transpose() * x
            - DMatrix::identity(self.design.k(), self.design.k()))
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut trace_residuals = Vec::with_capacity(est.k());
        let mut design_residuals = Vec::with_capacity(est.k());
        for b in est.kernels() {
            trace_residuals.push((b.as_matrix() * self.sigma.as_matrix()).trace().abs());
            let xbx = x.transpose() * b.as_matrix() * x;
            design_residuals.push(xbx.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
        }
        let mut report = MembershipReport {
            unbiasedness_gap,
            trace_residuals,
            design_residuals,
            tol,
            is_member: false,
        };
        report.is_member = report.max_residual() <= tol;
        Ok(report)
    }
}

/// An affine parameterization of the class: every member is
/// base + Σₘ tₘ·direction[m], and every such combination is a member.
#[derive(Debug, Clone)]
pub struct MemberParameterization {
    base: LPQEstimator,
    directions: Vec<LPQEstimator>,
}

impl MemberParameterization {
    pub fn base(&self) -> &LPQEstimator {
        &self.base
    }

    pub fn directions(&self) -> &[LPQEstimator] {
        &self.directions
    }

    /// Number of free coordinates.
    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// base + Σₘ tₘ·direction[m].
    pub fn member(&self, t: &DVector<f64>) -> Result<LPQEstimator> {
        if t.len() != self.directions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} directions",
                t.len(),
                self.directions.len()
            )));
        }
        let mut out = self.base.clone();
        for (m, dir) in self.directions.iter().enumerate() {
            if t[m] != 0.0 {
                out = out.add_scaled(dir, t[m])?;
            }
        }
        Ok(out)
    }
}

/// Parameterizes the full class for a constraint system: the base point is
/// the generalized least squares estimator for Σ (ordinary least squares when
/// that is not identified) with zero kernels; the directions are all linear
/// perturbations AᵀX = 0 and all admissible kernel perturbations, applied one
/// coordinate at a time.
pub fn parameterize_member(constraints: &KoopmannConstraints) -> Result<MemberParameterization> {
    let design = constraints.design();
    let n = design.n();
    let k = design.k();
    let base_linear = match gls(design, constraints.sigma()) {
        Ok(est) => est,
        Err(Error::RankDeficient(_)) => ols(design),
        Err(e) => return Err(e),
    };
    let base = base_linear.lift();

    let mut directions = Vec::new();

    // Linear directions: columns from null(Xᵀ), one per estimated coordinate.
    let x_null = null_space(&design.matrix().transpose(), DEFAULT_REL_TOL);
    for c in 0..x_null.dim() {
        let col = x_null.basis().column(c).into_owned();
        for j in 0..k {
            let mut a = DMatrix::zeros(n, k);
            a.set_column(j, &col);
            directions.push(LPQEstimator::new(
                a,
                (0..k).map(|_| SymMatrix::zeros(n)).collect(),
            )?);
        }
    }

    // Kernel directions: admissible kernels from the constraint null space,
    // one per estimated coordinate.
    let kernel_null = constraints.kernel_null_space();
    for c in 0..kernel_null.dim() {
        let coords = kernel_null.basis().column(c).into_owned();
        let b = sym_unvec(&SymVec::new(n, coords)?);
        for j in 0..k {
            let mut kernels: Vec<SymMatrix> = (0..k).map(|_| SymMatrix::zeros(n)).collect();
            kernels[j] = b.clone();
            directions.push(LPQEstimator::new(DMatrix::zeros(n, k), kernels)?);
        }
    }

    Ok(MemberParameterization { base, directions })
}

/// Constructs a unit-Frobenius-norm symmetric kernel with zero diagonal and
/// XᵀBX = 0. Zero diagonal makes tr(BΣ) vanish for every diagonal Σ, so the
/// kernel is admissible for the whole uncorrelated-error covariance grid.
///
/// Requires n ≥ max(k+2, 4) so the solution space
/// (dimension ≥ n(n−1)/2 − k(k+1)/2) is guaranteed nontrivial with room to
/// spare. The kernel is the right singular vector of the constraint matrix
/// for its smallest singular value; the sign is fixed by making the first
/// nonzero off-diagonal entry (row-major scan) positive.
pub fn construct_quadratic_null(design: &DesignMatrix) -> Result<SymMatrix> {
    let n = design.n();
    let k = design.k();
    if n < (k + 2).max(4) {
        return Err(Error::Precondition(format!(
            "quadratic null construction needs n >= max(k+2, 4), got n = {n}, k = {k}"
        )));
    }
    let cols = sym_vec_len(n);
    let mut m = DMatrix::zeros(n + sym_vec_len(k), cols);
    for i in 0..n {
        let mut diag = SymMatrix::zeros(n).into_matrix();
        diag[(i, i)] = 1.0;
        set_row(&mut m, i, &sym_vec(&SymMatrix::new(diag)?));
    }
    let mut row = n;
    for p in 0..k {
        for q in p..k {
            let xp = design.matrix().column(p).into_owned();
            let xq = design.matrix().column(q).into_owned();
            let sym_outer = SymMatrix::new(&xp * xq.transpose())?;
            set_row(&mut m, row, &sym_vec(&sym_outer));
            row += 1;
        }
    }
    let null = null_space(&m, DEFAULT_REL_TOL);
    if null.dim() == 0 {
        return Err(Error::RankDeficient(
            "constraint matrix has trivial null space; no zero-diagonal kernel exists".into(),
        ));
    }
    let coords = null.basis().column(0).into_owned();
    let mut b = sym_unvec(&SymVec::new(n, coords)?);
    // Unit coordinates map to unit Frobenius norm; fix the sign by the first
    // sufficiently large off-diagonal entry in row-major order.
    'outer: for i in 0..n {
        for j in (i + 1)..n {
            let v = b.as_matrix()[(i, j)];
            if v.abs() > 1e-12 {
                if v < 0.0 {
                    b = SymMatrix::new(-b.as_matrix().clone())?;
                }
                break 'outer;
            }
        }
    }
    Ok(b)
}

/// The estimator that adds one shared admissible kernel to every coordinate
/// of ordinary least squares: u(y) = (XᵀX)⁻¹Xᵀy + (yᵀBy)ⱼ.
///
/// The kernel must satisfy tr(B) = 0 and XᵀBX = 0 within 1e-8 (membership
/// for iid errors); otherwise the construction refuses.
pub fn make_ub_estimator(design: &DesignMatrix, b: &SymMatrix) -> Result<LPQEstimator> {
    if b.dim() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {}x{}, design has {} rows",
            b.dim(),
            b.dim(),
            design.n()
        )));
    }
    let scale = b.max_abs().max(1.0);
    let trace = b.as_matrix().trace().abs();
    if trace > 1e-8 * scale {
        return Err(Error::ConstraintViolation(format!(
            "kernel trace {trace:.3e} exceeds tolerance; unbiasedness would fail for iid errors"
        )));
    }
    let x = design.matrix();
    let xbx_max = (x.transpose() * b.as_matrix() * x)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if xbx_max > 1e-8 * scale {
        return Err(Error::ConstraintViolation(format!(
            "kernel does not annihilate the design (max |XᵀBX| = {xbx_max:.3e})"
        )));
    }
    let base = ols(design);
    let kernels = (0..design.k()).map(|_| b.clone()).collect();
    LPQEstimator::new(base.coefficients().clone(), kernels)
}

/// The expected dimension of the member parameterization:
/// k·(n−k) linear directions plus k·(n(n+1)/2 − rank of the kernel block)
/// kernel directions.
pub fn expected_parameter_dim(constraints: &KoopmannConstraints) -> usize {
    let n = constraints.design().n();
    let k = constraints.design().k();
    let kernel_rank = rank(&constraints.kernel_block, DEFAULT_REL_TOL);
    k * (n - k) + k * (sym_vec_len(n) - kernel_rank)
}
