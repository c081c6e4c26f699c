//! Dense linear-algebra kernels shared by every other module: symmetric-matrix
//! vectorization, rank-revealing decompositions, and subspace comparison.
//!
//! All computations are f64 and sized for desk-scale problems (dimensions in
//! the tens). Rank decisions use singular values with a relative threshold;
//! the default is [`DEFAULT_REL_TOL`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative tolerance for rank decisions: singular values strictly
/// greater than `tol · σ_max` count toward the rank.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Tolerance at which subspace bases are required to be orthonormal.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Symmetric matrices
// ---------------------------------------------------------------------------

/// A real symmetric n×n matrix. Symmetrized on construction so that
/// `m[(i, j)] == m[(j, i)]` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, replacing it by its symmetric part ½(M + Mᵀ).
    /// The averaging yields bitwise-identical (i,j)/(j,i) entries.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let sym = 0.5 * (&m + m.transpose());
        Ok(SymMatrix { m: sym })
    }

    /// Builds from an entry function; the result is symmetrized as in [`SymMatrix::new`].
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, f: F) -> Self {
        let m = DMatrix::from_fn(n, n, f);
        let sym = 0.5 * (&m + m.transpose());
        SymMatrix { m: sym }
    }

    /// The n×n identity.
    pub fn identity(n: usize) -> Self {
        SymMatrix {
            m: DMatrix::identity(n, n),
        }
    }

    /// The n×n zero matrix.
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            m: DMatrix::zeros(n, n),
        }
    }

    /// Side length n.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Borrow the underlying dense matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Consume into the underlying dense matrix.
    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Eigenvalues (unordered) of the symmetric matrix.
    pub fn eigenvalues(&self) -> DVector<f64> {
        self.m.clone().symmetric_eigen().eigenvalues
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest eigenvalue.
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Frobenius norm √tr(M²).
    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }
}

/// Coordinates of a symmetric n×n matrix in the isometric vectorization of
/// [`sym_vec`]; the length is n(n+1)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct SymVec {
    /// Side length n of the matrix the coordinates describe.
    dim: usize,
    coords: DVector<f64>,
}

impl SymVec {
    /// Wraps a coordinate vector for symmetric n×n matrices; `coords` must
    /// have length n(n+1)/2.
    pub fn new(dim: usize, coords: DVector<f64>) -> Result<Self> {
        let expected = sym_vec_len(dim);
        if coords.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "symmetric coordinate vector for n={dim} must have length {expected}, got {}",
                coords.len()
            )));
        }
        Ok(SymVec { dim, coords })
    }

    /// Side length n of the underlying matrix.
    pub fn matrix_dim(&self) -> usize {
        self.dim
    }

    /// Coordinate count n(n+1)/2.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.len() == 0
    }

    /// Borrow the coordinates.
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Euclidean inner product with another coordinate vector.
    pub fn dot(&self, other: &SymVec) -> f64 {
        self.coords.dot(&other.coords)
    }
}

/// Length of the upper-triangle coordinate vector for an n×n symmetric matrix.
pub fn sym_vec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Isometric half-vectorization of a symmetric matrix.
///
/// Upper-triangle entries are listed row-major: (1,1), (1,2), …, (1,n),
/// (2,2), …, (n,n). Diagonal entries enter unscaled and off-diagonal entries
/// are multiplied by √2, which makes the Euclidean inner product of two
/// coordinate vectors equal to the trace inner product of the matrices:
/// ⟨sym_vec(Ω₁), sym_vec(Ω₂)⟩ = tr(Ω₁Ω₂).
pub fn sym_vec(m: &SymMatrix) -> SymVec {
    let n = m.dim();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut coords = DVector::zeros(sym_vec_len(n));
    let mat = m.as_matrix();
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            coords[idx] = if i == j {
                mat[(i, j)]
            } else {
                sqrt2 * mat[(i, j)]
            };
            idx += 1;
        }
    }
    SymVec { dim: n, coords }
}

/// Inverse of [`sym_vec`]: rebuilds the symmetric matrix from its isometric
/// coordinates. Round-trips with `sym_vec` to within 1e-14 per entry.
pub fn sym_unvec(v: &SymVec) -> SymMatrix {
    let n = v.matrix_dim();
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let entry = if i == j {
                v.coords[idx]
            } else {
                inv_sqrt2 * v.coords[idx]
            };
            m[(i, j)] = entry;
            m[(j, i)] = entry;
            idx += 1;
        }
    }
    SymMatrix { m }
}

// ---------------------------------------------------------------------------
// Rank-revealing decompositions
// ---------------------------------------------------------------------------

/// Moore–Penrose pseudo-inverse via SVD. Singular values at or below
/// `rel_tol · σ_max` are treated as zero. Satisfies the four Penrose
/// conditions to 1e-10 at desk scale.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0f64, f64::max);
    let cutoff = rel_tol * sigma_max;
    // pinv = V Σ⁺ Uᵀ, inverting only the singular values above the cutoff.
    let mut sigma_pinv = DMatrix::zeros(sigma.len(), sigma.len());
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            sigma_pinv[(i, i)] = 1.0 / s;
        }
    }
    v_t.transpose() * sigma_pinv * u.transpose()
}

/// Numerical rank: the count of singular values strictly above `rel_tol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    let cutoff = rel_tol * sigma_max;
    sigma.iter().filter(|&&s| s > cutoff).count()
}

/// Orthonormal basis of the null space {v : Mv = 0}.
///
/// The rank split uses singular values: directions whose singular value is at
/// most `rel_tol · σ_max` belong to the null space. A zero (or empty) matrix
/// yields the full ambient space.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> Subspace {
    let cols = m.ncols();
    if cols == 0 {
        return Subspace::zero(0);
    }
    if m.nrows() == 0 {
        return Subspace::full(cols);
    }
    // The thin SVD only exposes min(rows, cols) right-singular vectors, so a
    // wide matrix is padded with zero rows to recover the full V factor.
    let work = if m.nrows() < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0f64, f64::max);
    let cutoff = rel_tol * sigma_max;
    let mut basis_cols: Vec<DVector<f64>> = Vec::new();
    for i in 0..v_t.nrows() {
        let s = if i < sigma.len() { sigma[i] } else { 0.0 };
        if sigma_max == 0.0 || s <= cutoff {
            basis_cols.push(v_t.row(i).transpose());
        }
    }
    Subspace::from_orthonormal_columns(cols, basis_cols)
}

/// Orthonormal basis of the column space of `m` (directions with singular
/// value above `rel_tol · σ_max`).
pub fn column_space(m: &DMatrix<f64>, rel_tol: f64) -> Subspace {
    let ambient = m.nrows();
    if ambient == 0 || m.ncols() == 0 {
        return Subspace::zero(ambient);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return Subspace::zero(ambient);
    }
    let cutoff = rel_tol * sigma_max;
    let mut basis_cols: Vec<DVector<f64>> = Vec::new();
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && i < u.ncols() {
            basis_cols.push(u.column(i).into_owned());
        }
    }
    Subspace::from_orthonormal_columns(ambient, basis_cols)
}

// ---------------------------------------------------------------------------
// Subspaces
// ---------------------------------------------------------------------------

/// A linear subspace of Rⁿ stored as an orthonormal basis (one column per
/// basis vector). The zero subspace has a basis with zero columns.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient_dim: usize,
    /// ambient_dim × dim matrix with orthonormal columns.
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Wraps an explicit basis, validating orthonormality to
    /// [`ORTHONORMALITY_TOL`].
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let dim = basis.ncols();
        let gram = basis.transpose() * &basis;
        let deviation = (&gram - DMatrix::identity(dim, dim))
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        if deviation > ORTHONORMALITY_TOL {
            return Err(Error::Precondition(format!(
                "subspace basis is not orthonormal (max Gram deviation {deviation:.3e})"
            )));
        }
        Ok(Subspace {
            ambient_dim: basis.nrows(),
            basis,
        })
    }

    fn from_orthonormal_columns(ambient: usize, cols: Vec<DVector<f64>>) -> Subspace {
        if cols.is_empty() {
            return Subspace::zero(ambient);
        }
        let mut basis = DMatrix::zeros(ambient, cols.len());
        for (j, c) in cols.iter().enumerate() {
            basis.set_column(j, c);
        }
        Subspace {
            ambient_dim: ambient,
            basis,
        }
    }

    /// The zero subspace {0} ⊂ Rⁿ.
    pub fn zero(ambient: usize) -> Subspace {
        Subspace {
            ambient_dim: ambient,
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    /// The full space Rⁿ with the canonical basis.
    pub fn full(ambient: usize) -> Subspace {
        Subspace {
            ambient_dim: ambient,
            basis: DMatrix::identity(ambient, ambient),
        }
    }

    /// Orthonormal basis of the span of the given vectors, with the rank
    /// split at `rel_tol` (see [`column_space`]).
    pub fn from_spanning(
        ambient: usize,
        vectors: &[DVector<f64>],
        rel_tol: f64,
    ) -> Result<Subspace> {
        for v in vectors {
            if v.len() != ambient {
                return Err(Error::DimensionMismatch(format!(
                    "spanning vector has length {}, ambient dimension is {ambient}",
                    v.len()
                )));
            }
        }
        if vectors.is_empty() {
            return Ok(Subspace::zero(ambient));
        }
        let mut m = DMatrix::zeros(ambient, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            m.set_column(j, v);
        }
        Ok(column_space(&m, rel_tol))
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Number of basis vectors.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Borrow the orthonormal basis (ambient × dim).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projector P = BBᵀ onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Distance of `v` from the subspace: ‖v − P v‖₂.
    pub fn residual_norm(&self, v: &DVector<f64>) -> f64 {
        let proj = &self.basis * (self.basis.transpose() * v);
        (v - proj).norm()
    }

    /// Whether `v` lies in the subspace up to `tol`, relative to ‖v‖.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        let scale = v.norm().max(1.0);
        self.residual_norm(v) <= tol * scale
    }

    /// Intersection of two subspaces of the same ambient space.
    ///
    /// Computed from the null space of [A | B]: a null vector (c, d) gives a
    /// common element Ac = −Bd.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        if self.ambient_dim != other.ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "subspace ambient dimensions differ: {} vs {}",
                self.ambient_dim, other.ambient_dim
            )));
        }
        if self.dim() == 0 || other.dim() == 0 {
            return Ok(Subspace::zero(self.ambient_dim));
        }
        let (da, db) = (self.dim(), other.dim());
        let mut stacked = DMatrix::zeros(self.ambient_dim, da + db);
        stacked
            .view_mut((0, 0), (self.ambient_dim, da))
            .copy_from(&self.basis);
        stacked
            .view_mut((0, da), (self.ambient_dim, db))
            .copy_from(&other.basis);
        let kernel = null_space(&stacked, DEFAULT_REL_TOL);
        let mut members: Vec<DVector<f64>> = Vec::new();
        for j in 0..kernel.dim() {
            let coeffs = kernel.basis().column(j);
            let c = coeffs.rows(0, da).into_owned();
            members.push(&self.basis * c);
        }
        Subspace::from_spanning(self.ambient_dim, &members, DEFAULT_REL_TOL)
    }
}

/// Sine of the largest principal angle between two subspaces of equal
/// dimension: σ_max((I − BBᵀ)A) for orthonormal bases A, B.
fn max_principal_angle_sin(a: &Subspace, b: &Subspace) -> f64 {
    if a.dim() == 0 && b.dim() == 0 {
        return 0.0;
    }
    if a.dim() == 0 || b.dim() == 0 {
        return 1.0;
    }
    let residual = a.basis() - b.basis() * (b.basis().transpose() * a.basis());
    let svd = residual.svd(false, false);
    let s1 = svd
        .singular_values
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
        .clamp(0.0, 1.0);
    let residual_rev = b.basis() - a.basis() * (a.basis().transpose() * b.basis());
    let svd_rev = residual_rev.svd(false, false);
    let s2 = svd_rev
        .singular_values
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
        .clamp(0.0, 1.0);
    s1.max(s2)
}

/// Largest principal angle between two subspaces, in radians. Subspaces of
/// different dimensions report the angle of the worse-aligned direction
/// (π/2 when either space has a direction orthogonal to the other).
///
/// The angle is recovered through the sine of the projection residual, which
/// stays accurate for tiny angles where cosines saturate at 1.
pub fn max_principal_angle(a: &Subspace, b: &Subspace) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "subspace ambient dimensions differ: {} vs {}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    Ok(max_principal_angle_sin(a, b).asin())
}

/// Whether two subspaces are equal: dimensions match and every principal
/// angle is below `tol` radians. Errors if the ambient dimensions differ.
pub fn subspace_equal(a: &Subspace, b: &Subspace, tol: f64) -> Result<bool> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "subspace ambient dimensions differ: {} vs {}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    if a.dim() != b.dim() {
        return Ok(false);
    }
    Ok(max_principal_angle_sin(a, b).asin() < tol)
}
