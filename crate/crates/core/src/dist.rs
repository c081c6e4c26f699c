//! Finitely supported distributions on Rⁿ and the witness constructions that
//! realize prescribed first and second moments on small explicit supports.
//!
//! Every moment here is an exact finite sum over atoms — no sampling, no
//! quadrature — so equalities claimed by the estimator theory can be checked
//! to round-off rather than statistically.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio;
use crate::linalg::{sym_vec, sym_vec_len, SymMatrix};
use crate::model::{DesignMatrix, ModelFamily};
use crate::poly::{Polynomial, MAX_DEGREE};

/// Max-norm distance below which two atoms are considered the same point.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Allowed deviation of the weight sum from one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Smallest eigenvalue a covariance must exceed to count as positive
/// definite for witness construction.
pub const PD_EIGEN_FLOOR: f64 = 1e-10;

/// A probability distribution with finitely many atoms in Rⁿ.
///
/// Atoms are pairwise distinct (duplicates within [`ATOM_MERGE_TOL`] are
/// merged on construction, adding their weights), weights are nonnegative and
/// sum to one within [`WEIGHT_SUM_TOL`]. Atom order is preserved from
/// construction, and all moment computations sum in that order, so results
/// are bit-for-bit reproducible.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    dim: usize,
    atoms: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution, merging duplicate atoms and validating the
    /// weight invariants.
    pub fn new(atoms: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution(
                "distribution needs at least one atom".into(),
            ));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::InvalidDistribution(
                "atoms must have dimension >= 1".into(),
            ));
        }
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::InvalidDistribution(
                "atoms have inconsistent dimensions".into(),
            ));
        }
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "weights must be finite and nonnegative, got {w}"
                )));
            }
        }
        let mut merged_atoms: Vec<DVector<f64>> = Vec::with_capacity(atoms.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (atom, w) in atoms.into_iter().zip(weights) {
            match merged_atoms
                .iter()
                .position(|existing| max_norm_distance(existing, &atom) <= ATOM_MERGE_TOL)
            {
                Some(idx) => merged_weights[idx] += w,
                None => {
                    merged_atoms.push(atom);
                    merged_weights.push(w);
                }
            }
        }
        let total: f64 = merged_weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteDistribution {
            dim,
            atoms: merged_atoms,
            weights: merged_weights,
        })
    }

    /// Point mass δ_y.
    pub fn point_mass(y: DVector<f64>) -> Result<Self> {
        DiscreteDistribution::new(vec![y], vec![1.0])
    }

    /// Mixture Σ sᵢ·Fᵢ of the given components; the mixing weights must be
    /// nonnegative and sum to one (validated through the atom invariants).
    pub fn mixture(components: &[(f64, &DiscreteDistribution)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution(
                "mixture of zero components".into(),
            ));
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (s, f) in components {
            if *s < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "mixture weight {s} is negative"
                )));
            }
            for (a, w) in f.atoms.iter().zip(&f.weights) {
                atoms.push(a.clone());
                weights.push(s * w);
            }
        }
        DiscreteDistribution::new(atoms, weights)
    }

    /// Product distribution of n independent copies of a scalar law with the
    /// given atoms and weights. Atom order is the lexicographic product order.
    pub fn iid_product(scalar_atoms: &[f64], scalar_weights: &[f64], n: usize) -> Result<Self> {
        if scalar_atoms.is_empty() || scalar_atoms.len() != scalar_weights.len() {
            return Err(Error::InvalidDistribution(
                "scalar law needs matching nonempty atom and weight lists".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidDistribution(
                "product dimension must be >= 1".into(),
            ));
        }
        let m = scalar_atoms.len();
        let count = m.pow(n as u32);
        let mut atoms = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rest = flat;
            let mut atom = DVector::zeros(n);
            let mut w = 1.0;
            for coord in (0..n).rev() {
                let choice = rest % m;
                rest /= m;
                atom[coord] = scalar_atoms[choice];
                w *= scalar_weights[choice];
            }
            atoms.push(atom);
            weights.push(w);
        }
        DiscreteDistribution::new(atoms, weights)
    }

    /// The distribution of Y + shift.
    pub fn translate(&self, shift: &DVector<f64>) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "shift has length {}, distribution dimension is {}",
                shift.len(),
                self.dim
            )));
        }
        DiscreteDistribution::new(
            self.atoms.iter().map(|a| a + shift).collect(),
            self.weights.clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct atoms.
    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[DVector<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Whether every atom of `self` appears among the atoms of `other`
    /// (absolute continuity for finite supports).
    pub fn support_included_in(&self, other: &DiscreteDistribution) -> bool {
        self.atoms.iter().all(|a| {
            other
                .atoms
                .iter()
                .any(|b| max_norm_distance(a, b) <= ATOM_MERGE_TOL)
        })
    }

    /// Mean vector E[Y] = Σ wᵢ·yᵢ, summed in atom order.
    pub fn moment1(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            m += a * w;
        }
        m
    }

    /// Covariance E[(Y−μ)(Y−μ)ᵀ] from centered atom products (never from
    /// raw-moment differences, which would lose precision to cancellation).
    pub fn moment2_central(&self) -> SymMatrix {
        let mu = self.moment1();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            let centered = a - &mu;
            c += w * &centered * centered.transpose();
        }
        SymMatrix::new(c).expect("centered product matrix is square")
    }

    /// Exact expectation E[p(Y)] = Σ wᵢ·p(yᵢ) of a polynomial of total degree
    /// at most four.
    pub fn expect_poly(&self, p: &Polynomial) -> Result<f64> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "polynomial on R^{}, distribution on R^{}",
                p.dim(),
                self.dim
            )));
        }
        if p.degree() > MAX_DEGREE {
            return Err(Error::DegreeTooHigh(format!(
                "expectation supports degree <= {MAX_DEGREE}, polynomial has degree {}",
                p.degree()
            )));
        }
        let mut total = 0.0;
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            total += w * p.eval(a)?;
        }
        Ok(total)
    }

    /// Parses the JSON encoding `{"atoms": [[…]], "weights": […]}`.
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: DistributionJson =
            serde_json::from_str(json).map_err(|e| Error::Parse(format!("distribution: {e}")))?;
        let atoms = raw
            .atoms
            .iter()
            .map(|a| jsonio::vector_from_list(a))
            .collect::<Result<Vec<_>>>()?;
        DiscreteDistribution::new(atoms, raw.weights)
    }

    /// Serializes to the JSON encoding accepted by
    /// [`DiscreteDistribution::from_json`].
    pub fn to_json(&self) -> String {
        let raw = DistributionJson {
            atoms: self.atoms.iter().map(jsonio::vector_to_list).collect(),
            weights: self.weights.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("distribution serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn max_norm_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

// ---------------------------------------------------------------------------
// Witness constructions
// ---------------------------------------------------------------------------

/// Two mean witnesses for the model member with mean Xβ.
///
/// `f0` is the symmetric four-atom-per-coordinate mixture
/// (1/4n)·Σᵢ (δ_{eᵢ} + δ_{−eᵢ} + δ_{2Xβ−eᵢ} + δ_{eᵢ−2Xβ}) with mean zero;
/// its atoms are listed so that the mirror pairs cancel term by term, making
/// the computed mean exactly the zero vector. `f1` is the two-atom-per-
/// coordinate mixture (1/2n)·Σᵢ (δ_{eᵢ} + δ_{2Xβ−eᵢ}) with mean Xβ.
pub fn make_witness_mean(
    design: &DesignMatrix,
    beta: &DVector<f64>,
) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
    if beta.len() != design.k() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            design.k()
        )));
    }
    let n = design.n();
    let two_mu = 2.0 * (design.matrix() * beta);
    let w0 = 1.0 / (4 * n) as f64;
    let w1 = 1.0 / (2 * n) as f64;
    let mut atoms0 = Vec::with_capacity(4 * n);
    let mut atoms1 = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let mirrored = &two_mu - &e; // 2Xβ − eᵢ
        let negated_mirror = &e - &two_mu; // eᵢ − 2Xβ (exact negation of the above)
        atoms0.push(e.clone());
        atoms0.push(-&e);
        atoms0.push(mirrored.clone());
        atoms0.push(negated_mirror);
        atoms1.push(e);
        atoms1.push(mirrored);
    }
    let f0 = DiscreteDistribution::new(atoms0, vec![w0; 4 * n])?;
    let f1 = DiscreteDistribution::new(atoms1, vec![w1; 2 * n])?;
    Ok((f0, f1))
}

/// A witness distribution with mean exactly Xβ and covariance exactly Λ
/// (positive definite), built from a symmetric base mixture plus
/// rank-one corrections.
///
/// The base is uniform on {Xβ ± eᵢ} with covariance I/n. A mixing weight
/// c = min(½, ½·λ_min(Λ)·n) keeps the residual R = Λ − (c/n)·I positive
/// semidefinite (c is halved, at most 40 times, if round-off says otherwise);
/// R's eigendecomposition Σ λᵢvᵢvᵢᵀ is then realized by symmetric atom pairs
/// Xβ ± wᵢ with wᵢ = √(n·λᵢ/(1−c))·vᵢ, each carrying weight (1−c)/(2n).
pub fn make_witness_mean_cov(
    design: &DesignMatrix,
    beta: &DVector<f64>,
    lambda: &SymMatrix,
) -> Result<DiscreteDistribution> {
    if beta.len() != design.k() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            design.k()
        )));
    }
    let n = design.n();
    if lambda.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, design has {n} rows",
            lambda.dim(),
            lambda.dim()
        )));
    }
    let lam_min = lambda.min_eigenvalue();
    if lam_min <= PD_EIGEN_FLOOR {
        return Err(Error::NotPositiveDefinite(format!(
            "witness covariance must be positive definite, smallest eigenvalue {lam_min:.3e}"
        )));
    }
    let mu = design.matrix() * beta;
    let nf = n as f64;
    let scale = lambda.max_eigenvalue().max(1.0);

    // Base covariance is exactly I/n, so its largest eigenvalue is 1/n.
    let mut c = 0.5f64.min(0.5 * lam_min * nf);
    let mut residual = None;
    for _ in 0..=40 {
        let r = SymMatrix::new(lambda.as_matrix() - (c / nf) * DMatrix::identity(n, n))?;
        if r.min_eigenvalue() >= -1e-12 * scale {
            residual = Some(r);
            break;
        }
        c *= 0.5;
    }
    let residual = residual.ok_or_else(|| {
        Error::Precondition("residual covariance stayed indefinite after 40 halvings of c".into())
    })?;

    let eig = residual.as_matrix().clone().symmetric_eigen();
    let mut atoms = Vec::with_capacity(4 * n);
    let mut weights = Vec::with_capacity(4 * n);
    let base_w = c / (2.0 * nf);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        atoms.push(&mu + &e);
        weights.push(base_w);
        atoms.push(&mu - &e);
        weights.push(base_w);
    }
    let corr_w = (1.0 - c) / (2.0 * nf);
    for i in 0..n {
        let lam_i = eig.eigenvalues[i].max(0.0);
        let w_vec = (nf * lam_i / (1.0 - c)).sqrt() * eig.eigenvectors.column(i).into_owned();
        atoms.push(&mu + &w_vec);
        weights.push(corr_w);
        atoms.push(&mu - &w_vec);
        weights.push(corr_w);
    }
    DiscreteDistribution::new(atoms, weights)
}

/// The canonical spanning set {eᵢ : i ≤ n} ∪ {eᵢ + eⱼ : i ≤ j}, whose lifted
/// images (z, sym_vec(zzᵀ)) are linearly independent and therefore span an
/// (n + n(n+1)/2)-dimensional space.
pub fn canonical_span_set(n: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(n + sym_vec_len(n));
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        out.push(e);
    }
    for i in 0..n {
        for j in i..n {
            let mut z = DVector::zeros(n);
            z[i] += 1.0;
            z[j] += 1.0;
            out.push(z);
        }
    }
    out
}

/// The degree-two lift (z, sym_vec(zzᵀ)) ∈ R^{n + n(n+1)/2} of a point z.
pub fn lifted_vector(z: &DVector<f64>) -> DVector<f64> {
    let n = z.len();
    let outer = SymMatrix::new(z * z.transpose()).expect("outer product is square");
    let quad = sym_vec(&outer);
    let mut out = DVector::zeros(n + quad.len());
    for i in 0..n {
        out[i] = z[i];
    }
    for (idx, &v) in quad.as_vector().iter().enumerate() {
        out[n + idx] = v;
    }
    out
}

/// A composite witness dominating every per-member witness of the family,
/// with designated moments taken from the family's first grid entries.
///
/// The support always contains `y` and the mirror point 4Xβ* − y. When the
/// family fixes covariances, the support additionally contains the canonical
/// spanning set with its mirror image and the support of every per-(β, Λ)
/// witness, and the distribution's covariance is matched to the designated
/// Λ* by the same residual construction as [`make_witness_mean_cov`]. The
/// mean is always exactly-by-construction Xβ* for the first grid point β*.
pub fn make_composite_witness(
    family: &ModelFamily,
    y: &DVector<f64>,
) -> Result<DiscreteDistribution> {
    let design = family.design();
    let n = design.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has length {}, design has {n} rows",
            y.len()
        )));
    }
    let beta_star = &family.betas()[0];
    let mu_star = design.matrix() * beta_star;
    let y_mirror = 4.0 * &mu_star - y;
    let delta_y = DiscreteDistribution::point_mass(y.clone())?;
    let delta_mirror = DiscreteDistribution::point_mass(y_mirror)?;

    if family.covariances().is_empty() {
        // Mean-only family: ¼δ_y + ¼δ_{4Xβ*−y} + (1/2|B|)·Σ_β f0(β).
        let mut components: Vec<(f64, DiscreteDistribution)> =
            vec![(0.25, delta_y), (0.25, delta_mirror)];
        let share = 0.5 / family.betas().len() as f64;
        for beta in family.betas() {
            let (f0, _) = make_witness_mean(design, beta)?;
            components.push((share, f0));
        }
        let refs: Vec<(f64, &DiscreteDistribution)> =
            components.iter().map(|(s, f)| (*s, f)).collect();
        return DiscreteDistribution::mixture(&refs);
    }

    // Covariance-constrained family.
    let lambda_star = &family.covariances()[0];

    // Zero-mean average of all per-(β, Λ) witnesses together with their
    // reflections (the witnesses for −β), so their supports are dominated.
    let mut pair_witnesses: Vec<(f64, DiscreteDistribution)> = Vec::new();
    let pair_count = 2 * family.betas().len() * family.covariances().len();
    let pair_share = 1.0 / pair_count as f64;
    for beta in family.betas() {
        for lambda in family.covariances() {
            pair_witnesses.push((pair_share, make_witness_mean_cov(design, beta, lambda)?));
            pair_witnesses.push((
                pair_share,
                make_witness_mean_cov(design, &(-beta.clone()), lambda)?,
            ));
        }
    }

    // Symmetric cover of the canonical spanning set (mean zero).
    let span = canonical_span_set(n);
    let mut span_atoms = Vec::with_capacity(2 * span.len());
    for z in &span {
        span_atoms.push(z.clone());
        span_atoms.push(-z);
    }
    let span_w = 1.0 / span_atoms.len() as f64;
    let span_cover = DiscreteDistribution::new(span_atoms, vec![span_w; 2 * span.len()])?;

    // Mean-μ* core: ¼(pair average + span cover) + ¼δ_y + ¼δ_{4μ*−y}.
    let mut core_components: Vec<(f64, &DiscreteDistribution)> =
        vec![(0.25, &delta_y), (0.25, &delta_mirror), (0.25, &span_cover)];
    for (s, f) in &pair_witnesses {
        core_components.push((0.25 * s, f));
    }
    let core = DiscreteDistribution::mixture(&core_components)?;

    // Match the covariance to Λ* by the residual construction.
    let core_cov = core.moment2_central();
    let lam_min = lambda_star.min_eigenvalue();
    let core_max = core_cov.max_eigenvalue();
    let scale = lambda_star.max_eigenvalue().max(1.0);
    let mut c = 0.5f64.min(0.5 * lam_min / core_max);
    let mut residual = None;
    for _ in 0..=40 {
        let r = SymMatrix::new(lambda_star.as_matrix() - c * core_cov.as_matrix())?;
        if r.min_eigenvalue() >= -1e-12 * scale {
            residual = Some(r);
            break;
        }
        c *= 0.5;
    }
    let residual = residual.ok_or_else(|| {
        Error::Precondition("residual covariance stayed indefinite after 40 halvings of c".into())
    })?;
    let eig = residual.as_matrix().clone().symmetric_eigen();
    let nf = n as f64;
    let mut atoms = Vec::with_capacity(2 * n);
    for i in 0..n {
        let lam_i = eig.eigenvalues[i].max(0.0);
        let w_vec = (nf * lam_i / (1.0 - c)).sqrt() * eig.eigenvectors.column(i).into_owned();
        atoms.push(&mu_star + &w_vec);
        atoms.push(&mu_star - &w_vec);
    }
    let corrections = DiscreteDistribution::new(atoms, vec![1.0 / (2.0 * nf); 2 * n])?;
    DiscreteDistribution::mixture(&[(c, &core), (1.0 - c, &corrections)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DesignMatrix;

    fn design(rows: usize, cols: usize, entries: &[f64]) -> DesignMatrix {
        DesignMatrix::new(DMatrix::from_row_slice(rows, cols, entries)).unwrap()
    }

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn point_mass_moments() {
        let f = DiscreteDistribution::point_mass(vec2(3.0, -1.0)).unwrap();
        assert_eq!(f.moment1(), vec2(3.0, -1.0));
        assert_eq!(f.moment2_central().max_abs(), 0.0);
    }

    #[test]
    fn symmetric_two_atom_mean_is_zero() {
        let f = DiscreteDistribution::new(vec![vec2(1.0, 0.0), vec2(-1.0, 0.0)], vec![0.5, 0.5])
            .unwrap();
        assert_eq!(f.moment1(), vec2(0.0, 0.0));
    }

    #[test]
    fn duplicate_atoms_merge_with_added_weights() {
        let f = DiscreteDistribution::new(
            vec![vec2(1.0, 2.0), vec2(1.0, 2.0 + 1e-13), vec2(0.0, 0.0)],
            vec![0.25, 0.25, 0.5],
        )
        .unwrap();
        assert_eq!(f.support_size(), 2);
        assert_eq!(f.weights()[0], 0.5);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteDistribution::new(vec![vec2(0.0, 0.0)], vec![0.5]).is_err());
        assert!(
            DiscreteDistribution::new(vec![vec2(0.0, 0.0), vec2(1.0, 0.0)], vec![1.5, -0.5])
                .is_err()
        );
    }

    #[test]
    fn moment2_central_of_four_point_uniform() {
        // Uniform on {±e₁, ±e₂} in R²: covariance is I/2, exactly.
        let f = DiscreteDistribution::new(
            vec![
                vec2(1.0, 0.0),
                vec2(-1.0, 0.0),
                vec2(0.0, 1.0),
                vec2(0.0, -1.0),
            ],
            vec![0.25; 4],
        )
        .unwrap();
        let c = f.moment2_central();
        assert_eq!(c.as_matrix()[(0, 0)], 0.5);
        assert_eq!(c.as_matrix()[(1, 1)], 0.5);
        assert_eq!(c.as_matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn expect_poly_handles_degree_four() {
        // Uniform on {(±1, ±1)}: E[y₁²y₂²] = 1.
        let f = DiscreteDistribution::new(
            vec![
                vec2(1.0, 1.0),
                vec2(1.0, -1.0),
                vec2(-1.0, 1.0),
                vec2(-1.0, -1.0),
            ],
            vec![0.25; 4],
        )
        .unwrap();
        let p = Polynomial::from_monomials(
            2,
            vec![crate::poly::Monomial {
                coeff: 1.0,
                vars: vec![0, 0, 1, 1],
            }],
        )
        .unwrap();
        assert_eq!(f.expect_poly(&p).unwrap(), 1.0);
    }

    #[test]
    fn expect_poly_rejects_degree_five() {
        let f = DiscreteDistribution::point_mass(DVector::from_vec(vec![1.0])).unwrap();
        let p = Polynomial::from_monomials(
            1,
            vec![crate::poly::Monomial {
                coeff: 1.0,
                vars: vec![0; 5],
            }],
        );
        // Degree five is rejected at construction already; building by parts
        // with a legal degree then multiplying past the cap errors too.
        assert!(p.is_err());
        let quartic = Polynomial::from_monomials(
            1,
            vec![crate::poly::Monomial {
                coeff: 1.0,
                vars: vec![0; 4],
            }],
        )
        .unwrap();
        let linear = Polynomial::affine(0.0, DVector::from_vec(vec![1.0]));
        assert!(quartic.mul(&linear).is_err());
        assert!(f.expect_poly(&quartic).is_ok());
    }

    #[test]
    fn mean_witness_f0_has_bitwise_zero_mean() {
        let d = design(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.25, 1.0]);
        let beta = vec2(0.3, -1.7);
        let (f0, _) = make_witness_mean(&d, &beta).unwrap();
        let m = f0.moment1();
        for i in 0..3 {
            assert_eq!(
                m[i], 0.0,
                "component {i} of the f0 mean must be exactly zero"
            );
        }
    }

    #[test]
    fn mean_witness_f1_mean_matches_model() {
        let d = design(3, 1, &[1.0, 2.0, -1.0]);
        let beta = DVector::from_vec(vec![0.7]);
        let (_, f1) = make_witness_mean(&d, &beta).unwrap();
        let mu = d.matrix() * &beta;
        let m = f1.moment1();
        for i in 0..3 {
            assert!((m[i] - mu[i]).abs() <= 1e-14 * mu[i].abs().max(1.0));
        }
    }

    #[test]
    fn mean_witness_collapses_at_beta_zero() {
        // β = 0 makes 2Xβ − eᵢ collide with −eᵢ: f0's 4n atoms merge down to
        // 2n, while f1's 2n atoms are {±eᵢ} and stay distinct.
        let d = design(2, 1, &[1.0, 1.0]);
        let beta = DVector::from_vec(vec![0.0]);
        let (f0, f1) = make_witness_mean(&d, &beta).unwrap();
        assert_eq!(f0.support_size(), 4);
        assert_eq!(f1.support_size(), 4);
        assert_eq!(f0.moment1(), vec2(0.0, 0.0));
        assert_eq!(f0.weights(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn mean_witness_merges_documented_collision() {
        // n=2, Xβ = (1, 0): 2Xβ − e₁ = e₁, so f1 keeps three atoms with the
        // doubled weight on e₁ and mean still exactly Xβ.
        let d = design(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let beta = vec2(1.0, 0.0);
        let (_, f1) = make_witness_mean(&d, &beta).unwrap();
        assert_eq!(f1.support_size(), 3);
        let m = f1.moment1();
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!(m[1].abs() < 1e-15);
    }

    #[test]
    fn mean_cov_witness_matches_documented_small_case() {
        // n=2, Xβ=0, Λ=I: c=½, residual ¾I, corrections at ±√3·eᵢ.
        let d = design(2, 1, &[1.0, 1.0]);
        let beta = DVector::from_vec(vec![0.0]);
        let f = make_witness_mean_cov(&d, &beta, &SymMatrix::identity(2)).unwrap();
        assert_eq!(f.support_size(), 8);
        let sqrt3 = 3.0f64.sqrt();
        assert!(f
            .atoms()
            .iter()
            .any(|a| (a[0].abs() - sqrt3).abs() < 1e-12 && a[1].abs() < 1e-12));
        let m = f.moment1();
        assert!(m.norm() < 1e-12);
        let c = f.moment2_central();
        assert!((c.as_matrix() - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn mean_cov_witness_matches_base_covariance_corner() {
        // Λ equal to the base covariance I/n still round-trips exactly.
        let d = design(2, 1, &[1.0, -1.0]);
        let beta = DVector::from_vec(vec![0.4]);
        let lambda = SymMatrix::from_fn(2, |i, j| if i == j { 0.5 } else { 0.0 });
        let f = make_witness_mean_cov(&d, &beta, &lambda).unwrap();
        let mu = d.matrix() * &beta;
        assert!((f.moment1() - mu).norm() < 1e-12);
        assert!((f.moment2_central().as_matrix() - lambda.as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn mean_cov_witness_rejects_semidefinite_lambda() {
        let d = design(2, 1, &[1.0, 1.0]);
        let beta = DVector::from_vec(vec![0.0]);
        let singular = SymMatrix::from_fn(2, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        assert!(matches!(
            make_witness_mean_cov(&d, &beta, &singular),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn canonical_span_set_matches_documented_n2() {
        let set = canonical_span_set(2);
        let expected = [
            vec2(1.0, 0.0),
            vec2(0.0, 1.0),
            vec2(2.0, 0.0),
            vec2(1.0, 1.0),
            vec2(0.0, 2.0),
        ];
        assert_eq!(set.len(), 5);
        for (a, b) in set.iter().zip(expected.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lifted_span_set_has_full_rank() {
        for n in 1..=5 {
            let set = canonical_span_set(n);
            let lifted: Vec<DVector<f64>> = set.iter().map(lifted_vector).collect();
            let expected = n + sym_vec_len(n);
            assert_eq!(set.len(), expected);
            let mut m = DMatrix::zeros(expected, lifted.len());
            for (j, v) in lifted.iter().enumerate() {
                m.set_column(j, v);
            }
            assert_eq!(crate::linalg::rank(&m, 1e-9), expected, "n = {n}");
        }
    }

    #[test]
    fn composite_witness_mean_only_contains_y() {
        let d = design(2, 1, &[1.0, 1.0]);
        let family = ModelFamily::new(d, vec![DVector::from_vec(vec![0.0])], vec![]).unwrap();
        let y = vec2(1.0, 0.0);
        let f = make_composite_witness(&family, &y).unwrap();
        assert!(f.moment1().norm() < 1e-14);
        assert!(f
            .atoms()
            .iter()
            .any(|a| max_norm_distance(a, &y) <= ATOM_MERGE_TOL));
    }

    #[test]
    fn composite_witness_dominates_member_witnesses() {
        let d = design(2, 1, &[1.0, -0.5]);
        let betas = vec![
            DVector::from_vec(vec![0.5]),
            DVector::from_vec(vec![-1.0]),
            DVector::from_vec(vec![2.0]),
        ];
        let covs = vec![
            SymMatrix::identity(2),
            SymMatrix::from_fn(2, |i, j| if i == j { (i + 1) as f64 } else { 0.25 }),
        ];
        let family = ModelFamily::new(d.clone(), betas.clone(), covs.clone()).unwrap();
        let y = vec2(0.7, 0.9);
        let f = make_composite_witness(&family, &y).unwrap();

        // Designated moments: mean Xβ*, covariance Λ*.
        let mu_star = d.matrix() * &betas[0];
        assert!((f.moment1() - &mu_star).norm() < 1e-10);
        assert!((f.moment2_central().as_matrix() - covs[0].as_matrix()).norm() < 1e-10);

        // Support dominates every per-(β, Λ) witness and the span set.
        for beta in &betas {
            for lam in &covs {
                let w = make_witness_mean_cov(&d, beta, lam).unwrap();
                assert!(w.support_included_in(&f));
            }
        }
        for z in canonical_span_set(2) {
            assert!(f
                .atoms()
                .iter()
                .any(|a| max_norm_distance(a, &z) <= ATOM_MERGE_TOL));
        }
    }

    #[test]
    fn iid_product_builds_lexicographic_grid() {
        let f = DiscreteDistribution::iid_product(&[-1.0, 2.0], &[0.75, 0.25], 2).unwrap();
        assert_eq!(f.support_size(), 4);
        assert_eq!(f.atoms()[0], vec2(-1.0, -1.0));
        assert_eq!(f.atoms()[1], vec2(-1.0, 2.0));
        assert_eq!(f.weights()[0], 0.5625);
        let m = f.moment1();
        // E[coordinate] = 0.75·(−1) + 0.25·2 = −0.25.
        assert!((m[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn distribution_json_round_trip() {
        let f = DiscreteDistribution::new(vec![vec2(1.0, 2.0), vec2(-0.5, 0.25)], vec![0.6, 0.4])
            .unwrap();
        let back = DiscreteDistribution::from_json(&f.to_json()).unwrap();
        assert_eq!(back.support_size(), 2);
        assert_eq!(back.weights()[1], 0.4);
        assert_eq!(back.atoms()[0], vec2(1.0, 2.0));
    }
}
