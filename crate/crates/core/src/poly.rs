//! Multivariate polynomials of total degree ≤ 4 on Rⁿ, stored as
//! constant + linear + quadratic-kernel parts plus explicit higher-order
//! monomials. Degree 4 is the ceiling because variances of quadratic
//! estimators are the highest-order quantities the toolkit evaluates.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{sym_vec, sym_vec_len, SymMatrix};

/// Maximum supported total degree.
pub const MAX_DEGREE: u32 = 4;

/// A single monomial c·y_{v₁}·y_{v₂}·… identified by its sorted variable
/// index list (repeats encode powers). Used for degrees 3 and 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    /// Sorted variable indices with multiplicity; length = total degree.
    pub vars: Vec<usize>,
}

/// Polynomial p(y) = c + aᵀy + yᵀQy + Σ monomials, with Q symmetric.
#[derive(Debug, Clone)]
pub struct Polynomial {
    dim: usize,
    constant: f64,
    linear: DVector<f64>,
    quadratic: SymMatrix,
    higher: Vec<Monomial>,
}

impl Polynomial {
    /// The zero polynomial on Rⁿ.
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            constant: 0.0,
            linear: DVector::zeros(dim),
            quadratic: SymMatrix::zeros(dim),
            higher: Vec::new(),
        }
    }

    /// Constant polynomial.
    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(dim);
        p.constant = c;
        p
    }

    /// Affine polynomial c + aᵀy.
    pub fn affine(c: f64, a: DVector<f64>) -> Self {
        let dim = a.len();
        Polynomial {
            dim,
            constant: c,
            linear: a,
            quadratic: SymMatrix::zeros(dim),
            higher: Vec::new(),
        }
    }

    /// Pure quadratic form yᵀQy.
    pub fn quadratic_form(q: SymMatrix) -> Self {
        let dim = q.dim();
        Polynomial {
            dim,
            constant: 0.0,
            linear: DVector::zeros(dim),
            quadratic: q,
            higher: Vec::new(),
        }
    }

    /// Builds from all four parts, validating shapes and the degree ceiling.
    pub fn from_parts(
        constant: f64,
        linear: DVector<f64>,
        quadratic: SymMatrix,
        higher: Vec<Monomial>,
    ) -> Result<Self> {
        let dim = linear.len();
        if quadratic.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "quadratic kernel is {}x{}, linear part has length {dim}",
                quadratic.dim(),
                quadratic.dim()
            )));
        }
        for m in &higher {
            if m.vars.len() > MAX_DEGREE as usize {
                return Err(Error::DegreeTooHigh(format!(
                    "monomial of degree {} exceeds the supported maximum {MAX_DEGREE}",
                    m.vars.len()
                )));
            }
            if m.vars.iter().any(|&v| v >= dim) {
                return Err(Error::DimensionMismatch(format!(
                    "monomial references variable {} in dimension {dim}",
                    m.vars.iter().max().unwrap()
                )));
            }
        }
        let mut higher = higher;
        for m in &mut higher {
            m.vars.sort_unstable();
        }
        Ok(Polynomial {
            dim,
            constant,
            linear,
            quadratic,
            higher,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn linear_part(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn quadratic_part(&self) -> &SymMatrix {
        &self.quadratic
    }

    pub fn higher_terms(&self) -> &[Monomial] {
        &self.higher
    }

    /// Total degree of the polynomial (0 for a constant).
    pub fn degree(&self) -> u32 {
        let mut d = 0;
        if self.linear.iter().any(|&v| v != 0.0) {
            d = d.max(1);
        }
        if self.quadratic.max_abs() != 0.0 {
            d = d.max(2);
        }
        for m in &self.higher {
            if m.coeff != 0.0 {
                d = d.max(m.vars.len() as u32);
            }
        }
        d
    }

    /// Evaluates the polynomial at `y`.
    pub fn eval(&self, y: &DVector<f64>) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "polynomial on R^{} evaluated at a vector of length {}",
                self.dim,
                y.len()
            )));
        }
        let mut value = self.constant + self.linear.dot(y);
        value += (y.transpose() * self.quadratic.as_matrix() * y)[(0, 0)];
        for m in &self.higher {
            let mut term = m.coeff;
            for &v in &m.vars {
                term *= y[v];
            }
            value += term;
        }
        Ok(value)
    }

    /// Sum of two polynomials on the same space.
    pub fn add(&self, other: &Polynomial) -> Result<Polynomial> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "polynomial dimensions differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        let quadratic = SymMatrix::new(self.quadratic.as_matrix() + other.quadratic.as_matrix())?;
        let mut higher = self.higher.clone();
        higher.extend(other.higher.iter().cloned());
        let merged = merge_monomials(higher);
        Polynomial::from_parts(
            self.constant + other.constant,
            &self.linear + &other.linear,
            quadratic,
            merged,
        )
    }

    /// Scales all coefficients.
    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p = self.clone();
        p.constant *= s;
        p.linear *= s;
        p.quadratic = SymMatrix::from_fn(self.dim, |i, j| s * self.quadratic.as_matrix()[(i, j)]);
        for m in &mut p.higher {
            m.coeff *= s;
        }
        p
    }

    /// Product of two polynomials; errors if the product would exceed degree 4.
    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "polynomial dimensions differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        if self.degree() + other.degree() > MAX_DEGREE {
            return Err(Error::DegreeTooHigh(format!(
                "product of degrees {} and {} exceeds the supported maximum {MAX_DEGREE}",
                self.degree(),
                other.degree()
            )));
        }
        let mut products: Vec<Monomial> = Vec::new();
        for a in self.monomials() {
            for b in other.monomials() {
                let coeff = a.coeff * b.coeff;
                if coeff == 0.0 {
                    continue;
                }
                let mut vars = a.vars.clone();
                vars.extend_from_slice(&b.vars);
                vars.sort_unstable();
                products.push(Monomial { coeff, vars });
            }
        }
        Polynomial::from_monomials(self.dim, products)
    }

    /// Expands the structured parts into a flat monomial list
    /// (yᵀQy contributes Q_ii·y_i² and 2Q_ij·y_iy_j for i<j).
    pub fn monomials(&self) -> Vec<Monomial> {
        let mut out = Vec::new();
        if self.constant != 0.0 {
            out.push(Monomial {
                coeff: self.constant,
                vars: vec![],
            });
        }
        for i in 0..self.dim {
            if self.linear[i] != 0.0 {
                out.push(Monomial {
                    coeff: self.linear[i],
                    vars: vec![i],
                });
            }
        }
        let q = self.quadratic.as_matrix();
        for i in 0..self.dim {
            for j in i..self.dim {
                let c = if i == j { q[(i, i)] } else { 2.0 * q[(i, j)] };
                if c != 0.0 {
                    out.push(Monomial {
                        coeff: c,
                        vars: vec![i, j],
                    });
                }
            }
        }
        out.extend(self.higher.iter().cloned());
        out
    }

    /// Rebuilds the structured representation from a flat monomial list.
    pub fn from_monomials(dim: usize, monomials: Vec<Monomial>) -> Result<Polynomial> {
        let mut constant = 0.0;
        let mut linear = DVector::zeros(dim);
        let mut quad = DMatrix::zeros(dim, dim);
        let mut higher: Vec<Monomial> = Vec::new();
        for m in merge_monomials(monomials) {
            match m.vars.len() {
                0 => constant += m.coeff,
                1 => linear[m.vars[0]] += m.coeff,
                2 => {
                    let (i, j) = (m.vars[0], m.vars[1]);
                    if i == j {
                        quad[(i, i)] += m.coeff;
                    } else {
                        quad[(i, j)] += 0.5 * m.coeff;
                        quad[(j, i)] += 0.5 * m.coeff;
                    }
                }
                3 | 4 => higher.push(m),
                d => {
                    return Err(Error::DegreeTooHigh(format!(
                        "monomial of degree {d} exceeds the supported maximum {MAX_DEGREE}"
                    )))
                }
            }
        }
        Polynomial::from_parts(constant, linear, SymMatrix::new(quad)?, higher)
    }

    /// Coordinate vector (c, a, sym_vec(Q)) of a degree-≤2 polynomial in
    /// R^{1+n+n(n+1)/2}. Errors when cubic or quartic terms are present.
    pub fn coefficient_vector(&self) -> Result<DVector<f64>> {
        if self.higher.iter().any(|m| m.coeff != 0.0) {
            return Err(Error::DegreeTooHigh(
                "coefficient vector is defined for polynomials of degree <= 2".into(),
            ));
        }
        let n = self.dim;
        let mut v = DVector::zeros(1 + n + sym_vec_len(n));
        v[0] = self.constant;
        for i in 0..n {
            v[1 + i] = self.linear[i];
        }
        let q = sym_vec(&self.quadratic);
        for (idx, &c) in q.as_vector().iter().enumerate() {
            v[1 + n + idx] = c;
        }
        Ok(v)
    }

    /// Length of [`Polynomial::coefficient_vector`] for dimension n.
    pub fn coefficient_len(dim: usize) -> usize {
        1 + dim + sym_vec_len(dim)
    }
}

fn merge_monomials(monomials: Vec<Monomial>) -> Vec<Monomial> {
    let mut map: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for m in monomials {
        let mut vars = m.vars;
        vars.sort_unstable();
        *map.entry(vars).or_insert(0.0) += m.coeff;
    }
    map.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(vars, coeff)| Monomial { coeff, vars })
        .collect()
}
