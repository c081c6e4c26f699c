//! Exact construction, verification, and optimization of unbiased estimators
//! for fixed-design linear models.
//!
//! Everything is computed over finitely supported distributions, so claims
//! like "this estimator is unbiased for the whole family" or "no member of
//! the class has smaller variance" are checked as exact finite sums and
//! finite-dimensional linear algebra, not approximated.
//!
//! The layers, bottom up:
//!
//! - [`linalg`]: symmetric matrices, an isometric half-vectorization,
//!   rank-revealing decompositions, and subspace comparison.
//! - [`poly`]: multivariate polynomials up to degree four, the largest degree
//!   produced by second-moment constraints and quadratic estimators.
//! - [`model`]: fixed designs, model families, and their moment constraints
//!   as polynomial systems.
//! - [`dist`]: finite discrete distributions with exact moments, and witness
//!   constructions realizing prescribed means and covariances.
//! - [`estimator`]: linear and linear-plus-quadratic estimators with exact
//!   moments under finite distributions.
//! - [`koopmann`]: the constraint system describing the unbiased
//!   linear-plus-quadratic class and its affine parameterization.
//! - [`analysis`]: the representation oracle, minimum-variance search,
//!   orthogonality certificate, and variance comparison harness.

pub mod analysis;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod jsonio;
pub mod koopmann;
pub mod linalg;
pub mod model;
pub mod poly;

pub use error::{Error, Result};
