//! Shared error type for all estimator-toolkit operations.

use thiserror::Error;

/// Errors surfaced by construction, verification, and optimization routines.
///
/// Every variant carries a human-readable detail string; callers that need to
/// branch on the failure class can match on the variant itself.
#[derive(Debug, Error)]
pub enum Error {
    /// Operands have incompatible shapes (matrix dimensions, vector lengths,
    /// coordinate counts).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix fails a rank requirement (e.g. a design matrix that is not
    /// full column rank).
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// A matrix required to be positive (semi)definite is not.
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A discrete distribution violates its invariants (weights not summing
    /// to one, negative weights, malformed atoms).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A polynomial exceeds the supported degree bound.
    #[error("unsupported degree: {0}")]
    DegreeTooHigh(String),

    /// A distribution's moments disagree with the model it is paired with.
    #[error("moment mismatch: {0}")]
    MomentMismatch(String),

    /// A witness distribution fails feasibility for the constraint set it is
    /// supposed to certify (wrong support, zero weights, nonzero expectations).
    #[error("infeasible witness: {0}")]
    InfeasibleWitness(String),

    /// An estimator violates the membership constraints of the class an
    /// operation requires it to belong to.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// An operation's precondition does not hold (e.g. sample-size bound).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Malformed serialized input (JSON schema violations, ragged matrices).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
