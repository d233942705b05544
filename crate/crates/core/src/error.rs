use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The coefficient violates an admissibility requirement (a(0)=0, a>0 on (0,1], ...).
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    /// Parameter combination the theory leaves open; refused rather than extrapolated.
    #[error("out of scope: {0}")]
    OutOfScope(String),

    /// Integral does not converge for this coefficient class.
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    /// An operation received a trajectory from the wrong boundary regime.
    #[error("wrong regime: expected {expected}, got {got}")]
    WrongRegime { expected: String, got: String },

    /// A stated precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Linear system could not be factorized.
    #[error("singular system: {0}")]
    Singular(String),

    /// Iterative solver exhausted its budget.
    #[error("not converged: {0}")]
    NotConverged(String),

    /// Quotient of two quantities is undefined (zero denominator).
    #[error("undefined quotient: {0}")]
    UndefinedQuotient(String),

    /// Constant chain admits no feasible parameter.
    #[error("infeasible constants: {0}")]
    InfeasibleConstants(String),

    /// Coefficient expression failed to parse.
    #[error("expression parse error: {0}")]
    ExpressionParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
