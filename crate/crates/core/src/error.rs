use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (negative price,
    /// patience outside `[0, 1 - Γ]`, zero perturbation, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A demand process, mixture or design failed validation.
    #[error("invalid construction: {0}")]
    Construction(String),

    /// The demand curve has a kink at the requested price.
    #[error("demand is not differentiable at p = {price}")]
    NonDifferentiable { price: f64 },

    /// Mutually inconsistent inputs, e.g. different reference prices in the
    /// demand process and the design.
    #[error("configuration error: {0}")]
    Config(String),

    /// An estimator was applied to aggregates of the wrong shape.
    #[error("usage error: {0}")]
    Usage(String),

    /// Two algebraically identical computations disagreed.
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
}
