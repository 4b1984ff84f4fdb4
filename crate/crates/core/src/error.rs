use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The nonlinear solver ran out of iterations. `step` is filled in by
    /// the trajectory driver.
    #[error("nonlinear solve did not converge{} after {iterations} iterations (residual {residual:e})",
        step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonConvergence {
        step: Option<usize>,
        iterations: usize,
        residual: f64,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    /// Pivoted QR found a vanishing diagonal entry while selecting the
    /// interpolation point for basis mode `mode` (0-based).
    #[error("interpolation basis is rank deficient at mode {mode} (pivot norm {pivot:e})")]
    RankDeficient { mode: usize, pivot: f64 },

    #[error("reference sample {sample} has zero norm")]
    ZeroNorm { sample: usize },

    #[error("invariant series is not sign-definite at step {step}: ratio {ratio:e}")]
    NonPositiveInvariant { step: usize, ratio: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
