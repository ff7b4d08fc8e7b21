use alloc::string::String;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. θ ∉ [−r, 0]).
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent grids, dimensions or missing model data.
    #[error("configuration error: {0}")]
    Config(String),
    /// The state became non-finite during a time step.
    #[error("simulation error on path {path} at step {step}: {detail}")]
    Simulation {
        path: usize,
        step: usize,
        detail: String,
    },
    /// A user-supplied map broke its declared contract (bounds, floors).
    #[error("validation error: {0}")]
    Validation(String),
    /// Linear algebra broke down (rank deficiency, non-finite design).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// σσᵀ is not invertible where ∇₀v has to be recovered from Z.
    #[error("singular diffusion at step {step}, path {path}")]
    Singular { step: usize, path: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
