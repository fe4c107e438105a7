use alloc::string::String;

/// Errors produced by the structure analysis pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The block decomposition of a *-algebra could not be certified.
    #[error("algebra decomposition failed: {reason} (residual {residual:.3e})")]
    DecompositionFailed { reason: String, residual: f64 },

    /// The KI decomposition did not pass verification after all retries.
    #[error("KI decomposition failed after {rounds} rounds: {reason} (residual {residual:.3e})")]
    KiFailed {
        reason: String,
        rounds: usize,
        residual: f64,
    },

    /// Two joint members share one reduced state, so reduced dynamics is not well defined.
    #[error(
        "ill-posed initial condition: members {first} and {second} have equal reduced states \
         (joint trace distance {joint_distance:.3e})"
    )]
    IllPosedInitialCondition {
        first: usize,
        second: usize,
        joint_distance: f64,
    },

    #[error("post-selection failed: outcome probability {probability:.3e} is negligible")]
    PostSelectionFailed { probability: f64 },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
