use thiserror::Error;

use crate::mmzd::InfeasibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its contract. `field` is a dotted path
    /// such as `game.orgs[1].compute_coeff`.
    #[error("{field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("invalid joint profile: {0}")]
    InvalidProfile(String),

    #[error(
        "state space has {states} states, above the enumeration cap of {cap}; \
         use on-the-fly simulation instead of an explicit matrix"
    )]
    StateSpaceTooLarge { states: u128, cap: u64 },

    #[error("strategy of org {org} is not a probability distribution at state {state}: {detail}")]
    NotStochastic {
        org: usize,
        state: String,
        detail: String,
    },

    #[error("phi must be nonzero")]
    ZeroPhi,

    #[error(
        "alpha0 = {alpha0} lies outside the feasible interval [{min}, {max}]; \
         violated states: {violated:?}"
    )]
    AlphaOutOfBounds {
        alpha0: f64,
        min: f64,
        max: f64,
        violated: Vec<u64>,
    },

    #[error("no feasible welfare-pinning strategy: {0}")]
    Infeasible(InfeasibilityReport),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}
