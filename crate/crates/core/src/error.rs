use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration invariant is violated.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An iterative kernel ran out of iterations.
    #[error("{what} did not converge after {iterations} iterations (partial value {partial})")]
    NonConvergence {
        what: &'static str,
        partial: f64,
        iterations: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Exhaustive enumeration requested above the supported size.
    #[error("N = {n} exceeds the enumeration guard of {limit}")]
    Guard { n: usize, limit: usize },

    /// The arrival vector lies outside every candidate stability region.
    #[error("arrival vector is outside both stability regions")]
    InfeasibleArrival,

    /// No bit budget up to the search bound reaches the requested fraction.
    #[error("target fraction {target} not reached for B <= {bound}")]
    SearchBound { target: f64, bound: u32 },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub(crate) fn guard(n: usize) -> Result<()> {
    if n > crate::ENUMERATION_LIMIT {
        Err(Error::Guard {
            n,
            limit: crate::ENUMERATION_LIMIT,
        })
    } else {
        Ok(())
    }
}
