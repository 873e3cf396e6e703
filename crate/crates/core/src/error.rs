use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Unparseable model or true-distribution id.
    #[error("unknown id `{id}`: {reason}")]
    UnknownId { id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("posterior draws are empty")]
    EmptyDraws,

    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("empirical loss requires draws at beta = 1, got beta = {0}")]
    NotUntempered(f64),

    #[error("inverse temperatures coincide (beta1 = beta2 = {0})")]
    DegenerateBetaPair(f64),

    #[error("sample size {0} too small (need n >= 2 so that log n > 0)")]
    SampleSizeTooSmall(usize),

    #[error("model `{model}` produced a non-finite log-density inside its support")]
    NonFiniteLogDensity { model: String },

    #[error("no finite initial point after {attempts} attempts (chain {chain})")]
    NoFiniteStart { chain: usize, attempts: usize },

    #[error("chain {chain} rejected every proposal after burn-in")]
    ChainStuck { chain: usize },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from bad user input (ids, configs, arguments)
    /// rather than a failure during computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::UnknownId { .. }
                | Error::InvalidArgument(_)
                | Error::InvalidConfig(_)
                | Error::SampleSizeTooSmall(_)
                | Error::DegenerateBetaPair(_)
        )
    }
}
