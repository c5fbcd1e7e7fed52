use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {0} is outside the open interval (0, 1)")]
    InvalidProbability(f64),

    #[error("arm size must be at least 1")]
    EmptyArm,

    #[error("invalid 2x2 table: {0}")]
    InvalidTable(String),

    #[error("at least {needed} studies are required, got {got}")]
    TooFewStudies { needed: usize, got: usize },

    #[error("length mismatch: {estimates} estimates but {weights} weights")]
    LengthMismatch { estimates: usize, weights: usize },

    #[error("weight {index} is not a positive finite number ({value})")]
    InvalidWeight { index: usize, value: f64 },

    #[error("study {index} has zero estimated variance; inverse-variance weight is undefined")]
    ZeroVariance { index: usize },

    #[error("null moments of Q are degenerate (mean {mean}, variance {variance})")]
    DegenerateMoments { mean: f64, variance: f64 },

    #[error("eigenvalue {0} of the quadratic form is negative beyond tolerance")]
    NegativeEigenvalue(f64),

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("weighted chi-square series did not converge (error bound {0:e})")]
    NotConverged(f64),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("no analyzed replications in cell {0}")]
    EmptyCell(String),

    #[error("power curve needs a tau2 grid including 0: {0}")]
    MissingTauGrid(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
