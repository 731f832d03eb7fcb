use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid probability for {name}: {value}")]
    InvalidProbability { name: String, value: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("factor overflow: {quantity} at k={k} has an entry of magnitude {magnitude:e}")]
    FactorOverflow {
        quantity: &'static str,
        k: usize,
        magnitude: f64,
    },

    #[error("time index {k} is outside the model horizon 1..={horizon}")]
    HorizonExceeded { k: usize, horizon: usize },

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("attack noise must have zero mean, got {0:e}")]
    NonZeroMean(f64),

    #[error("filter history does not contain step {0}")]
    MissingHistory(usize),

    #[error("model does not qualify for this oracle: {0}")]
    NonQualifyingModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("Monte Carlo run {run} (root seed {seed}) failed: {source}")]
    RunFailed {
        run: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures caused by the numbers rather than by the input description.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular(_)
            | Error::FactorOverflow { .. }
            | Error::ModelInconsistency(_)
            | Error::NonFinite(_) => true,
            Error::RunFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
