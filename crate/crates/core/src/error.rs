use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative distance {0} passed to the ABC kernel")]
    NegativeDistance(f64),

    #[error("degenerate population: every weight is zero ({context})")]
    DegeneratePopulation { context: String },

    #[error("weights must be normalized before {0}")]
    NotNormalized(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("replay stream exhausted at position {position} (recorded length {len})")]
    StreamExhausted { position: usize, len: usize },

    #[error("eigensolver failed on a {size}x{size} adjacency matrix: {detail}")]
    Eigen { size: usize, detail: String },

    #[error("particle {index}: {source}")]
    Particle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[cfg(feature = "harness")]
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_particle(self, index: usize) -> Self {
        Error::Particle {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn degenerate(context: impl Into<String>) -> Self {
        Error::DegeneratePopulation {
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
