use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("malformed graph document: {0}")]
    GraphFormat(String),

    #[error("malformed tensor: {0}")]
    TensorFormat(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("path enumeration would produce {count} paths, above the cap of {cap}")]
    EnumerationCap { count: f64, cap: usize },

    #[error("the graph has zero total probability under the given posteriors")]
    ZeroProbability,

    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::ZeroProbability | Error::Diverged { .. })
    }
}
