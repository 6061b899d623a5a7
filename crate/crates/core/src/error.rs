use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("harvester fit diverged at epoch {epoch}")]
    FitDiverged { epoch: usize },

    #[error("codebook construction failed: {0}")]
    Construction(String),

    #[error("requested {requested} messages but only {bound} support sets exist")]
    Capacity { requested: u64, bound: u64 },

    #[error("power normalization failed: encoder outputs are all zero")]
    Normalization,

    #[error("training diverged at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
