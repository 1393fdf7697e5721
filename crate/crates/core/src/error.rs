use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("rate-distortion fit infeasible: {0}")]
    FitInfeasible(String),

    #[error("infeasible allocation problem: {0}")]
    InfeasibleProblem(String),

    #[error("instance refused: search space of {cardinality} candidates exceeds limit {limit}")]
    RefusedInstance { cardinality: f64, limit: f64 },

    #[error("direction exhausted: element already at the top ladder rate")]
    DirectionExhausted,

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("segment {segment}: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True when the root cause is an infeasible allocation instance.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::InfeasibleProblem(_) => true,
            Error::Segment { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
