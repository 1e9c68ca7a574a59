use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state became non-finite at time index {index} (trajectory {trajectory})")]
    Blowup { index: usize, trajectory: usize },

    #[error("dataset construction failed: {failed} of {attempted} trajectories blew up")]
    DatasetConstruction { failed: usize, attempted: usize },

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged: loss term {term} became non-finite at iteration {iteration}")]
    TrainingDivergence { term: usize, iteration: usize },

    #[error("series has no oscillatory component")]
    NoOscillation,

    #[error("requested rank {requested} exceeds achievable rank {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("file format error: {0}")]
    Format(String),

    #[error("dataset hash mismatch: checkpoint records {recorded}, dataset is {actual}")]
    HashMismatch { recorded: String, actual: String },

    #[error(transparent)]
    Shape(#[from] ndarray::ShapeError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
