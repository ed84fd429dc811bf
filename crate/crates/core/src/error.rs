use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside {expected}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("dataset has no feature columns")]
    NoFeatures,

    #[error("order statistic requested from an empty sample")]
    EmptySample,

    #[error("rank {rank} is out of range for a sample of {len}")]
    RankOutOfRange { rank: usize, len: usize },

    #[error("expected a feature vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{rows} covariate rows but {responses} responses")]
    LengthMismatch { rows: usize, responses: usize },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("split of {n} points into {n1} training points is invalid")]
    InvalidSplit { n: usize, n1: usize },

    #[error("k = {k} must lie in 1..={n}")]
    NeighborsOutOfRange { k: usize, n: usize },

    #[error("response {value} at row {row} is not strictly positive")]
    NonPositiveResponse { row: usize, value: f64 },

    #[error("spread estimate plus gamma vanishes at calibration row {row}; use gamma > 0")]
    ZeroSpread { row: usize },

    #[error("score `{0}` has no central estimator")]
    NoCenter(&'static str),
}
