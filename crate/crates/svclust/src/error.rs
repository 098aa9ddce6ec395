//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Variants are grouped by [`Error::exit_code`] into input errors (2),
/// numerical/degeneracy errors (3), and internal errors (4) for the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("non-numeric value `{value}` in column `{column}`, data row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("missing value in column `{column}`, data row {row}")]
    MissingValue { column: String, row: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error(
        "level `{fine}` is not nested within `{coarse}`: cluster `{fine_label}` contains \
         observations {obs_a} and {obs_b}, which belong to different `{coarse}` clusters \
         (`{coarse_a}` vs `{coarse_b}`)"
    )]
    NotNested {
        fine: String,
        coarse: String,
        fine_label: String,
        obs_a: usize,
        obs_b: usize,
        coarse_a: String,
        coarse_b: String,
    },

    #[error("partitions cover different numbers of observations ({0} vs {1})")]
    PartitionLength(usize, usize),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown clustering level `{0}`")]
    UnknownLevel(String),

    #[error("design matrix is rank deficient (column {column} is linearly dependent on the others)")]
    RankDeficient { column: usize },

    #[error("regressors of interest are collinear with the nuisance block after partialing out")]
    CollinearInterest,

    #[error(
        "the contrast has zero estimated variance: every coarse cluster has at most one \
         nonzero fine-cluster score, so fine and coarse clustering cannot be distinguished \
         on this sample"
    )]
    DegenerateVariance,

    #[error(
        "variance matrix of the contrast is numerically singular \
         (reciprocal condition number {rcond:.3e}); refusing to invert it"
    )]
    SingularVariance { rcond: f64 },

    #[error("the scalar statistic requires exactly one regressor of interest, got k1 = {0}")]
    ScalarNeedsSingleRegressor(usize),

    #[error("invalid tail/statistic combination: {0}")]
    InvalidTail(String),

    #[error("observation {obs} has leverage 1: it is fit perfectly and jackknife weights are undefined")]
    LeverageOne { obs: usize },

    #[error(
        "deleting cluster `{label}` of level `{level}` leaves a sample that is rank \
         deficient or has no residual degrees of freedom"
    )]
    InfeasibleDeletion { level: String, label: String },

    #[error("level `{0}` must have at least {2} clusters, found {1}")]
    TooFewClusters(String, usize, usize),

    #[error("B = {b} bootstrap replications cannot resolve a critical value at level {alpha}")]
    BootstrapTooSmall { b: usize, alpha: f64 },

    #[error(
        "{failed} of {total} bootstrap replications failed, which exceeds 1%; \
         the bootstrap distribution is unreliable on this sample"
    )]
    BootstrapFailures { failed: usize, total: usize },

    #[error("{failed} of {total} Monte Carlo replications failed, which exceeds 1%")]
    ExperimentFailures { failed: usize, total: usize },

    #[error(
        "sequential procedure aborted at step {step} ({fine} vs {coarse}) after \
         {completed} completed steps: {source}"
    )]
    SequentialAborted {
        step: usize,
        fine: String,
        coarse: String,
        completed: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid experiment specification: {0}")]
    InvalidSpec(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code: 2 for input errors, 3 for numerical/degeneracy errors,
    /// 4 for anything else.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            SequentialAborted { source, .. } => source.exit_code(),
            MissingColumn(_) | NonNumeric { .. } | MissingValue { .. } | NonFinite { .. }
            | NotNested { .. } | PartitionLength(..) | InvalidData(_) | UnknownLevel(_)
            | InvalidSpec(_) | UnknownPreset(_) | InvalidTail(_) | Io(_) | Csv(_) | Json(_) => 2,
            RankDeficient { .. } | CollinearInterest | DegenerateVariance
            | SingularVariance { .. } | ScalarNeedsSingleRegressor(_) | LeverageOne { .. }
            | InfeasibleDeletion { .. } | TooFewClusters(..) | BootstrapTooSmall { .. }
            | BootstrapFailures { .. } | ExperimentFailures { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
