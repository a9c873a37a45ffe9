use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("factor `{0}` not found")]
    UnknownFactor(String),
    #[error("factor `{0}` is not binary (has {1} levels)")]
    NotBinary(String, usize),
    #[error("duplicate cell {0:?} in input")]
    DuplicateCell(Vec<usize>),
    #[error("invalid count in row {row}: {reason}")]
    InvalidCount { row: usize, reason: String },
    #[error("unknown column `{0}` in CSV header")]
    UnknownColumn(String),
    #[error("factor `{0}` must have at least 2 levels")]
    TooFewLevels(String),
    #[error("duplicate factor name `{0}`")]
    DuplicateFactor(String),
    #[error("level {level} out of range for factor `{factor}` ({levels} levels)")]
    LevelOutOfRange {
        factor: String,
        level: usize,
        levels: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("outcome factor `{0}` appears among the covariates")]
    OutcomeAmongCovariates(String),
    #[error("formula is not hierarchical: term {term:?} lacks subset {missing:?}")]
    NotHierarchical {
        term: Vec<String>,
        missing: Vec<String>,
    },
    #[error("outcome `{0}` absent from the log-linear formula")]
    OutcomeAbsent(String),
    #[error("model space too large: {0} factors exceeds the cap of {1}")]
    SpaceTooLarge(usize, usize),
    #[error("design matrix is rank deficient; dependent columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("empty table: total count is zero")]
    EmptyTable,
    #[error("block structure unattainable: {0}")]
    BlockStructure(String),
    #[error("constant c={0} not allowed for the projection identity")]
    BadProjectionConstant(f64),
    #[error("log posterior is not finite at the initial point")]
    NonFiniteInit,
    #[error("mode finding failed to converge after {0} iterations")]
    ModeFindingFailed(usize),
    #[error("too few draws: {0} kept, need at least {1}")]
    TooFewDraws(usize, usize),
    #[error("prior already has a flat intercept")]
    AlreadyFlatIntercept,
    #[error("enumeration mode requires a fixed g; got an Inverse-Gamma mixture")]
    MixtureNotEnumerable,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
