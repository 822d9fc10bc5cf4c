use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("column `{column}` has {got} rows, expected {expected}")]
    ColumnLength {
        column: String,
        expected: usize,
        got: usize,
    },

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("duplicate key (entity {entity}, time {time})")]
    DuplicateKey { entity: String, time: String },

    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("indicator `{indicator}`: value {value} at row {row} is not a 0/1 flag")]
    NonBinaryFlag {
        indicator: String,
        row: usize,
        value: f64,
    },

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contributions undefined: adjusted headcount M0 is zero")]
    ZeroAdjustedHeadcount,

    #[error("no usable weight mass: every indicator is degenerate{0}")]
    NoWeightMass(String),

    #[error("infeasible solution: {0}")]
    Infeasible(String),

    #[error("design matrix is rank deficient (column `{0}`)")]
    RankDeficient(String),

    #[error("perfect separation detected: {0}")]
    Separation(String),

    #[error("no convergence after {iterations} iterations (score max-norm {score_norm:e})")]
    NoConvergence { iterations: usize, score_norm: f64 },

    #[error("need at least two clusters, found {0}")]
    TooFewClusters(usize),

    #[error("missing lag wave: {0}")]
    MissingLag(String),

    #[error("model specification: {0}")]
    Spec(String),

    #[error("model is not fitted: {0}")]
    Unfitted(String),

    #[error("empty treatment arm: {0}")]
    EmptyArm(String),

    #[error("no treated unit has a control within the caliper")]
    NoMatches,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
