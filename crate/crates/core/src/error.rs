use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}` in input header")]
    MissingColumn(String),

    #[error("non-finite value in column `{column}` at data row {row}")]
    NonFiniteValue { row: usize, column: String },

    #[error("could not parse `{value}` in column `{column}` at data row {row}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("matched set `{0}` has a single unit; every set needs at least two")]
    SingletonSet(String),

    #[error("matched set `{set}` has {found} covariates, expected {expected}")]
    InconsistentCovariateDim {
        set: String,
        expected: usize,
        found: usize,
    },

    #[error("matched set `{set}`: {what} has length {found}, expected {expected}")]
    LengthMismatch {
        set: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dataset contains no matched sets")]
    EmptyDataset,

    #[error("matched set `{set}` has {n} units, above the enumeration cap of {cap}")]
    SetTooLarge { set: String, n: usize, cap: usize },

    #[error("invalid assignment weights: {0}")]
    InvalidWeights(String),

    #[error("unknown kind `{0}`")]
    UnknownKind(String),

    #[error("no score tabulated for value {0}")]
    MissingScore(f64),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("objective returned a non-finite value")]
    NonFiniteObjective,

    #[error("design matrix Q is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficientQ { rank: usize, cols: usize },

    #[error("design matrix Q must have fewer columns ({cols}) than matched sets ({sets})")]
    TooManyColumns { cols: usize, sets: usize },

    #[error("need at least {needed} matched sets, found {found}")]
    TooFewSets { needed: usize, found: usize },

    #[error("set {index} has leverage {leverage} too close to one")]
    LeverageOne { index: usize, leverage: f64 },

    #[error("matched set `{set}` has {above} of {n} doses above the threshold {threshold}")]
    DegenerateThreshold {
        set: String,
        threshold: f64,
        above: usize,
        n: usize,
    },

    #[error("matched set `{0}` has no dose variation")]
    ConstantDoses(String),

    #[error("matched set `{set}`: {reason}")]
    InvalidDoses { set: String, reason: String },

    #[error("bad intervention weights for set `{set}`: {reason}")]
    BadWeights { set: String, reason: String },

    #[error("matched set `{0}`: estimand coefficients differ across tied doses")]
    TiedCoefficients(String),

    #[error("confidence set is empty")]
    EmptyInterval,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::Parse { .. } => "Parse",
            Error::SingletonSet(_) => "SingletonSet",
            Error::InconsistentCovariateDim { .. } => "InconsistentCovariateDim",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyDataset => "EmptyDataset",
            Error::SetTooLarge { .. } => "SetTooLarge",
            Error::InvalidWeights(_) => "InvalidWeights",
            Error::UnknownKind(_) => "UnknownKind",
            Error::MissingScore(_) => "MissingScore",
            Error::Infeasible => "Infeasible",
            Error::Unbounded => "Unbounded",
            Error::PivotLimit(_) => "PivotLimit",
            Error::NonFiniteObjective => "NonFiniteObjective",
            Error::RankDeficientQ { .. } => "RankDeficientQ",
            Error::TooManyColumns { .. } => "TooManyColumns",
            Error::TooFewSets { .. } => "TooFewSets",
            Error::LeverageOne { .. } => "LeverageOne",
            Error::DegenerateThreshold { .. } => "DegenerateThreshold",
            Error::ConstantDoses(_) => "ConstantDoses",
            Error::InvalidDoses { .. } => "InvalidDoses",
            Error::BadWeights { .. } => "BadWeights",
            Error::TiedCoefficients(_) => "TiedCoefficients",
            Error::EmptyInterval => "EmptyInterval",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io { .. } => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }
}
