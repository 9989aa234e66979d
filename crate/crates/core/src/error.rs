use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    // data model
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: value `{value}` outside the declared domain")]
    OutOfDomain {
        row: usize,
        column: String,
        value: String,
    },
    #[error("target column `{column}` is NULL at row {row}")]
    NullTarget { column: String, row: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is not numeric")]
    NonNumeric(String),
    #[error("column `{0}` has not been discretized")]
    NotDiscretized(String),
    #[error("invalid bin count {0}: need 2..=9 bins")]
    InvalidBins(usize),
    #[error("column `{0}` has more than 254 distinct values")]
    DomainTooLarge(String),
    #[error("subgrouping feature `{0}` is the target")]
    SubgroupIsTarget(String),
    #[error("no subgrouping features given")]
    NoSubgroupFeatures,
    #[error("subgrouping column `{column}` is NULL at row {row}")]
    NullSubgroupCell { column: String, row: usize },
    #[error("missingness probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("missingness constraints unsatisfiable: {0}")]
    Unsatisfiable(String),
    #[error("too many selection features: {0} (max {max})", max = crate::subset::MAX_FEATURES)]
    TooManyFeatures(usize),

    // subsets and lattices
    #[error("empty feature subset")]
    EmptySubset,
    #[error("feature index {index} out of range for {n} features")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid level bounds [{min}, {max}] for {n} features")]
    InvalidLevelBounds { min: usize, max: usize, n: usize },
    #[error("node (subgroup {subgroup}, subset {subset:#b}) is not in the graph")]
    UnknownNode { subgroup: usize, subset: u32 },

    // information theory
    #[error("no usable rows for the requested columns")]
    NoUsableRows,
    #[error("subset {subset:#b} contains a systematically missing feature; its MI must be predicted")]
    MissingFeature { subset: u32 },
    #[error("subset {subset:#b} is outside the entropy store")]
    NotInStore { subset: u32 },

    // sampling
    #[error("budget {budget} exceeds the {available} valid subsets")]
    BudgetExceeded { budget: usize, available: usize },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("subgroup has no present features")]
    NoPresentFeatures,
    #[error("random walk exceeded {0} steps")]
    StepLimit(u64),
    #[error("level bounds [{0}, {0}] leave the walk without moves")]
    FrozenWalk(usize),

    // learning
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least {required} labeled nodes, found {found}")]
    TooFewLabels { found: usize, required: usize },
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("model has not been trained")]
    Untrained,

    // ranking and evaluation
    #[error("K must be at least 1")]
    InvalidK,
    #[error("level {m} outside bounds [{min}, {max}]")]
    LevelOutOfBounds { m: usize, min: usize, max: usize },
    #[error("ground-truth values are unavailable for subgroup {0}")]
    NoShadow(usize),
    #[error("no score for subset {0:#b}")]
    MissingScore(u32),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("feature `{0}` is observed in no subgroup")]
    ObservedNowhere(String),
    #[error("no trained model for subgroup {0}, but it has nodes that need predictions")]
    MissingModel(usize),

    // pipeline
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing upstream artifact `{0}`; run the producing stage first")]
    MissingArtifact(PathBuf),
    #[error("malformed artifact `{path}`: {reason}")]
    Artifact { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Validation failures map to exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Header { .. }
                | Error::RowWidth { .. }
                | Error::OutOfDomain { .. }
                | Error::NullTarget { .. }
                | Error::UnknownColumn(_)
                | Error::InvalidBins(_)
                | Error::InvalidProbability(_)
                | Error::InvalidLevelBounds { .. }
                | Error::InvalidK
                | Error::LevelOutOfBounds { .. }
                | Error::SubgroupIsTarget(_)
                | Error::NoSubgroupFeatures
        )
    }
}
