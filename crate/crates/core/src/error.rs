use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),

    #[error("need {needed} neighbours but only {available} points are available")]
    NotEnoughPoints { needed: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("duplicate station coordinates: {}", format_pairs(.0))]
    DuplicateStations(Vec<(String, String)>),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("no points within {radius} m of ({x}, {y}); mean is undefined")]
    EmptyBuffer { x: f64, y: f64, radius: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trips reference unknown station ids: {}", .0.join(", "))]
    UnknownStations(Vec<String>),

    #[error("coordinates look like longitude/latitude degrees; supply projected coordinates in meters")]
    UnprojectedCoordinates,

    #[error("only {found} households in the dataset, at least {required} are required")]
    TooFewHouseholds { found: usize, required: usize },

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("design is rank deficient: [{}] linearly dependent on [{}]", .dependent.join(", "), .basis.join(", "))]
    RankDeficient {
        dependent: Vec<String>,
        basis: Vec<String>,
    },

    #[error("local design at location {location} is rank deficient; try a larger bandwidth")]
    LocalRankDeficient { location: usize },

    #[error("hat diagonal at row {row} is {value}, leave-one-out is undefined")]
    Leverage { row: usize, value: f64 },

    #[error("degrees of freedom exhausted: trace(S) = {tr_s:.3} with n = {n}")]
    DegreesOfFreedom { tr_s: f64, n: usize },

    #[error("bandwidth criterion is non-finite across the whole search interval")]
    CriterionNonFinite,

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<Error> },

    #[error("model bundle format `{found}` is not supported (expected `{expected}`)")]
    BundleFormat { found: String, expected: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("{a}={b}"))
        .collect::<Vec<_>>()
        .join(", ")
}
