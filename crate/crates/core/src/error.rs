use thiserror::Error;

/// Every failure the library can report.
///
/// Variant names double as stable identifiers in verification reports (see
/// [`Error::name`]), so renaming one is a report-format change.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("algebra closure exceeded {cap} dimensions")]
    ClosureOverflow { cap: usize },
    #[error("element is not in the algebra (residual {residual:.3e})")]
    NotInAlgebra { residual: f64 },
    #[error("inclusion is not a unital injective *-homomorphism: {0}")]
    NotHomomorphism(String),
    #[error("invalid conditional expectation: {0}")]
    InvalidCe(String),
    #[error("GNS representation is not faithful")]
    NotFaithful,
    #[error("left action does not match the coefficient algebra: {0}")]
    ActionMismatch(String),
    #[error("operator does not intertwine the left actions (defect {defect:.3e})")]
    IntertwineViolation { defect: f64 },
    #[error("operator is not adjointable (defect {defect:.3e})")]
    NotAdjointable { defect: f64 },
    #[error("factors do not share the coefficient algebra")]
    MixedCoefficients,
    #[error("unknown factor index {0}")]
    IndexUnknown(usize),
    #[error("truncation overflow: need level {needed}, truncation is {truncation}")]
    TruncationOverflow { needed: usize, truncation: usize },
    #[error("level {level} is outside 0..={truncation}")]
    LevelOutOfRange { level: usize, truncation: usize },
    #[error("compression is not in the factor (residual {residual:.3e})")]
    NotInFactor { residual: f64 },
    #[error("seed representation is not a unital *-representation: {0}")]
    SeedNotStar(String),
    #[error("restricted expectation of factor {factor} has non-faithful GNS representation")]
    NotFaithfulRestriction { factor: usize },
    #[error("expectation of factor {factor} maps the subalgebra outside the coefficients (residual {residual:.3e})")]
    RangeViolation { factor: usize, residual: f64 },
    #[error("block {tuple:?} does not match its induced representation: {detail}")]
    BlockMismatch { tuple: Vec<usize>, detail: String },
    #[error("map is not unital completely positive: {0}")]
    NotUcp(String),
    #[error("map is not a bimodule map (defect {defect:.3e})")]
    NotBimodule { defect: f64 },
    #[error("target expectation composed with the map differs from the source expectation (defect {defect:.3e})")]
    ExpectationMismatch { defect: f64 },
    #[error("compressed operator is not in the target word span (residual {residual:.3e})")]
    NotInTarget { residual: f64 },
    #[error("word of length {len} exceeds the limit {max}")]
    WordTooLong { len: usize, max: usize },
    #[error("non-crossing moments need scalar coefficients")]
    NotScalarCoefficients,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
}

impl Error {
    /// Stable identifier used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonFinite => "NonFinite",
            Error::NotHermitian { .. } => "NotHermitian",
            Error::NotPsd { .. } => "NotPSD",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::ClosureOverflow { .. } => "ClosureOverflow",
            Error::NotInAlgebra { .. } => "NotInAlgebra",
            Error::NotHomomorphism(_) => "NotHomomorphism",
            Error::InvalidCe(_) => "InvalidCE",
            Error::NotFaithful => "NotFaithful",
            Error::ActionMismatch(_) => "ActionMismatch",
            Error::IntertwineViolation { .. } => "IntertwineViolation",
            Error::NotAdjointable { .. } => "NotAdjointable",
            Error::MixedCoefficients => "MixedCoefficients",
            Error::IndexUnknown(_) => "IndexUnknown",
            Error::TruncationOverflow { .. } => "TruncationOverflow",
            Error::LevelOutOfRange { .. } => "LevelOutOfRange",
            Error::NotInFactor { .. } => "NotInFactor",
            Error::SeedNotStar(_) => "SeedNotStar",
            Error::NotFaithfulRestriction { .. } => "NotFaithfulRestriction",
            Error::RangeViolation { .. } => "RangeViolation",
            Error::BlockMismatch { .. } => "BlockMismatch",
            Error::NotUcp(_) => "NotUCP",
            Error::NotBimodule { .. } => "NotBimodule",
            Error::ExpectationMismatch { .. } => "ExpectationMismatch",
            Error::NotInTarget { .. } => "NotInTarget",
            Error::WordTooLong { .. } => "WordTooLong",
            Error::NotScalarCoefficients => "NotScalarCoefficients",
            Error::Parse { .. } => "ParseError",
            Error::Schema { .. } => "SchemaError",
            Error::InvalidTolerance(_) => "InvalidTolerance",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
