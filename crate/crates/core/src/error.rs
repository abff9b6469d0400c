use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. Hypothesis and group indices are stored
/// 0-based and displayed 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("hypothesis {} is listed in more than one group (again in group {})", .index + 1, .group + 1)]
    Overlap { index: usize, group: usize },
    #[error("hypothesis {} is not covered by any group", .index + 1)]
    Gap { index: usize },
    #[error("group {} is empty", .group + 1)]
    EmptyGroup { group: usize },
    #[error("hypothesis {} in group {} is out of range for m = {m}", .index + 1, .group + 1)]
    IndexOutOfRange { index: usize, group: usize, m: usize },
    #[error("group {} out of range for l = {l}", .group + 1)]
    GroupOutOfRange { group: usize, l: usize },
    #[error("the group selection is empty")]
    EmptySelection,
    #[error("selection must be neither empty nor all groups")]
    SelectionBoundary,
    #[error("{name} must lie in (0, 1), got {value}")]
    InvalidLevel { name: &'static str, value: f64 },
    #[error("lambda must lie in (0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("step-up denominator {denom} is smaller than the {finite} finite p-values")]
    Denominator { denom: usize, finite: usize },
    #[error("p-value 0 multiplied by an infinite weight at hypothesis {}", .index + 1)]
    ZeroTimesInfinity { index: usize },
    #[error("invalid p-value {value} at hypothesis {}", .index + 1)]
    InvalidPValue { index: usize, value: f64 },
    #[error("invalid weight {value} for group {}", .group + 1)]
    InvalidWeight { group: usize, value: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid lambda grid: {0}")]
    Grid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("group {}: {source}", .group + 1)]
    InGroup { group: usize, source: Box<Error> },
    #[error("replication {rep}: {source}")]
    InRep { rep: usize, source: Box<Error> },
    #[error("oracle sGBH and oracle GBH disagree at alpha = {alpha}: {detail}")]
    OracleMismatch { alpha: f64, detail: String },
}

impl Error {
    pub(crate) fn in_group(self, group: usize) -> Self {
        Error::InGroup { group, source: Box::new(self) }
    }

    pub(crate) fn in_rep(self, rep: usize) -> Self {
        Error::InRep { rep, source: Box::new(self) }
    }
}

pub(crate) fn check_level(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel { name, value })
    }
}
