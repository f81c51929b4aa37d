use std::fmt;

/// Errors shared across the library.
#[derive(Debug)]
pub enum Error {
    /// A profile with no bidders, or a bidder with no bids.
    EmptyInstance,
    /// A bid failed validation (non-positive, non-finite, or increasing marginals).
    InvalidBid { bidder: String, detail: String },
    /// Bad generator, command, or mechanism configuration.
    InvalidConfig(String),
    /// An instance file could not be parsed.
    ParseError { path: String, detail: String },
    /// A tabulated objective f is not sublinear: f(l)/l increases at `index`.
    NotSublinear { index: usize },
    /// An internal monotonicity requirement was violated.
    InvariantViolation(String),
    /// The mechanism needs at least two bidders to partition.
    TooFewBidders,
    /// Supply is at or below the first peak; the outcome is X = M deterministically
    /// and no case classification applies.
    DegenerateBelowFirstPeak { supply: usize, first_peak: usize },
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyInstance => write!(f, "instance has no bids"),
            Self::InvalidBid { bidder, detail } => {
                write!(f, "invalid bid for bidder {bidder}: {detail}")
            }
            Self::InvalidConfig(detail) => write!(f, "invalid configuration: {detail}"),
            Self::ParseError { path, detail } => write!(f, "cannot parse {path}: {detail}"),
            Self::NotSublinear { index } => {
                write!(f, "objective is not sublinear: f(l)/l increases at l = {index}")
            }
            Self::InvariantViolation(detail) => write!(f, "invariant violation: {detail}"),
            Self::TooFewBidders => write!(f, "mechanism requires at least two bidders"),
            Self::DegenerateBelowFirstPeak { supply, first_peak } => write!(
                f,
                "supply {supply} is at or below the first peak {first_peak}; X = M deterministically"
            ),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
