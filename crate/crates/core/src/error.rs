use alloc::string::String;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RtlError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("insufficient data in domain {domain}: {rows} rows, at least {required} required")]
    InsufficientData {
        domain: String,
        rows: usize,
        required: usize,
    },
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("non-positive variance {value} for coordinate {coordinate} of domain {domain}")]
    NonpositiveVariance {
        domain: usize,
        coordinate: usize,
        value: f64,
    },
    #[error("unsupported dimensions: {0}")]
    UnsupportedDims(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl RtlError {
    pub(crate) fn mismatch(context: &str, expected: usize, found: usize) -> Self {
        RtlError::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    /// Prefixes a singular-system message with a domain label.
    pub fn in_domain(self, domain: &str) -> Self {
        match self {
            RtlError::SingularSystem(msg) => {
                RtlError::SingularSystem(alloc::format!("domain {domain}: {msg}"))
            }
            other => other,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs' shape.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            RtlError::SingularSystem(_)
                | RtlError::RankDeficient(_)
                | RtlError::NotSymmetric(_)
                | RtlError::NonFinite(_)
                | RtlError::NonpositiveVariance { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, RtlError>;
