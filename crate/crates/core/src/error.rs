use thiserror::Error;

/// Errors produced by the lattice, operator and diagnostic routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("size cap exceeded: {what} = {size} > cap {cap}")]
    SizeCap {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("invalid trim set: {0}")]
    InvalidTrim(String),

    #[error("site index {index} out of range for box with {site_count} sites")]
    SiteOutOfRange { index: usize, site_count: usize },

    #[error("invalid restriction: {0}")]
    InvalidRestriction(String),

    #[error("configuration mismatch: {0}")]
    Mismatch(String),

    #[error("trim mask is not of product form G x Z^d2; operator does not separate")]
    NotSeparable,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("realization {r} out of range (ensemble has {count})")]
    RealizationOutOfRange { r: u64, count: u64 },

    #[error("invalid shift: {0}")]
    InvalidShift(String),

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("closed form unsupported: {0}")]
    Unsupported(String),

    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("empty spectrum set")]
    EmptySet,

    #[error("degenerate ground state: spectral gap {gap:e} below {threshold:e}")]
    Degenerate { gap: f64, threshold: f64 },

    #[error("inadmissible potential: {0}")]
    Inadmissible(String),

    #[error("parity violation: {0}")]
    Parity(String),

    #[error("support violation: {0}")]
    Support(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("singular system at z = {re} + {im}i")]
    Singular { re: f64, im: f64 },

    #[error("fit range too small: {found} distinct distances, need at least {needed}")]
    FitRange { found: usize, needed: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical accuracy check failed: {0}")]
    Accuracy(String),
}

pub type Result<T> = std::result::Result<T, Error>;
