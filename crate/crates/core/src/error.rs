use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown site id {0}")]
    UnknownSite(u32),
    #[error("unknown qudit (site {site}, slot {slot})")]
    UnknownQudit { site: u32, slot: u32 },
    #[error("unknown gate id {0}")]
    UnknownGate(usize),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("invalid qca: {0}")]
    InvalidQca(String),
    #[error("time function not causal: gate {later} (later round) does not act after gate {earlier}")]
    NotCausal { earlier: usize, later: usize },
    #[error("time function missing gate {0}")]
    TimeFunctionIncomplete(usize),
    #[error("backend mismatch: {0}")]
    BackendMismatch(String),
    #[error("dense dimension {dim} exceeds cap {cap}")]
    DenseCap { dim: u128, cap: u128 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("density assumption violated: {0}")]
    Density(String),
    #[error("borrowing function invalid: {0}")]
    Borrowing(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
