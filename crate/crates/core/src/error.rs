use thiserror::Error;

/// Errors raised by the pipeline. `code()` gives the stable identifier used in reports.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("REJECT_PERIODIC: period {period} found")]
    RejectPeriodic { period: usize },
    #[error("REJECT_NOT_PRIMITIVE: no power of the substitution matrix up to {bound} is positive")]
    RejectNotPrimitive { bound: usize },
    #[error("MALFORMED_SPEC: {0}")]
    MalformedSpec(String),
    #[error("NO_SEED: no symbol pair generates a periodic point")]
    NoSeed,
    #[error("SYSTEM_MISMATCH")]
    SystemMismatch,
    #[error("AMBIENT_MISMATCH")]
    AmbientMismatch,
    #[error("EMPTY_INPUT")]
    EmptyInput,
    #[error("OUT_OF_DOMAIN")]
    OutOfDomain,
    #[error("EMPTY_COMPOSITION")]
    EmptyComposition,
    #[error("DEPTH_INSUFFICIENT: need scan depth {needed}")]
    DepthInsufficient { needed: usize },
    #[error("NOT_MINIMAL: no return within {bound}")]
    NotMinimal { bound: usize },
    #[error("INCONCLUSIVE")]
    Inconclusive,
    #[error("SINGLETON_NET")]
    SingletonNet,
    #[error("BOUNDARY_SITE")]
    BoundarySite,
    #[error("BLOCK_SPLIT at germ {germ}")]
    BlockSplit { germ: i64 },
    #[error("LEVEL_STALL at level {level}")]
    LevelStall { level: usize },
    #[error("NONCONSTANT_HEIGHT in block {block}")]
    NonconstantHeight { block: usize },
    #[error("GLUE_MISMATCH: {0}")]
    GlueMismatch(String),
    #[error("NOT_NESTED: {0}")]
    NotNested(String),
    #[error("LEVEL_MISMATCH")]
    LevelMismatch,
    #[error("DIMENSION_DRIFT")]
    DimensionDrift,
    #[error("INSUFFICIENT_DATA: {0}")]
    InsufficientData(String),
    #[error("IO: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::RejectPeriodic { .. } => "REJECT_PERIODIC",
            Error::RejectNotPrimitive { .. } => "REJECT_NOT_PRIMITIVE",
            Error::MalformedSpec(_) => "MALFORMED_SPEC",
            Error::NoSeed => "NO_SEED",
            Error::SystemMismatch => "SYSTEM_MISMATCH",
            Error::AmbientMismatch => "AMBIENT_MISMATCH",
            Error::EmptyInput => "EMPTY_INPUT",
            Error::OutOfDomain => "OUT_OF_DOMAIN",
            Error::EmptyComposition => "EMPTY_COMPOSITION",
            Error::DepthInsufficient { .. } => "DEPTH_INSUFFICIENT",
            Error::NotMinimal { .. } => "NOT_MINIMAL",
            Error::Inconclusive => "INCONCLUSIVE",
            Error::SingletonNet => "SINGLETON_NET",
            Error::BoundarySite => "BOUNDARY_SITE",
            Error::BlockSplit { .. } => "BLOCK_SPLIT",
            Error::LevelStall { .. } => "LEVEL_STALL",
            Error::NonconstantHeight { .. } => "NONCONSTANT_HEIGHT",
            Error::GlueMismatch(_) => "GLUE_MISMATCH",
            Error::NotNested(_) => "NOT_NESTED",
            Error::LevelMismatch => "LEVEL_MISMATCH",
            Error::DimensionDrift => "DIMENSION_DRIFT",
            Error::InsufficientData(_) => "INSUFFICIENT_DATA",
            Error::Io(_) => "IO",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
