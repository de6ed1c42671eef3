use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input failed validation; `field` names the offending field or argument.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("synthesis failed for mode {mode}: {reason}")]
    Synthesis { mode: usize, reason: String },

    #[error("no impact detected (peak {peak:e} below floor {floor:e})")]
    NoImpact { peak: f64, floor: f64 },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("dimension mismatch in {component}: {left} vs {right}")]
    DimensionMismatch {
        component: &'static str,
        left: usize,
        right: usize,
    },

    #[error("mcd needs at least one overlapping frame")]
    NoOverlap,

    #[error("store is empty")]
    EmptyStore,

    #[error("design matrix is rank deficient (rank {rank} < {cols}); collect more or more varied pairs")]
    RankDeficient { rank: usize, cols: usize },

    #[error("store does not cover objects: {0:?}")]
    Uncovered(Vec<u32>),

    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },

    #[error("store file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
