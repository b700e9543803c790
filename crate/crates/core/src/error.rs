use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AuditError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown criterion `{0}`")]
    UnknownCriterion(String),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("category `{0}` is the non-target category")]
    NonTargetCategory(String),

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),

    #[error("conflicting values for cell (unit `{unit}`, annotator `{annotator}`, criterion `{criterion}`)")]
    ConflictingCell {
        unit: String,
        annotator: String,
        criterion: String,
    },

    #[error("threshold {threshold} outside 0..={panel_size}")]
    ThresholdOutOfRange { threshold: u32, panel_size: u32 },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty vote distribution for criterion `{0}`")]
    EmptyDistribution(String),

    #[error("focus set for criterion `{criterion}` has {size} units, need at least 2")]
    FocusTooSmall { criterion: String, size: usize },

    #[error("panel size {panel_size} exceeds pool of {pool}")]
    PanelTooLarge { panel_size: usize, pool: usize },

    #[error("variants cover different criterion sets")]
    MismatchedCriteria,

    #[error("invalid labels: {0}")]
    Labels(String),

    #[error("invalid prompt template: {0}")]
    Template(String),

    #[error("invalid panel configuration: {0}")]
    PanelConfig(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("invalid planted spec: {0}")]
    PlantedSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl AuditError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AuditError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        AuditError::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 for bad input, 2 for a broken internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            AuditError::Invariant(_) => 2,
            _ => 1,
        }
    }
}
