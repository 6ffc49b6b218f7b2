use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the registration toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("frame has no pixel with valid depth")]
    EmptyFrame,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("misaligned inputs: {0}")]
    MisalignedInputs(String),

    #[error("too few correspondences: {found} survived filtering, at least 3 required")]
    TooFewCorrespondences { found: usize },

    #[error("static set is empty")]
    EmptyStaticSet,

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("trajectory labels differ: {0}")]
    LabelMismatch(String),

    #[error("too few poses: {0}")]
    TooFewPoses(String),

    #[error("PLY parse error at byte {offset}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        offset: u64,
        line: Option<usize>,
        message: String,
    },

    #[error("schema error in {}: field `{field}`: {message}", file.display())]
    Schema {
        file: PathBuf,
        field: String,
        message: String,
    },

    #[error("unsupported format version {found} in {}", file.display())]
    UnsupportedVersion { file: PathBuf, found: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        file: impl Into<PathBuf>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            file: file.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}
