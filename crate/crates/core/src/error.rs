use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which of the two compared masks carried no voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emptiness {
    FirstEmpty,
    SecondEmpty,
    BothEmpty,
}

impl std::fmt::Display for Emptiness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Emptiness::FirstEmpty => "first mask empty",
            Emptiness::SecondEmpty => "second mask empty",
            Emptiness::BothEmpty => "both masks empty",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Nifti { path: PathBuf, message: String },

    #[error("{path}: malformed transform: {message}")]
    Transform { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("metric undefined: {0}")]
    Undefined(Emptiness),

    #[error("empty mask")]
    EmptyMask,

    #[error("singular transform (|det| = {det:e})")]
    SingularTransform { det: f64 },

    #[error("ROI not found: {0}")]
    RoiNotFound(String),

    #[error("invalid registry: {0}")]
    Registry(String),

    #[error("no sessions found under {0}")]
    NoSessions(PathBuf),

    #[error("duplicate session {subject}/{session}: {first} and {second}")]
    DuplicateSession {
        subject: String,
        session: String,
        first: PathBuf,
        second: PathBuf,
    },

    #[error("no subject has at least two sessions")]
    TooFewSessions,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("pair {session_a} vs {session_b}: {source}")]
    Pair {
        session_a: String,
        session_b: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn nifti(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Nifti {
            path: path.into(),
            message: message.into(),
        }
    }

    /// The error after stripping pair context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } => source.root(),
            other => other,
        }
    }
}
