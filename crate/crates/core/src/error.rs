use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("system is not stable: {0}")]
    Unstable(String),

    #[error("pole on the imaginary axis at omega = {omega}")]
    PoleOnAxis { omega: f64 },

    #[error("zero frequency response at omega = {omega}, cannot invert")]
    ZeroResponse { omega: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate passivation matrix: {0}")]
    DegenerateMatrix(String),

    #[error("transformation wiring error: {0}")]
    Wiring(String),

    #[error("transformed system is singular at omega = {omega}")]
    SingularFrequency { omega: f64 },

    #[error("non-finite cost measurement: {0}")]
    Measurement(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("records are not comparable: {0}")]
    Comparison(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
