use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} is not Hermitian (max defect {defect:e})")]
    NotHermitian { what: String, defect: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("timing grid error: {0}")]
    Grid(String),

    #[error("invalid noise model: {0}")]
    NoiseModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("optimizer did not converge: {0}")]
    NotConverged(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
