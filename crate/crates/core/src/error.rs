use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wav decode error: {0}")]
    Decode(String),

    #[error("unsupported wav format: {field} = {value}")]
    UnsupportedFormat { field: &'static str, value: String },

    #[error("manifest line {line}: {message}")]
    ManifestFormat { line: usize, message: String },

    #[error("duplicate manifest entry: {0}")]
    DuplicateEntry(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("clip too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("feature dump error: {0}")]
    FeatureDump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the input data rather than the configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Decode(_)
                | Error::UnsupportedFormat { .. }
                | Error::ManifestFormat { .. }
                | Error::DuplicateEntry(_)
                | Error::InsufficientData(_)
                | Error::TooShort { .. }
                | Error::DimensionMismatch { .. }
                | Error::Persistence(_)
                | Error::FeatureDump(_)
                | Error::Io(_)
        )
    }
}
