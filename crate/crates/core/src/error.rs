use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimensions, counts or configuration values.
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// A non-finite value appeared during evaluation or training.
    #[error("numeric failure in {location}: {message}")]
    Numeric { location: String, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    /// A material field evaluated to a non-positive value.
    #[error("material property `{property}` is non-positive ({value:e}) at x = {point:?}")]
    MaterialValidity {
        property: String,
        value: f64,
        point: [f64; 3],
    },

    #[error("singular material: {0}")]
    SingularMaterial(String),

    #[error("balancing error: {0}")]
    Balancing(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),

    #[error("precision error: {0}")]
    Precision(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numeric(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the run configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse { .. }
                | Error::UnknownQuantity(_)
                | Error::Geometry(_)
                | Error::MaterialValidity { .. }
                | Error::SingularMaterial(_)
                | Error::Precision(_)
                | Error::Usage(_)
        )
    }
}
