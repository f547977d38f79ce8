use sleepcast_core::container::ContainerError;
use thiserror::Error;

pub type Result<T, E = EnsembleError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("non-finite feature value at column {column}")]
    NonFinite { column: usize },
    #[error("label {label}, {kind}: {source}")]
    Member {
        label: String,
        kind: String,
        #[source]
        source: Box<EnsembleError>,
    },
    #[error(transparent)]
    Container(#[from] ContainerError),
}
