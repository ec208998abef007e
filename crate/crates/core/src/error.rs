use alloc::string::String;

/// Errors shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("element {index} quantizes to {level}, outside [{min}, {max}]")]
    OutOfRange { index: usize, level: i64, min: i64, max: i64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = core::result::Result<T, Error>;
