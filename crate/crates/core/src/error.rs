use std::fmt;

/// Errors produced by the fusion, tracking and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The image row lies at or above the horizon, so the viewing ray never meets the road.
    #[error("point at or above the horizon (alpha + pitch = {0:.6} rad)")]
    HorizonDegenerate(f64),
    #[error("invalid extent: image {image} px, physical {physical} m")]
    InvalidExtent { image: f64, physical: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("empty set: {0}")]
    EmptySet(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: Shape, got: Shape },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("empty input")]
    EmptyInput,
    #[error("non-positive value {0} where a positive one is required")]
    NonPositive(f64),
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at line {line}, field `{path}`: {message}")]
    Parse {
        line: usize,
        path: String,
        message: String,
    },
    #[error("model file error: {0}")]
    Model(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// A matrix or tensor shape used in dimension errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape(pub Vec<usize>);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl Error {
    pub(crate) fn shape_mismatch(expected: &[usize], got: &[usize]) -> Self {
        Error::DimensionMismatch {
            expected: Shape(expected.to_vec()),
            got: Shape(got.to_vec()),
        }
    }
}
