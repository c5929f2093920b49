use thiserror::Error;

/// Errors produced by the shape, kernel, classifier and evaluation layers.
#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate configuration: all landmarks coincide (size {size:e})")]
    DegenerateConfiguration { size: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("class {label} has no training samples")]
    EmptyClass { label: u32 },

    #[error(
        "K + lambda*I is not positive definite for class {label} \
         (Gram min eigenvalue {min_eigenvalue:e}, lambda {lambda:e})"
    )]
    FactorizationFailure {
        label: u32,
        min_eigenvalue: f64,
        lambda: f64,
    },

    #[error("extrinsic mean is not unique: top eigenvalues {top:e} and {second:e} are too close")]
    NonUniqueMean { top: f64, second: f64 },

    #[error("class {label} has {available} samples, {required} required")]
    InsufficientClassSize {
        label: u32,
        available: usize,
        required: usize,
    },

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: expected {expected} landmarks, found {found}")]
    InconsistentLandmarkCount {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: label {label} is not listed in the class names")]
    UnknownLabel { line: usize, label: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ShapeError {
    /// Process exit code for this error under the CLI contract
    /// (2 I/O or parse, 3 data validation, 4 numerical failure).
    pub fn exit_code(&self) -> i32 {
        match self {
            ShapeError::Io(_)
            | ShapeError::Json(_)
            | ShapeError::Parse { .. }
            | ShapeError::InconsistentLandmarkCount { .. }
            | ShapeError::UnknownLabel { .. } => 2,
            ShapeError::FactorizationFailure { .. } | ShapeError::NonUniqueMean { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ShapeError>;
