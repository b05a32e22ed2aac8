use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QfmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("golomb encoding supports a single layer only (got L={0})")]
    GolombMultiLayer(usize),

    #[error("block on {qubits} qubit(s) needs {expected} eigenvalues, got {got}")]
    EigenvalueCount {
        qubits: usize,
        expected: usize,
        got: usize,
    },

    #[error("eigenvalue {value} is not on the lattice 1/{scale} (tolerance {tol:e}); pick a lattice_scale that makes every eigenvalue an integer multiple")]
    NonLattice { value: f64, scale: u32, tol: f64 },

    #[error("redundancy tables live on different lattices ({0} vs {1})")]
    LatticeMismatch(u32, u32),

    #[error("spectrum too large: {size} distinct frequencies exceeds the guard of {limit}")]
    SpectrumTooLarge { size: u128, limit: u128 },

    #[error("invalid layer range h={h}, l={l} for L={layers}")]
    LayerRange { h: usize, l: usize, layers: usize },

    #[error("parameter vector has length {got}, circuit expects {expected}")]
    ParameterLength { expected: usize, got: usize },

    #[error("frequency {omega} is not in the model spectrum; nearest available: {nearest:?}")]
    FrequencyNotInSpectrum { omega: f64, nearest: Vec<f64> },

    #[error("observable norm precondition violated: {0}")]
    NormPrecondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("misaligned brickwise layout: {0}")]
    Layout(String),

    #[error("io error: {0}")]
    Io(String),
}

impl QfmError {
    /// Errors caused by bad input rather than a failure during computation.
    pub fn is_validation(&self) -> bool {
        !matches!(self, QfmError::Io(_))
    }
}

impl From<std::io::Error> for QfmError {
    fn from(e: std::io::Error) -> Self {
        QfmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QfmError>;
