use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("basis index {0} out of range, expected 0..9")]
    BasisIndex(usize),

    #[error("boundary not classified; call Grid::classify_boundary first")]
    Unclassified,

    #[error("boundary edge {edge} has mixed-sign b·n across its quadrature points")]
    UnresolvedBoundary { edge: usize },

    #[error("anisotropy direction is not unit length at ({x}, {y}): |b| = {norm}")]
    NonUnitDirection { x: f64, y: f64, norm: f64 },

    /// The coefficient state or a freshly computed state is nonpositive.
    #[error("NEGATIVE_STATE: u = {value:e} at ({x}, {y})")]
    NegativeState { x: f64, y: f64, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("entry ({row}, {col}) out of range for a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },

    #[error("singular pivot at elimination step {step} (column {column})")]
    SingularPivot { step: usize, column: usize },

    #[error("relative error requested but the exact solution has zero L2 norm")]
    ZeroNorm,

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when this error, possibly wrapped in a step context, is a
    /// negative-state failure.
    pub fn is_negative_state(&self) -> bool {
        match self {
            Error::NegativeState { .. } => true,
            Error::Step { source, .. } => source.is_negative_state(),
            _ => false,
        }
    }

    /// Step index attached by the time loop, if any.
    pub fn step_index(&self) -> Option<usize> {
        match self {
            Error::Step { step, .. } => Some(*step),
            _ => None,
        }
    }
}
