use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(
        "matrix is not positive definite at grid index {index} (min eigenvalue {min_eig:.3e})"
    )]
    PositivityViolation { index: usize, min_eig: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("imaginary residue {residue:.3e} exceeds 1e-10 in a real-valued contraction")]
    ImaginaryResidue { residue: f64 },

    #[error("eigenvalue {value:.6} outside the declared range [{lo}, {hi}]")]
    EigRangeViolation { value: f64, lo: f64, hi: f64 },

    #[error("no positivity shift in the schedule produced strictly positive weights (min beta {min_beta:.3e})")]
    ShiftFailure { min_beta: f64 },

    #[error("step failed at t = {t:.6} after halving dt down to {dt:.3e} (offending grid index {index})")]
    StepFailure { t: f64, dt: f64, index: usize },

    #[error(
        "spectral tail of phi is {tail:.3e} at t = {t:.4} (threshold 1e-6); grid is under-resolved"
    )]
    TailAlarm { t: f64, tail: f64 },

    #[error(
        "line search found no admissible step that reduces the residual (residual {residual:.3e})"
    )]
    LineSearchFailure { residual: f64 },

    #[error("Newton iteration did not converge in {iters} iterations (residual {residual:.3e})")]
    MaxIterations { iters: usize, residual: f64 },

    #[error("Krylov solve stagnated at relative residual {rel_residual:.3e}")]
    LinearSolveStagnation { rel_residual: f64 },

    #[error("need at least two snapshots with t >= epsilon, found {found}")]
    InsufficientSnapshots { found: usize },

    #[error("non-positive value {value:.3e} in a positive-solution diagnostic at t = {t:.4}")]
    NonPositiveU { t: f64, value: f64 },

    #[error("series too short: {reason}")]
    SeriesTooShort { reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
