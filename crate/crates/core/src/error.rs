use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index ({i}, {j}) lies outside the lower triangle")]
    OutsideTriangle { i: usize, j: usize },

    #[error(
        "kernel iteration did not converge after {iterations} sweeps (last change {last_change:e})"
    )]
    KernelNotConverged { iterations: usize, last_change: f64 },

    #[error("singular pivot in row {row}")]
    SingularPivot { row: usize },

    #[error("matrix is not Hurwitz (max real part {max_real:e})")]
    NotHurwitz { max_real: f64 },

    #[error("pair (A, C) is not observable (rank {rank} < {dim})")]
    NotObservable { rank: usize, dim: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("Lyapunov residual {residual:e} exceeds tolerance")]
    LyapunovResidual { residual: f64 },

    #[error("noise intensity |sigma| = {sigma} is not below the certified tolerance {sigma_max}")]
    Uncertified { sigma: f64, sigma_max: f64 },

    #[error("damping constant c = {c} must exceed 1")]
    DampingTooSmall { c: f64 },

    #[error("numerical abort at step {step}: {what}")]
    NumericalAbort { step: usize, what: String },

    #[error("{aborted} of {total} paths aborted (limit 0.1%)")]
    ExcessiveAborts { aborted: usize, total: usize },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
