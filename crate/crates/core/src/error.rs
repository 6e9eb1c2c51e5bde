use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid communication graph: {0}")]
    InvalidGraph(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Sum of k_i * g_i is zero, so the bus voltage is not pinned to v_ref.
    #[error("no voltage recovery: sum of k_i * g_i is zero")]
    NoVoltageRecovery,

    #[error("load infeasible: discriminant {discriminant:.6e} < 0, constant-power load cannot be served")]
    LoadInfeasible { discriminant: f64 },

    #[error("singular small-signal model: (C + Z) has condition number {condition:.3e}")]
    SingularModel { condition: f64 },

    #[error("pole hit at lambda = {re} + {im}i")]
    Pole { re: f64, im: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("gain bound undefined: {0}")]
    BoundUndefined(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("scenario error at `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
