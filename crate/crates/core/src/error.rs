use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value from `{primitive}` with operands {operands:?}")]
    NonFinite {
        primitive: &'static str,
        operands: Vec<f64>,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("{context}: expected dimension {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("gradient singular at {locus}")]
    Singular { locus: &'static str },

    #[error("degenerate gradient of {what}: norm {norm:e} is below the floor")]
    DegenerateGradient { what: &'static str, norm: f64 },

    #[error("singular Jacobian in pullback composition")]
    SingularJacobian,

    #[error("non-finite state at integration step {step}")]
    Integration { step: usize },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("sample times are not uniformly spaced (index {index})")]
    NonUniformTimes { index: usize },

    #[error("loss diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),

    #[error("document version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("inconsistent shape: {0}")]
    Shape(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether this error is a numerical failure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Singular { .. }
                | Error::DegenerateGradient { .. }
                | Error::SingularJacobian
                | Error::Integration { .. }
                | Error::StepUnderflow { .. }
                | Error::Diverged { .. }
        )
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { context, expected, got })
    }
}
