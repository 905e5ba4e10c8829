use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension { context: &'static str, expected: usize, got: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance not PD")]
    NotPositiveDefinite,

    #[error("singular GLS system")]
    SingularGls,

    #[error("predictor variant {variant} is incompatible with a fit on {training}")]
    IncompatibleVariant { variant: &'static str, training: &'static str },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("calibration failed at iteration {iteration}: {source}")]
    Calibration {
        iteration: usize,
        /// Iterations completed before the failure.
        trace: Vec<crate::calibrate::TraceEntry>,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown test function id {0}")]
    UnknownTestFunction(u32),

    #[error("simulator failed at stage {stage}: {message}")]
    Simulator { stage: usize, message: String },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension { context, expected, got }
    }

    /// Short machine-parsable class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::InvalidData(_) => "invalid-data",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NotPositiveDefinite => "not-pd",
            Error::SingularGls => "singular-gls",
            Error::IncompatibleVariant { .. } => "incompatible-variant",
            Error::Optimization(_) => "optimization",
            Error::Calibration { .. } => "calibration",
            Error::UnknownTestFunction(_) => "unknown-test-function",
            Error::Simulator { .. } => "simulator",
        }
    }
}
