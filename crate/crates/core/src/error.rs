use thiserror::Error;

/// Errors raised by the construction and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the admissible region")]
    Domain { x: f64, y: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("derivative order {order} not supported for {what}")]
    UnsupportedOrder { order: usize, what: &'static str },

    #[error("mollification scale {l} exceeds domain margin {margin}")]
    InsufficientExtension { l: f64, margin: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("matrix field not positive definite at ({x}, {y}): smallest eigenvalue {eigenvalue}")]
    NotPositiveDefinite { x: f64, y: f64, eigenvalue: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence: {reason} (last residual {last_residual:e})")]
    NonConvergence { reason: String, last_residual: f64 },

    #[error("defect decay violated at stage {stage}: {measured:e} > {bound:e}; trace {trace:?}")]
    DecayViolation { stage: usize, measured: f64, bound: f64, trace: Vec<f64> },

    #[error("degree undefined: clearance {clearance:e} below tolerance {tolerance:e}")]
    DegreeUndefined { clearance: f64, tolerance: f64 },

    #[error("input error: {0}")]
    Input(String),

    #[error("format error in field `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("stage {stage}: {source}")]
    Stage { stage: usize, source: Box<Error> },

    #[error("phase `{phase}`: {source}")]
    Phase { phase: &'static str, source: Box<Error> },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn at_stage(self, stage: usize) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase { phase, source: Box::new(self) }
    }

    /// Innermost error after stripping stage/phase tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Phase { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
