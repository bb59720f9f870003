use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the measure, sampling, simulation and statistics layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge on [{a}, {b}] after {intervals} subintervals (estimate {estimate:e}, error {abs_error:e})")]
    QuadratureFailure {
        a: f64,
        b: f64,
        intervals: usize,
        estimate: f64,
        abs_error: f64,
    },

    #[error("integral diverges: integrand order {order} at 0 does not beat measure singularity index {index}")]
    Divergence { order: f64, index: f64 },

    #[error("sampler gave up after {iterations} rejection iterations ({what})")]
    SamplerFailure { what: &'static str, iterations: u64 },

    #[error("band minorization violated in band {band} at mark {mark}: acceptance probability {probability}")]
    MinorizationViolation {
        band: u64,
        mark: f64,
        probability: f64,
    },

    #[error("numerical blowup in scheme `{scheme}` on path {path} at t={time}: state {value}")]
    NumericalBlowup {
        scheme: String,
        path: u64,
        time: f64,
        value: f64,
        /// (time, z) of the jump events up to the blowup.
        events: Vec<(f64, f64)>,
    },

    #[error(
        "coupling integrity violated on path {path}: schemes consumed different big-jump sets"
    )]
    CouplingIntegrity { path: u64 },

    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },

    #[error("insufficient data: {usable} usable points, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::QuadratureFailure { .. } => "quadrature-failure",
            Error::Divergence { .. } => "divergence",
            Error::SamplerFailure { .. } => "sampler-failure",
            Error::MinorizationViolation { .. } => "minorization-violation",
            Error::NumericalBlowup { .. } => "numerical-blowup",
            Error::CouplingIntegrity { .. } => "coupling-integrity",
            Error::Lookup { .. } => "lookup",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::DegenerateSample(_) => "degenerate-sample",
            Error::InvalidConfig(_) => "invalid-config",
        }
    }
}
