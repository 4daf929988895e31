use thiserror::Error;

/// Errors raised by grid construction, sampling, integration and analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid must have an even number of sites >= 8, got {0}")]
    InvalidSiteCount(usize),

    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time step {dt} violates the stability bound dt <= 0.1 * min(dx^2, 1) = {bound}")]
    StabilityBound { dt: f64, bound: f64 },

    #[error("drain at x = {position} does not lie on a grid site")]
    OffSiteDrain { position: f64 },

    #[error("scheme {scheme} does not support the {boundary} boundary")]
    UnsupportedBoundary {
        scheme: &'static str,
        boundary: &'static str,
    },

    #[error("trajectory aborted at t = {time}: {reason}")]
    TrajectoryAborted { time: f64, reason: String },

    #[error("{aborted} of {total} trajectories aborted (more than 1%)")]
    TooManyAborts { aborted: usize, total: usize },

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("baseline mismatch: {0}")]
    BaselineMismatch(String),

    #[error("root finding did not converge: {0}")]
    RootFinding(String),

    #[error("singular matching system at omega = {omega}, gamma = {gamma}")]
    SingularMatching { omega: f64, gamma: f64 },

    #[error("mode integration failed: {0}")]
    Integration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSiteCount(_) => "invalid_site_count",
            Error::InvalidSpacing(_) => "invalid_spacing",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::StabilityBound { .. } => "stability_bound",
            Error::OffSiteDrain { .. } => "off_site_drain",
            Error::UnsupportedBoundary { .. } => "unsupported_boundary",
            Error::TrajectoryAborted { .. } => "trajectory_aborted",
            Error::TooManyAborts { .. } => "too_many_aborts",
            Error::InsufficientStatistics(_) => "insufficient_statistics",
            Error::BaselineMismatch(_) => "baseline_mismatch",
            Error::RootFinding(_) => "root_finding",
            Error::SingularMatching { .. } => "singular_matching",
            Error::Integration(_) => "integration",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
