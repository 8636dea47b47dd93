use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid potential exponents p = {p}, q = {q}: {reason}")]
    InvalidPotential { p: f64, q: f64, reason: &'static str },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("derivative order {0} is outside 0..=3")]
    OrderOutOfRange(u32),
    #[error("derivative of order {order} is undefined at x = 0 for p = {p}, q = {q}")]
    Undefined { order: u32, p: f64, q: f64 },
    #[error("no sign change on bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("root finder did not converge: residual {residual:e}")]
    NoConvergence { residual: f64 },
    #[error("measure has no atoms")]
    EmptyMeasure,
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("transport instance too large: {atoms} atoms (limit {limit})")]
    InstanceTooLarge { atoms: usize, limit: usize },
    #[error("linear program failed: {0}")]
    LinearProgram(String),
    #[error("flow blew up at t = {time}; reduce the time step")]
    BlowUp { time: f64 },
    #[error("no descent witness found for p = {p}, q = {q}, m = {m}")]
    WitnessNotFound { p: f64, q: f64, m: f64 },
    #[error("strict-minimum certificate could not be established")]
    Inconclusive,
    #[error("moment constraint violated by {0:e}")]
    ConstraintViolation(f64),
    #[error("search failed: {0}")]
    NotFound(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoBracket { .. }
                | Error::NoConvergence { .. }
                | Error::LinearProgram(_)
                | Error::BlowUp { .. }
                | Error::WitnessNotFound { .. }
                | Error::Inconclusive
                | Error::NotFound(_)
        )
    }
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPotential { .. } => "invalid_potential",
            Error::NonFinite(_) => "non_finite",
            Error::OrderOutOfRange(_) => "order_out_of_range",
            Error::Undefined { .. } => "undefined",
            Error::NoBracket { .. } => "no_bracket",
            Error::NoConvergence { .. } => "no_convergence",
            Error::EmptyMeasure => "empty_measure",
            Error::ZeroMass => "zero_mass",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InstanceTooLarge { .. } => "instance_too_large",
            Error::LinearProgram(_) => "linear_program",
            Error::BlowUp { .. } => "blow_up",
            Error::WitnessNotFound { .. } => "witness_not_found",
            Error::Inconclusive => "inconclusive",
            Error::ConstraintViolation(_) => "constraint_violation",
            Error::NotFound(_) => "not_found",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
