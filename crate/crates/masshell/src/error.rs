//! Error types, one enum per subsystem.

use thiserror::Error;

/// Errors raised while validating or decomposing a mass spectrum.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpectrumError {
    #[error("spectrum must contain at least one (mass, multiplicity) entry")]
    Empty,
    #[error("mass #{index} is not strictly positive (m = {mass})")]
    NonPositiveMass { index: usize, mass: f64 },
    #[error("masses #{first} and #{second} coincide within tolerance (|{a} - {b}| < 1e-9)")]
    DuplicateMasses {
        first: usize,
        second: usize,
        a: f64,
        b: f64,
    },
    #[error("multiplicity #{index} must be >= 1")]
    ZeroMultiplicity { index: usize },
}

/// Errors from polynomial parsing and polynomial-matrix operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolyError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable `{name}` at byte {pos} (expected k0..k{max})")]
    UnknownVariable {
        pos: usize,
        name: String,
        max: usize,
    },
    #[error("exponent at byte {pos} exceeds the supported maximum of {max}")]
    ExponentOverflow { pos: usize, max: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Errors from position-space Green's function and convolution work.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GreenError {
    #[error("evaluation point is within 1e-8 of the kernel singularity")]
    SingularPoint,
    #[error("space-time dimension d={0} is not supported here (d must be 2 or 3)")]
    Unsupported(usize),
    #[error("two integration points coincide within 1e-8")]
    SingularConfiguration,
    #[error("quadrature did not reach the requested tolerance; achieved relative error estimate {estimate:.3e}")]
    QuadratureFailure { estimate: f64 },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

/// Errors from construction and evaluation of momentum-space terms.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum WightmanError {
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("quadrature did not converge; achieved relative error estimate {estimate:.3e}")]
    QuadratureFailure { estimate: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Errors from wave packets and scattering computations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScatteringError {
    #[error("invalid packet window: {0}")]
    InvalidWindow(String),
    #[error("theory has a pole of order > 1 ({0}); the large-time limit diverges, run a divergence scan instead")]
    DivergentTheory(String),
    #[error("power-law fit failed: {0}")]
    FitFailure(String),
    #[error("no adequate packet centering found; the scanned overlap stayed below the noise floor")]
    InconclusivePackets,
    #[error("quadrature did not converge; achieved relative error estimate {estimate:.3e}")]
    QuadratureFailure { estimate: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
