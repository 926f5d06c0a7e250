use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("diffusion matrix is not coercive: smallest eigenvalue of its symmetric part is {0:e}")]
    NotCoercive(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step too large for a single exponential: dt*|M| = {0:e} (subdivide the interval)")]
    StepTooLarge(f64),

    #[error("time quadrature did not converge after {doublings} doublings (last relative change {change:e})")]
    QuadratureNotConverged { doublings: usize, change: f64 },

    #[error("observability too weak at this Gamma/tau: residual {residual:e} against |b| = {rhs:e}")]
    WeakObservability { residual: f64, rhs: f64 },

    /// `mode` is the 0-based index into the model; the message reports `p0 = mode + 1`.
    #[error("Kalman rank condition fails at p0 = {} (gamma = {gamma})", .mode + 1)]
    NotControllable { mode: usize, gamma: f64 },

    #[error("vector is not in the kernel of K_p^T (residual {0:e})")]
    NotInKernel(f64),

    #[error("eigenvalue solver did not converge")]
    Eigensolver,

    #[error("contraction not reached after {0} doublings of M")]
    AdaptationExhausted(usize),

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True when the failure is a violation of the Kalman rank condition, possibly
    /// nested inside a window error.
    pub fn is_controllability_failure(&self) -> bool {
        match self {
            Error::NotControllable { .. } => true,
            Error::Window { source, .. } => source.is_controllability_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
