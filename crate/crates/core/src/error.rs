use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("integration diverged at step {step}: {what}")]
    Divergence { step: usize, what: String },
    #[error("matrix of order {order} is not positive definite even with jitter {jitter:e} (trace {trace:e})")]
    NotPositiveDefinite { order: usize, jitter: f64, trace: f64 },
    #[error("sampler failed on rung {rung} at sweep {sweep}: {source}")]
    Sampler {
        rung: usize,
        sweep: usize,
        source: alloc::boxed::Box<Error>,
    },
    #[error("oscillation amplitude collapsed at sample {sample} (t = {time})")]
    AmplitudeCollapse { sample: usize, time: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::NotPositiveDefinite { .. } => true,
            Error::Sampler { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
