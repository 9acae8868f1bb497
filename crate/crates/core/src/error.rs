use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor, batch or parameter shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is outside its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Time argument outside `[0, 1]`.
    #[error("time {0} is outside [0, 1]")]
    TimeDomain(f64),

    /// A NaN or infinity appeared where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at iteration {iteration}: non-finite {what}")]
    Diverged { iteration: usize, what: &'static str },

    /// The bridge kernel has zero variance, so its time score does not exist.
    #[error("conditional time score undefined: kernel variance is zero at t = {0}")]
    ZeroVariance(f64),

    /// The adaptive integrator could not shrink its step any further.
    #[error("adaptive step underflow at t = {t} (partial integral {partial}, {nfe} evaluations)")]
    StepUnderflow { t: f64, partial: f64, nfe: usize },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Diverged { .. } | Error::StepUnderflow { .. })
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
