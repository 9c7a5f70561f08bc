//! Error type shared by every module in the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library surface.
///
/// Variants are grouped by pipeline stage: construction/validation errors up
/// front, then segmentation, extraction, and fitting failures. Numerical
/// non-convergence of the fitter is deliberately *not* an error: the fitter
/// returns its best-so-far result with a cleared convergence flag instead.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A value violated a documented domain constraint (nonpositive stiffness,
    /// negative time, malformed profile, and so on).
    #[error("{context}: {message}")]
    InvalidInput {
        context: &'static str,
        message: String,
    },

    /// Fraction-of-asymptote queries require 0 < alpha <= 1 - 1e-9; the
    /// asymptote itself is unreachable at finite velocity.
    #[error("alpha = {alpha} is outside (0, 1 - 1e-9]; the asymptote is unreachable")]
    AlphaOutOfRange { alpha: f64 },

    /// Root bracketing for the exact alpha-velocity solve failed even after
    /// interval expansion.
    #[error("root bracketing failed: {message}")]
    BracketingFailed { message: String },

    /// Segmentation found a different number of constant-velocity ramps than
    /// the commanded protocol prescribes.
    #[error("expected {expected} ramps but found {found}; {detail}")]
    RampCountMismatch {
        expected: usize,
        found: usize,
        detail: String,
    },

    /// Fewer than the minimum 0.5 s of pre-ramp samples exist for the baseline
    /// force window.
    #[error("pre-ramp history {available_s:.3} s is shorter than the required {required_s:.3} s")]
    InsufficientHistory { available_s: f64, required_s: f64 },

    /// The baseline force is zero or negative, so peak-force normalization is
    /// undefined.
    #[error("baseline force {f0} N is not positive; normalization undefined")]
    NonPositiveBaseline { f0: f64 },

    /// The fit input cannot constrain the parameters (too few distinct
    /// velocities, zero-variance data, missing velocity groups).
    #[error("degenerate fit input: {message}")]
    DegenerateFit { message: String },

    /// Two time series share no common time span after offset alignment.
    #[error("time ranges do not overlap: {message}")]
    NoTimeOverlap { message: String },
}

impl Error {
    /// Shorthand for the common validation case.
    pub(crate) fn invalid(context: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            context,
            message: message.into(),
        }
    }
}
