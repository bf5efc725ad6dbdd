use thiserror::Error;

/// Errors produced by the model layer.
///
/// Variants are split by who can fix them: [`Error::is_user_error`] returns
/// `true` for problems in the supplied parameters or data (a caller should
/// exit with a usage-style status), and `false` for numerical failures at
/// runtime (convergence, bracketing, windowing).
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value is outside the domain of the model.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: String,
    },

    /// A method was asked to operate outside its domain of validity.
    #[error("domain error in {what}: {reason}")]
    Domain { what: &'static str, reason: String },

    /// An iterative numerical procedure failed to converge.
    #[error("convergence failure in {what}: {detail}")]
    Convergence { what: &'static str, detail: String },

    /// A root/extremum was not bracketed by the search window.
    #[error("bracketing failure in {what}: {detail}")]
    Bracket { what: &'static str, detail: String },

    /// A spectral feature did not fit inside the requested window.
    #[error("window error in {what}: {detail}")]
    Window { what: &'static str, detail: String },

    /// An unknown strategy name was requested from a registry.
    #[error("unknown {registry} strategy `{name}`; known: {known}")]
    UnknownStrategy {
        registry: &'static str,
        name: String,
        known: String,
    },

    /// Input data (e.g. a measured spectrum) is malformed or insufficient.
    #[error("bad input data: {0}")]
    BadData(String),
}

impl Error {
    /// True when the error stems from user-supplied parameters or data
    /// rather than a numerical failure.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam { .. }
                | Error::Domain { .. }
                | Error::UnknownStrategy { .. }
                | Error::BadData(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
