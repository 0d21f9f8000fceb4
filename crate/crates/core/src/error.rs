use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("stability error: dt = {dt:e} exceeds the stable bound {bound:e}")]
    Stability { dt: f64, bound: f64 },

    #[error("divergence: non-finite value in field {field} at cell {cell}")]
    Divergence { field: &'static str, cell: usize },

    #[error("stiffness: component {component} reached {value:e} at t = {t}; reduce dt")]
    Stiffness {
        component: &'static str,
        value: f64,
        t: f64,
    },

    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Numerical failures (as opposed to configuration or I/O problems).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stability { .. }
                | Error::Divergence { .. }
                | Error::Stiffness { .. }
                | Error::Domain(_)
        )
    }
}
