use crate::web::{SiteAddress, WebId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("site ({x}, {t}) is not on the even lattice")]
    Parity { x: i64, t: i64 },

    #[error("dynamical time {tau} outside window [{lo}, {hi}]")]
    Window { tau: f64, lo: f64, hi: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("path time {t} beyond the computed stack horizon {horizon}")]
    Horizon { t: i64, horizon: i64 },

    #[error("switch times tie at tau = {tau} between {first:?} and {second:?}")]
    Tie {
        tau: f64,
        first: (WebId, SiteAddress),
        second: (WebId, SiteAddress),
    },

    #[error("profile does not match quadruple: {0}")]
    Integrity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change of f(p, K) - 1 on the bracket: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoBracket { f_lo: f64, f_hi: f64 },

    #[error("empty collection")]
    Empty,

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Diagnostics are numerically legitimate outcomes (ties, missing
    /// brackets) as opposed to bad input.
    pub fn is_diagnostic(&self) -> bool {
        matches!(
            self,
            Error::Tie { .. } | Error::NoBracket { .. } | Error::Integrity(_)
        )
    }
}
