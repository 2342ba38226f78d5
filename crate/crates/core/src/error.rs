use thiserror::Error;

use crate::solver::StrandState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Gram matrix conditioning exceeded the configured cap.
    #[error("near-collision: Gram condition estimate {condition:.3e} exceeds cap {cap:.3e}{}", .site.as_deref().map(|s| format!(" at {s}")).unwrap_or_default())]
    NearCollision {
        condition: f64,
        cap: f64,
        site: Option<String>,
    },

    /// |h| fell below the threshold where the peakon-antipeakon momenta diverge.
    #[error("collision singularity: |h| = {h:.3e} below threshold {threshold:.3e} at (t, s) = ({t}, {s})")]
    CollisionSingularity { h: f64, threshold: f64, t: f64, s: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("blow-up at t = {t}: |value| exceeded {limit:.1e}")]
    BlowUp {
        t: f64,
        limit: f64,
        last_good: Box<StrandState>,
    },

    /// Blow-up in an ODE integration, where there is no grid state to return.
    #[error("blow-up at t = {t}: |value| exceeded {limit:.1e}")]
    OdeBlowUp { t: f64, limit: f64 },

    #[error("sigma=+1 evolution is ill-posed; use verify")]
    IllPosed,

    #[error("quadrature did not converge: error estimate {achieved:.3e} > target {target:.3e}")]
    Quadrature { achieved: f64, target: f64 },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors that abort a numerical run (as opposed to bad input).
    pub fn is_numerical_abort(&self) -> bool {
        matches!(
            self,
            Error::NearCollision { .. }
                | Error::CollisionSingularity { .. }
                | Error::NonFinite(_)
                | Error::BlowUp { .. }
                | Error::OdeBlowUp { .. }
                | Error::Quadrature { .. }
        )
    }
}
