use thiserror::Error;

/// Errors surfaced by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A correlation matrix failed the Cholesky factorization; `pivot` names the
    /// row whose pivot was non-positive.
    #[error("correlation matrix is not positive definite: pivot {pivot} is {value:.6e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("Feller condition violated: sigma_nu^2 = {sigma_nu_sq:.6} >= 2*kappa*nu_bar = {bound:.6}")]
    FellerViolation { sigma_nu_sq: f64, bound: f64 },

    /// Evaluating (x - K)^(1-theta)/(1-theta) at x = K with theta > 1 diverges.
    #[error("utility unbounded: fund at sustainability bound with theta = {theta} > 1")]
    UnboundedUtility { theta: f64 },

    #[error("cashflow stream invalid for rate solving: {reason}")]
    InvalidCashflows { reason: String },

    /// SDE integration drifted away from the closed form it validates.
    #[error("scheme divergence: max relative gap {gap:.3e} exceeds tolerance {tolerance:.3e} at t = {time:.4}")]
    SchemeDivergence { gap: f64, tolerance: f64, time: f64 },

    #[error("path {path_index} failed: {reason}")]
    PathFailure { path_index: usize, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
