use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("kernel singular at |x| = t (t = {t}, x = {x}); use the split quadratures")]
    Singularity { t: f64, x: f64 },

    #[error("quadrature did not converge: {what} (estimated error {estimate:.3e}, tolerance {tolerance:.3e})")]
    Quadrature {
        what: String,
        estimate: f64,
        tolerance: f64,
    },

    #[error("circulant embedding failed: {0}")]
    Embedding(String),

    #[error("light cone of (t_index {t_index}, x_index {x_index}) leaves the noise grid")]
    LightCone { t_index: usize, x_index: usize },

    #[error("Picard iteration diverged; residual history {history:?}")]
    Divergence { history: Vec<f64> },

    #[error("realization {index}: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in realization {realization} at (t_index {t_index}, x_index {x_index})")]
    NonFinite {
        realization: usize,
        t_index: usize,
        x_index: usize,
    },

    #[error("regression degenerate: {0}")]
    Regression(String),

    #[error("unknown condition system `{0}`")]
    UnknownSystem(String),

    #[error("feasible point rejected by {system}: {detail}")]
    Infeasible { system: String, detail: String },

    #[error(
        "truncation error {estimate:.3e} exceeds 10% of value {value:.3e}; increase the spectral cutoff (now {cutoff})"
    )]
    Truncation { estimate: f64, value: f64, cutoff: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
