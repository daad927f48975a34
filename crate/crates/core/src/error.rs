use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("requested rank {requested} exceeds numerical rank {available} (eigenvalues above {threshold:e} x lambda_1)")]
    Rank {
        requested: usize,
        available: usize,
        threshold: f64,
    },

    #[error("CFL violation at t = {time}: CFL = {cfl:.3} exceeds {limit}")]
    Cfl { time: f64, cfl: f64, limit: f64 },

    #[error("pressure Poisson solve did not reach tolerance: relative residual {residual:e}")]
    Poisson { residual: f64 },

    #[error("nonlinear solve did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("solution diverged: {0}")]
    Divergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("codec error: {0}")]
    Codec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input or configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Shape(_) | Error::Rank { .. })
    }

    /// Short machine-readable name of the innermost error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Rank { .. } => "rank",
            Error::Cfl { .. } => "cfl",
            Error::Poisson { .. } => "poisson",
            Error::NonConvergence { .. } => "nonconvergence",
            Error::Divergence(_) => "divergence",
            Error::Singular(_) => "singular",
            Error::Numerical(_) => "numerical",
            Error::AtStep { source, .. } => source.kind(),
            Error::Codec(_) => "codec",
            Error::Io(_) => "io",
        }
    }
}
