use thiserror::Error;

#[derive(Debug, Error)]
pub enum AmemError {
    #[error("s = {s} lies outside the log-Laplace domain {domain}")]
    Domain { s: f64, domain: String },

    #[error("conjugate diverges: no maximizer of u*x - Λ(u) for x = {x} (support hull {hull})")]
    ConjugateDivergence { x: f64, hull: String },

    #[error("invalid prior parameters: {0}")]
    InvalidPrior(String),

    #[error("measures have mismatched atoms: {0}")]
    MismatchedAtoms(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("operator error: {0}")]
    Operator(String),

    #[error("design density vanishes at t = {0:?}")]
    DesignDensity(Vec<f64>),

    #[error("the dual gradient is undefined at v = 0; use the zero-optimality test")]
    NonsmoothPoint,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("slope fit needs at least two positive points: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("table file error: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AmemError>;
