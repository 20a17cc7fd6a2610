use thiserror::Error;

/// Errors raised by tree construction, simulation, estimation and the oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} is beyond the simulated horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("particle {0} is not in the tree")]
    UnknownParticle(String),

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("inconsistent spine assignment: {0}")]
    InconsistentSpines(String),

    #[error("position of particle {label} at time {t} was not recorded; declare it as a record time")]
    PathNotRecorded { label: String, t: f64 },

    #[error("population exploded: {particles} particles by time {time} (cap {cap})")]
    Explosion {
        particles: usize,
        time: f64,
        cap: usize,
    },

    #[error("degenerate offspring law: {0}")]
    DegenerateLaw(String),

    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("tuple enumeration needs {needed} tuples, cap is {cap}")]
    EnumerationCap { needed: f64, cap: f64 },

    #[error("oracle enumeration needs {leaves} leaves, budget is {budget}")]
    BudgetExceeded { leaves: f64, budget: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, Error>;
