use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {what}: got {value}, expected {expected}")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("covariance matrix is not positive semidefinite: pivot {pivot} = {value:e}")]
    Cholesky { pivot: usize, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("time-change horizon too short: need {needed}, path ends at {available}")]
    Horizon { needed: f64, available: f64 },

    #[error("coupling failed: |X_T - Y_T| = {distance:e} exceeds tolerance {tolerance:e}")]
    CouplingFailure { distance: f64, tolerance: f64 },

    #[error("step rejected near t = {time}: Richardson discrepancy {discrepancy:e} after maximal refinement")]
    StepRejection { time: f64, discrepancy: f64 },

    #[error("expectation diverges: {0}")]
    Divergence(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            expected,
        }
    }
}
