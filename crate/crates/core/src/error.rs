use std::fmt;

use thiserror::Error;

/// Block of the primal-dual residual a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KktBlock {
    Stationarity,
    Equality,
    Inequality,
    Complementarity,
}

impl fmt::Display for KktBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            KktBlock::Stationarity => "stationarity",
            KktBlock::Equality => "equality",
            KktBlock::Inequality => "inequality",
            KktBlock::Complementarity => "complementarity",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite value in {block} block at row {index}")]
    Evaluation { block: KktBlock, index: usize },

    #[error("non-finite value while evaluating stage {stage}")]
    StageEvaluation { stage: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Riccati breakdown at stage {stage}: pivot {pivot:.3e} below threshold")]
    Breakdown { stage: usize, pivot: f64 },

    #[error("dense oracle failure: {0}")]
    Oracle(String),

    #[error("unsupported operation for automatic differentiation: {0}")]
    Unsupported(&'static str),

    #[error("sensitivity setup requires an exact Hessian without Levenberg-Marquardt term")]
    InexactHessian,

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("ambiguous active set at constraint {index} (mu = {mu:.3e}, h = {h:.3e})")]
    ActiveSetMismatch { index: usize, mu: f64, h: f64 },

    #[error("active-set KKT matrix is singular (LICQ or SOSC violated)")]
    Licq,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
