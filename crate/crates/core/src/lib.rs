//! Parametric optimal control: a full-step SQP solver with an interior-point
//! QP method on a Riccati-factorized KKT system, and forward and adjoint
//! sensitivities of the smoothed solution map.

pub mod batch;
pub mod dual;
pub mod error;
pub mod ipm;
pub mod kkt;
pub mod nlp;
pub mod ocp;
pub mod problems;
pub mod sensitivity;
pub mod sqp;

pub use error::{Error, KktBlock, Result};
pub use nlp::{Iterate, KktResidual, Nlp, NlpDims, ParamVector, RegularityDiagnostics};
