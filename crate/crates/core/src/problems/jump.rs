//! `min (x − 1)(x + 1)x² − θx  s.t.  −0.75 ≤ x ≤ 0.75`: two local minimizers
//! near `θ = 0`, the negative one vanishing as `θ` grows.

use crate::dual::Real;
use crate::ocp::{OcpDefinition, OcpDimensions, OcpModel};

#[derive(Debug, Clone, Copy, Default)]
pub struct Jump;

impl OcpModel for Jump {
    fn dims(&self) -> OcpDimensions {
        OcpDimensions {
            horizon: 1,
            nx: 0,
            nu: 1,
            nh: 2,
            nh_terminal: 0,
            ntheta: 1,
        }
    }

    fn stage_cost<S: Real>(&self, _stage: usize, _x: &[S], u: &[S], p: &[S]) -> S {
        let x = u[0];
        (x - 1.0) * (x + 1.0) * x * x - p[0] * x
    }

    fn terminal_cost<S: Real>(&self, _x: &[S], _p: &[S]) -> S {
        S::zero()
    }

    fn dynamics<S: Real>(&self, _stage: usize, _x: &[S], _u: &[S], _p: &[S]) -> Vec<S> {
        Vec::new()
    }

    fn path_constraints<S: Real>(&self, _stage: usize, _x: &[S], u: &[S], _p: &[S]) -> Vec<S> {
        vec![-u[0] - 0.75, u[0] - 0.75]
    }
}

impl Jump {
    pub fn ocp() -> OcpDefinition<Jump> {
        OcpDefinition::new(Jump, Vec::new()).expect("empty state")
    }

    /// `θ` beyond which the negative local minimizer no longer exists:
    /// the value where `4x³ − 2x = θ` has its local maximum over `x < 0`,
    /// i.e. `x = −1/√6`.
    pub fn branch_end() -> f64 {
        let x = -1.0 / 6f64.sqrt();
        4.0 * x * x * x - 2.0 * x
    }
}
