//! `min (x − θ²)²  s.t.  −1 ≤ x ≤ 1`, written as a one-stage OCP with a
//! single control and no state.

use crate::dual::Real;
use crate::ocp::{OcpDefinition, OcpDimensions, OcpModel};

#[derive(Debug, Clone, Copy, Default)]
pub struct Tutorial;

impl OcpModel for Tutorial {
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
        let r = u[0] - p[0] * p[0];
        r * r
    }

    fn terminal_cost<S: Real>(&self, _x: &[S], _p: &[S]) -> S {
        S::zero()
    }

    fn dynamics<S: Real>(&self, _stage: usize, _x: &[S], _u: &[S], _p: &[S]) -> Vec<S> {
        Vec::new()
    }

    fn path_constraints<S: Real>(&self, _stage: usize, _x: &[S], u: &[S], _p: &[S]) -> Vec<S> {
        vec![-u[0] - 1.0, u[0] - 1.0]
    }
}

impl Tutorial {
    pub fn ocp() -> OcpDefinition<Tutorial> {
        OcpDefinition::new(Tutorial, Vec::new()).expect("empty state")
    }

    /// `clip(θ², 1)`.
    pub fn exact_solution(theta: f64) -> f64 {
        (theta * theta).min(1.0)
    }

    /// `2θ` inside `(−1, 1)`, `0` outside; undefined at `|θ| = 1`.
    pub fn exact_derivative(theta: f64) -> f64 {
        if theta.abs() < 1.0 {
            2.0 * theta
        } else {
            0.0
        }
    }
}
