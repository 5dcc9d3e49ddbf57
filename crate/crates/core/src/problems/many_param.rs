//! Cart-pole OCP over `N = 40` stages where every stage has its own state
//! cost scale, control weight and position-bound offset, plus a terminal
//! cost scale: `n_θ = 3N + 1`.

use crate::dual::Real;
use crate::ocp::{rk4_step, OcpDefinition, OcpDimensions, OcpModel};

use super::pendulum::{cart_pole_rhs, FORCE_MAX, POSITION_BOUND};

const CART_MASS: f64 = 1.0;
const Q_DIAG: [f64; 4] = [2e3, 2e3, 2e-2, 2e-2];

#[derive(Debug, Clone, Copy)]
pub struct ManyParam {
    pub horizon: usize,
    pub dt: f64,
}

impl Default for ManyParam {
    fn default() -> Self {
        ManyParam {
            horizon: 40,
            dt: 0.05,
        }
    }
}

impl ManyParam {
    pub fn initial_state() -> Vec<f64> {
        vec![0.0, 0.5, 0.0, 0.0]
    }

    pub fn ocp() -> OcpDefinition<ManyParam> {
        OcpDefinition::new(ManyParam::default(), Self::initial_state()).expect("state length")
    }

    /// Unit scales, control weight 0.2 and zero offsets.
    pub fn nominal_theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(3 * self.horizon + 1);
        for _ in 0..self.horizon {
            theta.extend_from_slice(&[1.0, 0.2, 0.0]);
        }
        theta.push(1.0);
        theta
    }
}

fn quad_state<S: Real>(x: &[S]) -> S {
    let mut acc = S::zero();
    for (xi, q) in x.iter().zip(Q_DIAG) {
        acc += *xi * *xi * q;
    }
    acc
}

impl OcpModel for ManyParam {
    fn dims(&self) -> OcpDimensions {
        OcpDimensions {
            horizon: self.horizon,
            nx: 4,
            nu: 1,
            nh: 4,
            nh_terminal: 0,
            ntheta: 3 * self.horizon + 1,
        }
    }

    fn stage_cost<S: Real>(&self, stage: usize, x: &[S], u: &[S], p: &[S]) -> S {
        p[3 * stage] * quad_state(x) + p[3 * stage + 1] * u[0] * u[0]
    }

    fn terminal_cost<S: Real>(&self, x: &[S], p: &[S]) -> S {
        p[3 * self.horizon] * quad_state(x)
    }

    fn dynamics<S: Real>(&self, _stage: usize, x: &[S], u: &[S], p: &[S]) -> Vec<S> {
        rk4_step(
            |x, u, _p| cart_pole_rhs(x, u, S::from_f64(CART_MASS)),
            x,
            u,
            p,
            self.dt,
        )
    }

    fn path_constraints<S: Real>(&self, stage: usize, x: &[S], u: &[S], p: &[S]) -> Vec<S> {
        let bound = p[3 * stage + 2] + POSITION_BOUND;
        vec![
            -u[0] - FORCE_MAX,
            u[0] - FORCE_MAX,
            -x[0] - bound,
            x[0] - bound,
        ]
    }

    fn param_support(&self, stage: usize) -> Option<Vec<usize>> {
        if stage == self.horizon {
            Some(vec![3 * self.horizon])
        } else {
            Some(vec![3 * stage, 3 * stage + 1, 3 * stage + 2])
        }
    }
}
