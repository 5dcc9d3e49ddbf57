//! Cart-pole OCP with a single parameter `θ` that is the cart mass, scales
//! the state cost and scales the position bound `−1.5 ≤ θ·p ≤ 1.5`.
//!
//! State `(p, φ, v, ω)`, one force input bounded by `±80`, RK4 over
//! `T = 2` with `N = 50` intervals. Starts with the pole horizontal.

use std::f64::consts::FRAC_PI_2;

use crate::dual::Real;
use crate::ocp::{rk4_step, OcpDefinition, OcpDimensions, OcpModel};

pub const POLE_MASS: f64 = 0.1;
pub const POLE_LENGTH: f64 = 0.8;
pub const GRAVITY: f64 = 9.81;
pub const FORCE_MAX: f64 = 80.0;
pub const POSITION_BOUND: f64 = 1.5;
const Q_DIAG: [f64; 4] = [2e3, 2e3, 2e-2, 2e-2];
const R: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
pub struct Pendulum {
    pub horizon: usize,
    pub duration: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum {
            horizon: 50,
            duration: 2.0,
        }
    }
}

/// Cart-pole ODE with cart mass `cart_mass`.
pub fn cart_pole_rhs<S: Real>(x: &[S], u: &[S], cart_mass: S) -> Vec<S> {
    let (phi, v, omega) = (x[1], x[2], x[3]);
    let (sin, cos) = (phi.sin(), phi.cos());
    let m = POLE_MASS;
    let l = POLE_LENGTH;
    let den = cart_mass + m - cos * cos * m;
    let force = u[0];
    let v_dot = (sin * omega * omega * (-m * l) + cos * sin * (m * GRAVITY) + force) / den;
    let omega_dot = (cos * sin * omega * omega * (-m * l)
        + force * cos
        + (cart_mass + m) * sin * GRAVITY)
        / (den * l);
    vec![v, omega, v_dot, omega_dot]
}

fn quad_state<S: Real>(x: &[S]) -> S {
    let mut acc = S::zero();
    for (xi, q) in x.iter().zip(Q_DIAG) {
        acc += *xi * *xi * q;
    }
    acc
}

impl Pendulum {
    pub fn dt(&self) -> f64 {
        self.duration / self.horizon as f64
    }

    pub fn initial_state() -> Vec<f64> {
        vec![0.0, FRAC_PI_2, 0.0, 0.0]
    }

    pub fn ocp() -> OcpDefinition<Pendulum> {
        OcpDefinition::new(Pendulum::default(), Self::initial_state()).expect("state length")
    }
}

impl OcpModel for Pendulum {
    fn dims(&self) -> OcpDimensions {
        OcpDimensions {
            horizon: self.horizon,
            nx: 4,
            nu: 1,
            nh: 4,
            nh_terminal: 2,
            ntheta: 1,
        }
    }

    fn stage_cost<S: Real>(&self, _stage: usize, x: &[S], u: &[S], p: &[S]) -> S {
        p[0] * quad_state(x) + u[0] * u[0] * R
    }

    fn terminal_cost<S: Real>(&self, x: &[S], p: &[S]) -> S {
        p[0] * quad_state(x)
    }

    fn dynamics<S: Real>(&self, _stage: usize, x: &[S], u: &[S], p: &[S]) -> Vec<S> {
        rk4_step(|x, u, p| cart_pole_rhs(x, u, p[0]), x, u, p, self.dt())
    }

    fn path_constraints<S: Real>(&self, _stage: usize, x: &[S], u: &[S], p: &[S]) -> Vec<S> {
        let pos = p[0] * x[0];
        vec![
            -u[0] - FORCE_MAX,
            u[0] - FORCE_MAX,
            -pos - POSITION_BOUND,
            pos - POSITION_BOUND,
        ]
    }

    fn terminal_constraints<S: Real>(&self, x: &[S], p: &[S]) -> Vec<S> {
        let pos = p[0] * x[0];
        vec![-pos - POSITION_BOUND, pos - POSITION_BOUND]
    }
}
