//! Bounded LQR benchmark
//!
//! ```text
//! min  Σ [x;u]ᵀH[x;u] + x_NᵀH_x x_N
//! s.t. x_0 = x̄_0,  x_{n+1} = A x_n + B u_n + b,  −u_max ≤ u_n ≤ u_max
//! ```
//!
//! with `θ = (A, B, b, H)` stored row-major, so `n_θ = n_x² + n_x n_u + n_x +
//! (n_x + n_u)²`. Derivatives are analytic.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dual::Real;
use crate::error::Result;
use crate::nlp::ParamVector;
use crate::ocp::{OcpDefinition, OcpDimensions, OcpModel, StageFirstOrder, StageParamJacobians};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrBench {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    pub u_max: f64,
}

/// Offsets of the parameter blocks.
#[derive(Debug, Clone, Copy)]
struct Layout {
    a: usize,
    b: usize,
    c: usize,
    h: usize,
    total: usize,
}

impl LqrBench {
    pub fn new(nx: usize, nu: usize, horizon: usize, u_max: f64) -> Self {
        LqrBench {
            nx,
            nu,
            horizon,
            u_max,
        }
    }

    pub fn ntheta(&self) -> usize {
        self.layout().total
    }

    fn layout(&self) -> Layout {
        let (nx, nu) = (self.nx, self.nu);
        let a = 0;
        let b = a + nx * nx;
        let c = b + nx * nu;
        let h = c + nx;
        Layout {
            a,
            b,
            c,
            h,
            total: h + (nx + nu) * (nx + nu),
        }
    }

    /// `(A, B, b, H)` from `θ`.
    pub fn unpack(&self, p: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        let l = self.layout();
        let (nx, nu) = (self.nx, self.nu);
        let w = nx + nu;
        (
            DMatrix::from_row_slice(nx, nx, &p[l.a..l.b]),
            DMatrix::from_row_slice(nx, nu, &p[l.b..l.c]),
            DVector::from_column_slice(&p[l.c..l.h]),
            DMatrix::from_row_slice(w, w, &p[l.h..l.total]),
        )
    }

    /// Packs `(A, B, b, H)` into `θ`.
    pub fn pack(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DVector<f64>, h: &DMatrix<f64>) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.ntheta());
        theta.extend(a.transpose().iter());
        theta.extend(b.transpose().iter());
        theta.extend(c.iter());
        theta.extend(h.transpose().iter());
        theta
    }

    fn quad<S: Real>(&self, v: &[S], p: &[f64], width: usize) -> S {
        let l = self.layout();
        let w = self.nx + self.nu;
        let mut acc = S::zero();
        for i in 0..width {
            for j in 0..width {
                acc += v[i] * v[j] * p[l.h + i * w + j];
            }
        }
        acc
    }
}

impl OcpModel for LqrBench {
    fn dims(&self) -> OcpDimensions {
        OcpDimensions {
            horizon: self.horizon,
            nx: self.nx,
            nu: self.nu,
            nh: 2 * self.nu,
            nh_terminal: 0,
            ntheta: self.ntheta(),
        }
    }

    fn stage_cost<S: Real>(&self, _stage: usize, x: &[S], u: &[S], p: &[S]) -> S {
        let l = self.layout();
        let w = self.nx + self.nu;
        let v: Vec<S> = x.iter().chain(u).copied().collect();
        let mut acc = S::zero();
        for i in 0..w {
            for j in 0..w {
                acc += v[i] * v[j] * p[l.h + i * w + j];
            }
        }
        acc
    }

    fn terminal_cost<S: Real>(&self, x: &[S], p: &[S]) -> S {
        let l = self.layout();
        let w = self.nx + self.nu;
        let mut acc = S::zero();
        for i in 0..self.nx {
            for j in 0..self.nx {
                acc += x[i] * x[j] * p[l.h + i * w + j];
            }
        }
        acc
    }

    fn dynamics<S: Real>(&self, _stage: usize, x: &[S], u: &[S], p: &[S]) -> Vec<S> {
        let l = self.layout();
        (0..self.nx)
            .map(|i| {
                let mut acc = p[l.c + i];
                for j in 0..self.nx {
                    acc += p[l.a + i * self.nx + j] * x[j];
                }
                for j in 0..self.nu {
                    acc += p[l.b + i * self.nu + j] * u[j];
                }
                acc
            })
            .collect()
    }

    fn path_constraints<S: Real>(&self, _stage: usize, _x: &[S], u: &[S], _p: &[S]) -> Vec<S> {
        let lower = u.iter().map(|&ui| -ui - self.u_max);
        let upper = u.iter().map(|&ui| ui - self.u_max);
        lower.chain(upper).collect()
    }

    fn stage_first_order(&self, stage: usize, x: &[f64], u: &[f64], p: &[f64]) -> Result<StageFirstOrder> {
        let (a, b, _, h) = self.unpack(p);
        let v = DVector::from_iterator(self.nx + self.nu, x.iter().chain(u).copied());
        let hs = &h + h.transpose();
        let mut dyn_jac = DMatrix::zeros(self.nx, self.nx + self.nu);
        dyn_jac.columns_mut(0, self.nx).copy_from(&a);
        dyn_jac.columns_mut(self.nx, self.nu).copy_from(&b);
        let mut cons_jac = DMatrix::zeros(2 * self.nu, self.nx + self.nu);
        for i in 0..self.nu {
            cons_jac[(i, self.nx + i)] = -1.0;
            cons_jac[(self.nu + i, self.nx + i)] = 1.0;
        }
        Ok(StageFirstOrder {
            cost: self.quad(v.as_slice(), p, self.nx + self.nu),
            cost_grad: &hs * &v,
            next: DVector::from_vec(self.dynamics(stage, x, u, p)),
            dyn_jac,
            cons: DVector::from_vec(self.path_constraints(stage, x, u, p)),
            cons_jac,
        })
    }

    fn terminal_first_order(&self, x: &[f64], p: &[f64]) -> Result<StageFirstOrder> {
        let (_, _, _, h) = self.unpack(p);
        let hx = h.view((0, 0), (self.nx, self.nx));
        let xv = DVector::from_column_slice(x);
        Ok(StageFirstOrder {
            cost: self.quad(x, p, self.nx),
            cost_grad: (hx + hx.transpose()) * xv,
            next: DVector::zeros(0),
            dyn_jac: DMatrix::zeros(0, self.nx),
            cons: DVector::zeros(0),
            cons_jac: DMatrix::zeros(0, self.nx),
        })
    }

    fn stage_lagrangian_hessian(
        &self,
        stage: usize,
        x: &[f64],
        u: &[f64],
        p: &[f64],
        _lam_next: &[f64],
        _mu: &[f64],
    ) -> Result<DMatrix<f64>> {
        self.stage_gauss_newton_hessian(stage, x, u, p)
    }

    fn terminal_lagrangian_hessian(&self, x: &[f64], p: &[f64], _mu: &[f64]) -> Result<DMatrix<f64>> {
        self.terminal_gauss_newton_hessian(x, p)
    }

    fn stage_gauss_newton_hessian(&self, _stage: usize, _x: &[f64], _u: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
        let (_, _, _, h) = self.unpack(p);
        Ok(&h + h.transpose())
    }

    fn terminal_gauss_newton_hessian(&self, _x: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
        let (_, _, _, h) = self.unpack(p);
        let hx = h.view((0, 0), (self.nx, self.nx));
        Ok(hx + hx.transpose())
    }

    fn stage_param_jacobians(
        &self,
        _stage: usize,
        x: &[f64],
        u: &[f64],
        _p: &[f64],
        lam_next: &[f64],
        _mu: &[f64],
    ) -> Result<StageParamJacobians> {
        let l = self.layout();
        let (nx, nu) = (self.nx, self.nu);
        let w = nx + nu;
        let v: Vec<f64> = x.iter().chain(u).copied().collect();
        let mut grad = DMatrix::zeros(w, l.total);
        let mut dynamics = DMatrix::zeros(nx, l.total);
        for i in 0..nx {
            for j in 0..nx {
                let col = l.a + i * nx + j;
                dynamics[(i, col)] = x[j];
                grad[(j, col)] += lam_next[i];
            }
            for j in 0..nu {
                let col = l.b + i * nu + j;
                dynamics[(i, col)] = u[j];
                grad[(nx + j, col)] += lam_next[i];
            }
            dynamics[(i, l.c + i)] = 1.0;
        }
        for i in 0..w {
            for j in 0..w {
                let col = l.h + i * w + j;
                grad[(i, col)] += v[j];
                grad[(j, col)] += v[i];
            }
        }
        Ok(StageParamJacobians {
            lagrangian_grad: grad,
            dynamics,
            constraints: DMatrix::zeros(2 * nu, l.total),
        })
    }

    fn terminal_param_jacobians(&self, x: &[f64], _p: &[f64], _mu: &[f64]) -> Result<StageParamJacobians> {
        let l = self.layout();
        let (nx, w) = (self.nx, self.nx + self.nu);
        let mut grad = DMatrix::zeros(nx, l.total);
        for i in 0..nx {
            for j in 0..nx {
                let col = l.h + i * w + j;
                grad[(i, col)] += x[j];
                grad[(j, col)] += x[i];
            }
        }
        Ok(StageParamJacobians {
            lagrangian_grad: grad,
            dynamics: DMatrix::zeros(0, l.total),
            constraints: DMatrix::zeros(0, l.total),
        })
    }
}

/// Problem data and per-instance initial states of one benchmark draw.
#[derive(Debug, Clone)]
pub struct LqrBenchData {
    pub ocp: OcpDefinition<LqrBench>,
    pub theta: ParamVector,
    pub x0: Vec<Vec<f64>>,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Samples `A = I + 0.2·M` and `B`, `b`, `M` i.i.d. standard normal from
/// stream 0 of a ChaCha8 generator seeded with `seed`; `H = I`. Initial
/// state `i` comes from stream `i + 1`, so instances do not depend on each
/// other or on the sampling order.
pub fn generate_lqr_bench(
    nx: usize,
    nu: usize,
    horizon: usize,
    u_max: f64,
    n_batch: usize,
    seed: u64,
) -> LqrBenchData {
    let model = LqrBench::new(nx, nu, horizon, u_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let m = DMatrix::from_row_slice(nx, nx, &normals(&mut rng, nx * nx));
    let b = DMatrix::from_row_slice(nx, nu, &normals(&mut rng, nx * nu));
    let c = DVector::from_vec(normals(&mut rng, nx));
    let a = DMatrix::identity(nx, nx) + m * 0.2;
    let h = DMatrix::identity(nx + nu, nx + nu);
    let theta = ParamVector::new(model.pack(&a, &b, &c, &h));
    let x0: Vec<Vec<f64>> = (0..n_batch)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64 + 1);
            normals(&mut r, nx)
        })
        .collect();
    let first = x0.first().cloned().unwrap_or_else(|| vec![0.0; nx]);
    let ocp = OcpDefinition::new(model, first).expect("state length");
    LqrBenchData { ocp, theta, x0 }
}
