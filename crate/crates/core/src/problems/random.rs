//! Seeded random instances for property tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dual::Real;
use crate::nlp::{Iterate, ParamVector};
use crate::ocp::{
    HessianMode, OcpDefinition, OcpDimensions, OcpModel, StageQp, StageQpData, TerminalQp,
};

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Symmetric positive definite `LLᵀ + 0.5 I`.
fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let l = normal_matrix(rng, n, n);
    &l * l.transpose() / n.max(1) as f64 + DMatrix::identity(n, n) * 0.5
}

/// Random stage-structured QP data with positive definite stage Hessians.
pub fn random_stage_qp(dims: OcpDimensions, seed: u64) -> StageQpData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu) = (dims.nx, dims.nu);
    let stages = (0..dims.horizon)
        .map(|_| StageQp {
            hess: spd(&mut rng, nx + nu),
            grad: normal_vector(&mut rng, nx + nu),
            a: normal_matrix(&mut rng, nx, nx) * 0.5 + DMatrix::identity(nx, nx),
            b: normal_matrix(&mut rng, nx, nu),
            dyn_res: normal_vector(&mut rng, nx),
            c: normal_matrix(&mut rng, dims.nh, nx),
            d: normal_matrix(&mut rng, dims.nh, nu),
            h: normal_vector(&mut rng, dims.nh),
        })
        .collect();
    StageQpData {
        dims,
        stages,
        terminal: TerminalQp {
            hess: spd(&mut rng, nx),
            grad: normal_vector(&mut rng, nx),
            c: normal_matrix(&mut rng, dims.nh_terminal, nx),
            h: normal_vector(&mut rng, dims.nh_terminal),
        },
        init_res: normal_vector(&mut rng, nx),
        hessian_mode: HessianMode::exact(),
    }
}

/// Random strictly positive `(μ, s)` spanning a few orders of magnitude,
/// with random `z`, `λ`.
pub fn random_iterate(dims: OcpDimensions, seed: u64) -> Iterate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let nh = dims.nh_total();
    let pos = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        DVector::from_fn(nh, |_, _| 10f64.powf(rng.random_range(-2.0..2.0)))
    };
    Iterate {
        z: normal_vector(&mut rng, dims.nz()),
        lam: normal_vector(&mut rng, dims.ng()),
        mu: pos(&mut rng),
        s: pos(&mut rng),
    }
}

/// Small nonlinear parametric OCP with box constraints on the controls.
///
/// Stage cost `½vᵀWv + (Fθ + f)ᵀv + 0.05 Σ cos(v_i)` over `v = (x, u)` with
/// `W ⪰ I`, dynamics `x⁺ = A x + B u + Eθ + 0.05 sin(x)`, and bounds
/// `−1 ≤ u_i ≤ 1 + 0.1 θ_0`.
#[derive(Debug, Clone)]
pub struct RandomOcp {
    dims: OcpDimensions,
    w: Vec<DMatrix<f64>>,
    f_mat: Vec<DMatrix<f64>>,
    f_vec: Vec<DVector<f64>>,
    w_terminal: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    e: Vec<DMatrix<f64>>,
}

impl RandomOcp {
    /// Generates an instance together with an initial state and a nominal `θ`.
    pub fn generate(
        horizon: usize,
        nx: usize,
        nu: usize,
        ntheta: usize,
        seed: u64,
    ) -> (OcpDefinition<RandomOcp>, ParamVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = OcpDimensions {
            horizon,
            nx,
            nu,
            nh: 2 * nu,
            nh_terminal: 0,
            ntheta,
        };
        let w = nx + nu;
        let mut model = RandomOcp {
            dims,
            w: Vec::new(),
            f_mat: Vec::new(),
            f_vec: Vec::new(),
            w_terminal: spd(&mut rng, nx) + DMatrix::identity(nx, nx) * 0.5,
            a: Vec::new(),
            b: Vec::new(),
            e: Vec::new(),
        };
        for _ in 0..horizon {
            model.w.push(spd(&mut rng, w) + DMatrix::identity(w, w) * 0.5);
            model.f_mat.push(normal_matrix(&mut rng, w, ntheta));
            model.f_vec.push(normal_vector(&mut rng, w) * 2.0);
            model
                .a
                .push(DMatrix::identity(nx, nx) + normal_matrix(&mut rng, nx, nx) * 0.3);
            model.b.push(normal_matrix(&mut rng, nx, nu));
            model.e.push(normal_matrix(&mut rng, nx, ntheta) * 0.3);
        }
        let x0: Vec<f64> = normal_vector(&mut rng, nx).iter().copied().collect();
        let theta = ParamVector::new(normal_vector(&mut rng, ntheta).iter().map(|v| 0.5 * v).collect());
        let ocp = OcpDefinition::new(model, x0).expect("state length");
        (ocp, theta)
    }
}

fn quad_form<S: Real>(m: &DMatrix<f64>, v: &[S]) -> S {
    let mut acc = S::zero();
    for i in 0..v.len() {
        for j in 0..v.len() {
            acc += v[i] * v[j] * m[(i, j)];
        }
    }
    acc
}

impl OcpModel for RandomOcp {
    fn dims(&self) -> OcpDimensions {
        self.dims
    }

    fn stage_cost<S: Real>(&self, stage: usize, x: &[S], u: &[S], p: &[S]) -> S {
        let v: Vec<S> = x.iter().chain(u).copied().collect();
        let mut acc = quad_form(&self.w[stage], &v) * 0.5;
        for (i, vi) in v.iter().enumerate() {
            let mut lin = S::from_f64(self.f_vec[stage][i]);
            for (j, pj) in p.iter().enumerate() {
                lin += *pj * self.f_mat[stage][(i, j)];
            }
            acc += lin * *vi + vi.cos() * 0.05;
        }
        acc
    }

    fn terminal_cost<S: Real>(&self, x: &[S], _p: &[S]) -> S {
        quad_form(&self.w_terminal, x) * 0.5
    }

    fn dynamics<S: Real>(&self, stage: usize, x: &[S], u: &[S], p: &[S]) -> Vec<S> {
        let nx = self.dims.nx;
        (0..nx)
            .map(|i| {
                let mut acc = x[i].sin() * 0.05;
                for j in 0..nx {
                    acc += x[j] * self.a[stage][(i, j)];
                }
                for (j, uj) in u.iter().enumerate() {
                    acc += *uj * self.b[stage][(i, j)];
                }
                for (j, pj) in p.iter().enumerate() {
                    acc += *pj * self.e[stage][(i, j)];
                }
                acc
            })
            .collect()
    }

    fn path_constraints<S: Real>(&self, _stage: usize, _x: &[S], u: &[S], p: &[S]) -> Vec<S> {
        let upper = p[0] * 0.1 + 1.0;
        let lo = u.iter().map(|&ui| -ui - 1.0);
        let hi = u.iter().map(move |&ui| ui - upper);
        lo.chain(hi).collect()
    }
}
