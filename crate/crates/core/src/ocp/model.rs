use nalgebra::{DMatrix, DVector};

use crate::dual::{self, Real, ScalarFn, VectorFn};
use crate::error::{Error, Result};

/// Dimensions of a stage-structured OCP with a constant stage layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcpDimensions {
    /// Number of shooting intervals `N`.
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    /// Path constraints per stage `0..N`.
    pub nh: usize,
    /// Terminal constraints.
    pub nh_terminal: usize,
    /// Parameters of the model functions.
    pub ntheta: usize,
}

impl OcpDimensions {
    pub fn stage_width(&self) -> usize {
        self.nx + self.nu
    }

    /// `(N+1)·n_x + N·n_u`.
    pub fn nz(&self) -> usize {
        (self.horizon + 1) * self.nx + self.horizon * self.nu
    }

    /// `(N+1)·n_x`: initial-state row plus `N` dynamics rows.
    pub fn ng(&self) -> usize {
        (self.horizon + 1) * self.nx
    }

    pub fn nh_total(&self) -> usize {
        self.horizon * self.nh + self.nh_terminal
    }

    pub fn nw(&self) -> usize {
        self.nz() + self.ng() + 2 * self.nh_total()
    }

    /// Offset of `x_n` inside `z`.
    pub fn x_offset(&self, stage: usize) -> usize {
        stage * self.stage_width()
    }

    /// Offset of `u_n` inside `z`.
    pub fn u_offset(&self, stage: usize) -> usize {
        stage * self.stage_width() + self.nx
    }

    /// Offset of the multiplier block of equality row block `k`
    /// (`k = 0`: initial state, `k = n+1`: dynamics of stage `n`).
    pub fn lam_offset(&self, k: usize) -> usize {
        k * self.nx
    }

    /// Offset of the inequality block of stage `n` (`n = N` is terminal).
    pub fn h_offset(&self, stage: usize) -> usize {
        stage * self.nh
    }

    pub fn stage_nh(&self, stage: usize) -> usize {
        if stage == self.horizon {
            self.nh_terminal
        } else {
            self.nh
        }
    }
}

/// First-order information of one stage at `(x_n, u_n)`; for the terminal
/// stage `u` is empty and the dynamics blocks have zero rows.
#[derive(Debug, Clone)]
pub struct StageFirstOrder {
    pub cost: f64,
    /// Gradient of the cost over `(x, u)`.
    pub cost_grad: DVector<f64>,
    pub next: DVector<f64>,
    /// `[∂φ/∂x  ∂φ/∂u]`.
    pub dyn_jac: DMatrix<f64>,
    pub cons: DVector<f64>,
    /// `[∂h/∂x  ∂h/∂u]`.
    pub cons_jac: DMatrix<f64>,
}

/// Parameter derivatives of one stage, each with `n_θ` columns.
#[derive(Debug, Clone)]
pub struct StageParamJacobians {
    /// `∂/∂θ ∇_{(x,u)} (L + λ⁺ᵀφ + μᵀh)`.
    pub lagrangian_grad: DMatrix<f64>,
    pub dynamics: DMatrix<f64>,
    pub constraints: DMatrix<f64>,
}

/// Parametric stage-structured OCP
///
/// ```text
/// min  Σ L_n(x_n, u_n; θ) + M(x_N; θ)
/// s.t. x_0 = x̄_0,  x_{n+1} = φ_n(x_n, u_n; θ),  h_n(x_n, u_n; θ) ≤ 0,  h_N(x_N; θ) ≤ 0
/// ```
///
/// Only the generic function definitions are required; derivatives default to
/// nested dual numbers and can be overridden with analytic expressions.
pub trait OcpModel: Send + Sync {
    fn dims(&self) -> OcpDimensions;

    fn stage_cost<S: Real>(&self, stage: usize, x: &[S], u: &[S], p: &[S]) -> S;

    fn terminal_cost<S: Real>(&self, x: &[S], p: &[S]) -> S;

    fn dynamics<S: Real>(&self, stage: usize, x: &[S], u: &[S], p: &[S]) -> Vec<S>;

    fn path_constraints<S: Real>(&self, _stage: usize, _x: &[S], _u: &[S], _p: &[S]) -> Vec<S> {
        Vec::new()
    }

    fn terminal_constraints<S: Real>(&self, _x: &[S], _p: &[S]) -> Vec<S> {
        Vec::new()
    }

    /// Parameters stage `stage` depends on (`stage = N` for the terminal
    /// stage); `None` means all of them.
    fn param_support(&self, _stage: usize) -> Option<Vec<usize>> {
        None
    }

    fn stage_first_order(
        &self,
        stage: usize,
        x: &[f64],
        u: &[f64],
        p: &[f64],
    ) -> Result<StageFirstOrder> {
        default_first_order(self, Some(stage), x, u, p)
    }

    fn terminal_first_order(&self, x: &[f64], p: &[f64]) -> Result<StageFirstOrder> {
        default_first_order(self, None, x, &[], p)
    }

    /// `∇²_{(x,u)} [L_n + λ⁺ᵀφ_n + μᵀh_n]`.
    fn stage_lagrangian_hessian(
        &self,
        stage: usize,
        x: &[f64],
        u: &[f64],
        p: &[f64],
        lam_next: &[f64],
        mu: &[f64],
    ) -> Result<DMatrix<f64>> {
        let f = StageFn::lagrangian(self, Some(stage), x.len(), u.len(), lam_next, mu);
        hessian_xu(&f, x, u, p)
    }

    fn terminal_lagrangian_hessian(&self, x: &[f64], p: &[f64], mu: &[f64]) -> Result<DMatrix<f64>> {
        let f = StageFn::lagrangian(self, None, x.len(), 0, &[], mu);
        hessian_xu(&f, x, &[], p)
    }

    /// Gauss-Newton Hessian `JᵀWJ` of a least-squares stage cost. The default
    /// is the exact cost Hessian, which coincides with `JᵀWJ` whenever the
    /// residual is linear in `(x, u)`.
    fn stage_gauss_newton_hessian(
        &self,
        stage: usize,
        x: &[f64],
        u: &[f64],
        p: &[f64],
    ) -> Result<DMatrix<f64>> {
        let f = StageFn::cost(self, Some(stage), x.len(), u.len());
        hessian_xu(&f, x, u, p)
    }

    fn terminal_gauss_newton_hessian(&self, x: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
        let f = StageFn::cost(self, None, x.len(), 0);
        hessian_xu(&f, x, &[], p)
    }

    fn stage_param_jacobians(
        &self,
        stage: usize,
        x: &[f64],
        u: &[f64],
        p: &[f64],
        lam_next: &[f64],
        mu: &[f64],
    ) -> Result<StageParamJacobians> {
        default_param_jacobians(self, Some(stage), x, u, p, lam_next, mu)
    }

    fn terminal_param_jacobians(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &[f64],
    ) -> Result<StageParamJacobians> {
        default_param_jacobians(self, None, x, &[], p, &[], mu)
    }
}

#[derive(Clone, Copy)]
enum StageOutput<'a> {
    Cost,
    Lagrangian { lam_next: &'a [f64], mu: &'a [f64] },
}

/// Adapter presenting one stage function over the stacked vector `(x, u, p)`.
struct StageFn<'a, M: ?Sized> {
    model: &'a M,
    /// `None` selects the terminal stage.
    stage: Option<usize>,
    nx: usize,
    nu: usize,
    output: StageOutput<'a>,
}

impl<'a, M: OcpModel + ?Sized> StageFn<'a, M> {
    fn cost(model: &'a M, stage: Option<usize>, nx: usize, nu: usize) -> Self {
        StageFn {
            model,
            stage,
            nx,
            nu,
            output: StageOutput::Cost,
        }
    }

    fn lagrangian(
        model: &'a M,
        stage: Option<usize>,
        nx: usize,
        nu: usize,
        lam_next: &'a [f64],
        mu: &'a [f64],
    ) -> Self {
        StageFn {
            model,
            stage,
            nx,
            nu,
            output: StageOutput::Lagrangian { lam_next, mu },
        }
    }

    fn split<'b, S>(&self, v: &'b [S]) -> (&'b [S], &'b [S], &'b [S]) {
        let (x, rest) = v.split_at(self.nx);
        let (u, p) = rest.split_at(self.nu);
        (x, u, p)
    }
}

impl<M: OcpModel + ?Sized> ScalarFn for StageFn<'_, M> {
    fn call<S: Real>(&self, v: &[S]) -> S {
        let (x, u, p) = self.split(v);
        let cost = match self.stage {
            Some(n) => self.model.stage_cost(n, x, u, p),
            None => self.model.terminal_cost(x, p),
        };
        match self.output {
            StageOutput::Cost => cost,
            StageOutput::Lagrangian { lam_next, mu } => {
                let mut total = cost;
                if let Some(n) = self.stage {
                    for (phi, &l) in self.model.dynamics(n, x, u, p).into_iter().zip(lam_next) {
                        total += phi * l;
                    }
                }
                let cons = match self.stage {
                    Some(n) => self.model.path_constraints(n, x, u, p),
                    None => self.model.terminal_constraints(x, p),
                };
                for (h, &m) in cons.into_iter().zip(mu) {
                    total += h * m;
                }
                total
            }
        }
    }
}

/// Dynamics (`dynamics = true`) or constraints of one stage as a vector function.
struct StageVecFn<'a, M: ?Sized> {
    model: &'a M,
    stage: Option<usize>,
    nx: usize,
    nu: usize,
    dynamics: bool,
}

impl<M: OcpModel + ?Sized> VectorFn for StageVecFn<'_, M> {
    fn call<S: Real>(&self, v: &[S]) -> Vec<S> {
        let (x, rest) = v.split_at(self.nx);
        let (u, p) = rest.split_at(self.nu);
        match (self.stage, self.dynamics) {
            (Some(n), true) => self.model.dynamics(n, x, u, p),
            (Some(n), false) => self.model.path_constraints(n, x, u, p),
            (None, true) => Vec::new(),
            (None, false) => self.model.terminal_constraints(x, p),
        }
    }
}

fn stack(x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + u.len() + p.len());
    v.extend_from_slice(x);
    v.extend_from_slice(u);
    v.extend_from_slice(p);
    v
}

fn stage_error(stage: Option<usize>, horizon: usize) -> impl Fn(Error) -> Error {
    let stage = stage.unwrap_or(horizon);
    move |e| match e {
        Error::Domain(_) => Error::StageEvaluation { stage },
        other => other,
    }
}

fn hessian_xu<F: ScalarFn>(f: &F, x: &[f64], u: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
    let v = stack(x, u, p);
    let idx: Vec<usize> = (0..x.len() + u.len()).collect();
    dual::mixed_second_derivatives(f, &v, &idx, &idx)
}

fn default_first_order<M: OcpModel + ?Sized>(
    model: &M,
    stage: Option<usize>,
    x: &[f64],
    u: &[f64],
    p: &[f64],
) -> Result<StageFirstOrder> {
    let dims = model.dims();
    let on_err = stage_error(stage, dims.horizon);
    let (nx, nu) = (x.len(), u.len());
    let v = stack(x, u, p);
    let idx: Vec<usize> = (0..nx + nu).collect();
    let cost_fn = StageFn::cost(model, stage, nx, nu);
    let (cost, cost_grad) = dual::gradient_wrt(&cost_fn, &v, &idx).map_err(&on_err)?;
    let dyn_fn = StageVecFn {
        model,
        stage,
        nx,
        nu,
        dynamics: true,
    };
    let (next, dyn_jac) = dual::jacobian_wrt(&dyn_fn, &v, &idx).map_err(&on_err)?;
    let cons_fn = StageVecFn {
        dynamics: false,
        ..dyn_fn
    };
    let (cons, cons_jac) = dual::jacobian_wrt(&cons_fn, &v, &idx).map_err(&on_err)?;
    Ok(StageFirstOrder {
        cost,
        cost_grad,
        next,
        dyn_jac,
        cons,
        cons_jac,
    })
}

fn default_param_jacobians<M: OcpModel + ?Sized>(
    model: &M,
    stage: Option<usize>,
    x: &[f64],
    u: &[f64],
    p: &[f64],
    lam_next: &[f64],
    mu: &[f64],
) -> Result<StageParamJacobians> {
    let dims = model.dims();
    let on_err = stage_error(stage, dims.horizon);
    let (nx, nu, np) = (x.len(), u.len(), p.len());
    let v = stack(x, u, p);
    let rows: Vec<usize> = (0..nx + nu).collect();
    let support = model
        .param_support(stage.unwrap_or(dims.horizon))
        .unwrap_or_else(|| (0..np).collect());
    let cols: Vec<usize> = support.iter().map(|&j| nx + nu + j).collect();

    let lagr = StageFn::lagrangian(model, stage, nx, nu, lam_next, mu);
    let grad_part = dual::mixed_second_derivatives(&lagr, &v, &rows, &cols).map_err(&on_err)?;
    let dyn_fn = StageVecFn {
        model,
        stage,
        nx,
        nu,
        dynamics: true,
    };
    let (_, dyn_part) = dual::jacobian_wrt(&dyn_fn, &v, &cols).map_err(&on_err)?;
    let cons_fn = StageVecFn {
        dynamics: false,
        ..dyn_fn
    };
    let (_, cons_part) = dual::jacobian_wrt(&cons_fn, &v, &cols).map_err(&on_err)?;

    let scatter = |part: &DMatrix<f64>| {
        let mut full = DMatrix::zeros(part.nrows(), np);
        for (k, &j) in support.iter().enumerate() {
            full.column_mut(j).copy_from(&part.column(k));
        }
        full
    };
    Ok(StageParamJacobians {
        lagrangian_grad: scatter(&grad_part),
        dynamics: scatter(&dyn_part),
        constraints: scatter(&cons_part),
    })
}

/// One classical fourth-order Runge-Kutta step of `ẋ = f(x, u, p)`.
pub fn rk4_step<S, F>(ode_rhs: F, x: &[S], u: &[S], p: &[S], dt: f64) -> Vec<S>
where
    S: Real,
    F: Fn(&[S], &[S], &[S]) -> Vec<S>,
{
    let shifted = |base: &[S], k: &[S], h: f64| -> Vec<S> {
        base.iter().zip(k).map(|(&b, &ki)| b + ki * h).collect()
    };
    let k1 = ode_rhs(x, u, p);
    let k2 = ode_rhs(&shifted(x, &k1, 0.5 * dt), u, p);
    let k3 = ode_rhs(&shifted(x, &k2, 0.5 * dt), u, p);
    let k4 = ode_rhs(&shifted(x, &k3, dt), u, p);
    x.iter()
        .enumerate()
        .map(|(i, &xi)| xi + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
        .collect()
}
