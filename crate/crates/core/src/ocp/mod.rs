//! Stage-structured parametric optimal control problems: definition, dense
//! NLP view, QP linearization and parameter Jacobians.

mod model;
mod qp;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use model::{
    rk4_step, OcpDimensions, OcpModel, StageFirstOrder, StageParamJacobians,
};
pub use qp::{DenseQp, HessianKind, HessianMode, StageQp, StageQpData, TerminalQp};

use crate::error::{check_len, Error, Result};
use crate::nlp::{Iterate, Nlp, NlpDims, ParamJacobians, ParamVector};

/// An [`OcpModel`] together with its initial state.
///
/// With [`OcpDefinition::with_x0_as_parameter`] the last `n_x` entries of the
/// parameter vector are read as `x̄_0`, so sensitivities with respect to the
/// initial state come out of the same machinery.
#[derive(Debug)]
pub struct OcpDefinition<M> {
    model: Arc<M>,
    x0: DVector<f64>,
    x0_in_params: bool,
}

impl<M> Clone for OcpDefinition<M> {
    fn clone(&self) -> Self {
        OcpDefinition {
            model: Arc::clone(&self.model),
            x0: self.x0.clone(),
            x0_in_params: self.x0_in_params,
        }
    }
}

impl<M: OcpModel> OcpDefinition<M> {
    pub fn new(model: M, x0: Vec<f64>) -> Result<Self> {
        Self::from_shared(Arc::new(model), x0)
    }

    pub fn from_shared(model: Arc<M>, x0: Vec<f64>) -> Result<Self> {
        check_len("initial state", model.dims().nx, x0.len())?;
        Ok(OcpDefinition {
            model,
            x0: DVector::from_vec(x0),
            x0_in_params: false,
        })
    }

    pub fn with_x0_as_parameter(mut self) -> Self {
        self.x0_in_params = true;
        self
    }

    /// Same model with a different fixed initial state.
    pub fn with_initial_state(&self, x0: &[f64]) -> Result<Self> {
        check_len("initial state", self.dims().nx, x0.len())?;
        let mut out = self.clone();
        out.x0 = DVector::from_column_slice(x0);
        Ok(out)
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn shared_model(&self) -> Arc<M> {
        Arc::clone(&self.model)
    }

    pub fn dims(&self) -> OcpDimensions {
        self.model.dims()
    }

    pub fn x0_is_parameter(&self) -> bool {
        self.x0_in_params
    }

    /// Length of the full parameter vector.
    pub fn ntheta(&self) -> usize {
        let d = self.dims();
        d.ntheta + if self.x0_in_params { d.nx } else { 0 }
    }

    pub fn model_params<'a>(&self, theta: &'a ParamVector) -> &'a [f64] {
        &theta.as_slice()[..self.dims().ntheta]
    }

    pub fn initial_state(&self, theta: &ParamVector) -> DVector<f64> {
        if self.x0_in_params {
            let d = self.dims();
            DVector::from_column_slice(&theta.as_slice()[d.ntheta..d.ntheta + d.nx])
        } else {
            self.x0.clone()
        }
    }

    pub fn x<'a>(&self, z: &'a DVector<f64>, stage: usize) -> &'a [f64] {
        let d = self.dims();
        &z.as_slice()[d.x_offset(stage)..d.x_offset(stage) + d.nx]
    }

    pub fn u<'a>(&self, z: &'a DVector<f64>, stage: usize) -> &'a [f64] {
        let d = self.dims();
        &z.as_slice()[d.u_offset(stage)..d.u_offset(stage) + d.nu]
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        check_len("theta", self.ntheta(), theta.len())
    }

    /// Cold start: `x̄_0` held over the horizon, `u = 0`, `λ = 0`, `μ = s = 1`.
    pub fn default_init(&self, theta: &ParamVector) -> Iterate {
        let d = self.dims();
        let x0 = self.initial_state(theta);
        let mut w = Iterate::zeros(self.nlp_dims());
        for n in 0..=d.horizon {
            w.z.rows_mut(d.x_offset(n), d.nx).copy_from(&x0);
        }
        w.mu.fill(1.0);
        w.s.fill(1.0);
        w
    }

    /// Forward simulation with the given controls (one `n_u` block per
    /// stage), zero multipliers and `μ = s = 1`.
    pub fn rollout_init(&self, theta: &ParamVector, controls: &[Vec<f64>]) -> Result<Iterate> {
        let d = self.dims();
        check_len("control blocks", d.horizon, controls.len())?;
        let p = self.model_params(theta);
        let mut w = self.default_init(theta);
        let mut x: Vec<f64> = self.initial_state(theta).iter().copied().collect();
        for (n, u) in controls.iter().enumerate() {
            check_len("controls", d.nu, u.len())?;
            w.z.rows_mut(d.x_offset(n), d.nx).copy_from_slice(&x);
            w.z.rows_mut(d.u_offset(n), d.nu).copy_from_slice(u);
            x = self.model.dynamics(n, &x, u, p);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::StageEvaluation { stage: n });
            }
        }
        w.z.rows_mut(d.x_offset(d.horizon), d.nx).copy_from_slice(&x);
        Ok(w)
    }

    /// First-order evaluations of all stages, the terminal stage last.
    pub fn first_order(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<Vec<StageFirstOrder>> {
        check_len("z", self.dims().nz(), z.len())?;
        self.check_theta(theta)?;
        let d = self.dims();
        let p = self.model_params(theta);
        let mut out = Vec::with_capacity(d.horizon + 1);
        for n in 0..d.horizon {
            let fo = self.model.stage_first_order(n, self.x(z, n), self.u(z, n), p)?;
            check_stage_shapes(&fo, d, n)?;
            out.push(fo);
        }
        let fo = self.model.terminal_first_order(self.x(z, d.horizon), p)?;
        check_stage_shapes(&fo, d, d.horizon)?;
        out.push(fo);
        Ok(out)
    }
}

fn check_stage_shapes(fo: &StageFirstOrder, d: OcpDimensions, stage: usize) -> Result<()> {
    let terminal = stage == d.horizon;
    check_len("stage dynamics", if terminal { 0 } else { d.nx }, fo.next.len())?;
    check_len("stage constraints", d.stage_nh(stage), fo.cons.len())?;
    let finite = fo.cost.is_finite()
        && fo.cost_grad.iter().all(|v| v.is_finite())
        && fo.next.iter().all(|v| v.is_finite())
        && fo.dyn_jac.iter().all(|v| v.is_finite())
        && fo.cons.iter().all(|v| v.is_finite())
        && fo.cons_jac.iter().all(|v| v.is_finite());
    if finite {
        Ok(())
    } else {
        Err(Error::StageEvaluation { stage })
    }
}

fn check_finite_matrix(m: &DMatrix<f64>, stage: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::StageEvaluation { stage })
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

impl<M: OcpModel> Nlp for OcpDefinition<M> {
    fn nlp_dims(&self) -> NlpDims {
        let d = self.dims();
        NlpDims {
            nz: d.nz(),
            ng: d.ng(),
            nh: d.nh_total(),
            ntheta: self.ntheta(),
        }
    }

    fn objective(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<f64> {
        check_len("z", self.dims().nz(), z.len())?;
        self.check_theta(theta)?;
        let d = self.dims();
        let p = self.model_params(theta);
        let mut total = 0.0;
        for n in 0..d.horizon {
            total += self.model.stage_cost(n, self.x(z, n), self.u(z, n), p);
        }
        total += self.model.terminal_cost(self.x(z, d.horizon), p);
        Ok(total)
    }

    fn objective_gradient(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DVector<f64>> {
        let d = self.dims();
        let fo = self.first_order(z, theta)?;
        let mut grad = DVector::zeros(d.nz());
        for (n, st) in fo.iter().enumerate() {
            grad.rows_mut(d.x_offset(n), st.cost_grad.len())
                .copy_from(&st.cost_grad);
        }
        Ok(grad)
    }

    fn equalities(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DVector<f64>> {
        let d = self.dims();
        let fo = self.first_order(z, theta)?;
        let mut g = DVector::zeros(d.ng());
        let x0 = self.initial_state(theta);
        g.rows_mut(0, d.nx)
            .copy_from(&(DVector::from_column_slice(self.x(z, 0)) - x0));
        for n in 0..d.horizon {
            let next = DVector::from_column_slice(self.x(z, n + 1));
            g.rows_mut(d.lam_offset(n + 1), d.nx)
                .copy_from(&(&fo[n].next - next));
        }
        Ok(g)
    }

    fn equality_jacobian(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DMatrix<f64>> {
        let d = self.dims();
        let fo = self.first_order(z, theta)?;
        let mut jac = DMatrix::zeros(d.ng(), d.nz());
        for i in 0..d.nx {
            jac[(i, i)] = 1.0;
        }
        for n in 0..d.horizon {
            let row = d.lam_offset(n + 1);
            jac.view_mut((row, d.x_offset(n)), (d.nx, d.stage_width()))
                .copy_from(&fo[n].dyn_jac);
            for i in 0..d.nx {
                jac[(row + i, d.x_offset(n + 1) + i)] = -1.0;
            }
        }
        Ok(jac)
    }

    fn inequalities(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DVector<f64>> {
        let d = self.dims();
        let fo = self.first_order(z, theta)?;
        let mut h = DVector::zeros(d.nh_total());
        for (n, st) in fo.iter().enumerate() {
            h.rows_mut(d.h_offset(n), st.cons.len()).copy_from(&st.cons);
        }
        Ok(h)
    }

    fn inequality_jacobian(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DMatrix<f64>> {
        let d = self.dims();
        let fo = self.first_order(z, theta)?;
        let mut jac = DMatrix::zeros(d.nh_total(), d.nz());
        for (n, st) in fo.iter().enumerate() {
            jac.view_mut((d.h_offset(n), d.x_offset(n)), st.cons_jac.shape())
                .copy_from(&st.cons_jac);
        }
        Ok(jac)
    }

    fn lagrangian_hessian(
        &self,
        z: &DVector<f64>,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
        theta: &ParamVector,
    ) -> Result<DMatrix<f64>> {
        let w = Iterate {
            z: z.clone(),
            lam: lam.clone(),
            mu: mu.clone(),
            s: mu.clone(),
        };
        let qp = linearize_at(self, &w, theta, HessianMode::exact())?;
        Ok(qp.to_dense().hess)
    }

    fn param_jacobians(
        &self,
        z: &DVector<f64>,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
        theta: &ParamVector,
    ) -> Result<ParamJacobians> {
        let d = self.dims();
        check_len("z", d.nz(), z.len())?;
        check_len("lambda", d.ng(), lam.len())?;
        check_len("mu", d.nh_total(), mu.len())?;
        self.check_theta(theta)?;
        let p = self.model_params(theta);
        let nt = self.ntheta();
        let mut out = ParamJacobians {
            stat: DMatrix::zeros(d.nz(), nt),
            eq: DMatrix::zeros(d.ng(), nt),
            ineq: DMatrix::zeros(d.nh_total(), nt),
        };
        let nm = d.ntheta;
        for n in 0..=d.horizon {
            let nh = d.stage_nh(n);
            let mu_n = &mu.as_slice()[d.h_offset(n)..d.h_offset(n) + nh];
            let jac = if n < d.horizon {
                let lam_next = &lam.as_slice()[d.lam_offset(n + 1)..d.lam_offset(n + 1) + d.nx];
                self.model
                    .stage_param_jacobians(n, self.x(z, n), self.u(z, n), p, lam_next, mu_n)?
            } else {
                self.model.terminal_param_jacobians(self.x(z, n), p, mu_n)?
            };
            for m in [&jac.lagrangian_grad, &jac.dynamics, &jac.constraints] {
                check_finite_matrix(m, n)?;
            }
            let width = jac.lagrangian_grad.nrows();
            out.stat
                .view_mut((d.x_offset(n), 0), (width, nm))
                .copy_from(&jac.lagrangian_grad);
            if n < d.horizon {
                out.eq
                    .view_mut((d.lam_offset(n + 1), 0), (d.nx, nm))
                    .copy_from(&jac.dynamics);
            }
            out.ineq
                .view_mut((d.h_offset(n), 0), (nh, nm))
                .copy_from(&jac.constraints);
        }
        if self.x0_in_params {
            for i in 0..d.nx {
                out.eq[(i, nm + i)] = -1.0;
            }
        }
        Ok(out)
    }

    fn lagrangian_gradient(
        &self,
        z: &DVector<f64>,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
        theta: &ParamVector,
    ) -> Result<DVector<f64>> {
        let d = self.dims();
        check_len("lambda", d.ng(), lam.len())?;
        check_len("mu", d.nh_total(), mu.len())?;
        let fo = self.first_order(z, theta)?;
        let mut grad = DVector::zeros(d.nz());
        for (n, st) in fo.iter().enumerate() {
            let width = st.cost_grad.len();
            let mut g = st.cost_grad.clone();
            if n < d.horizon {
                let lam_next = lam.rows(d.lam_offset(n + 1), d.nx);
                g += st.dyn_jac.tr_mul(&lam_next);
            }
            let mu_n = mu.rows(d.h_offset(n), d.stage_nh(n));
            g += st.cons_jac.tr_mul(&mu_n);
            let mut x_part = g.rows_mut(0, d.nx);
            if n == 0 {
                x_part += lam.rows(0, d.nx);
            } else {
                x_part -= lam.rows(d.lam_offset(n), d.nx);
            }
            grad.rows_mut(d.x_offset(n), width).copy_from(&g);
        }
        Ok(grad)
    }
}

/// Per-stage QP data of the SQP subproblem at `w`.
pub fn linearize_at<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    w: &Iterate,
    theta: &ParamVector,
    mode: HessianMode,
) -> Result<StageQpData> {
    let d = ocp.dims();
    w.dims_match(ocp.nlp_dims())?;
    let fo = ocp.first_order(&w.z, theta)?;
    let p = ocp.model_params(theta);
    let (nx, nu) = (d.nx, d.nu);
    let mut stages = Vec::with_capacity(d.horizon);
    for (n, st) in fo.iter().take(d.horizon).enumerate() {
        let x = ocp.x(&w.z, n);
        let u = ocp.u(&w.z, n);
        let mu_n = &w.mu.as_slice()[d.h_offset(n)..d.h_offset(n) + d.nh];
        let mut hess = match mode.kind {
            HessianKind::Exact => {
                let lam_next = &w.lam.as_slice()[d.lam_offset(n + 1)..d.lam_offset(n + 1) + nx];
                ocp.model.stage_lagrangian_hessian(n, x, u, p, lam_next, mu_n)?
            }
            HessianKind::GaussNewton => ocp.model.stage_gauss_newton_hessian(n, x, u, p)?,
        };
        check_finite_matrix(&hess, n)?;
        symmetrize(&mut hess);
        for i in 0..d.stage_width() {
            hess[(i, i)] += mode.levenberg_marquardt;
        }
        let next = DVector::from_column_slice(ocp.x(&w.z, n + 1));
        stages.push(StageQp {
            hess,
            grad: st.cost_grad.clone(),
            a: st.dyn_jac.columns(0, nx).into_owned(),
            b: st.dyn_jac.columns(nx, nu).into_owned(),
            dyn_res: &st.next - next,
            c: st.cons_jac.columns(0, nx).into_owned(),
            d: st.cons_jac.columns(nx, nu).into_owned(),
            h: st.cons.clone(),
        });
    }
    let xn = ocp.x(&w.z, d.horizon);
    let mu_n = &w.mu.as_slice()[d.h_offset(d.horizon)..];
    let mut hess = match mode.kind {
        HessianKind::Exact => ocp.model.terminal_lagrangian_hessian(xn, p, mu_n)?,
        HessianKind::GaussNewton => ocp.model.terminal_gauss_newton_hessian(xn, p)?,
    };
    check_finite_matrix(&hess, d.horizon)?;
    symmetrize(&mut hess);
    for i in 0..nx {
        hess[(i, i)] += mode.levenberg_marquardt;
    }
    let term = &fo[d.horizon];
    let init_res = DVector::from_column_slice(ocp.x(&w.z, 0)) - ocp.initial_state(theta);
    Ok(StageQpData {
        dims: d,
        stages,
        terminal: TerminalQp {
            hess,
            grad: term.cost_grad.clone(),
            c: term.cons_jac.clone(),
            h: term.cons.clone(),
        },
        init_res,
        hessian_mode: mode,
    })
}

/// `∂r/∂θ` of the primal-dual residual `r = (∇_z L, g, h + s, μ∘s − τ)` at `w`,
/// rows ordered like [`Iterate::to_flat`]. Complementarity rows are zero.
pub fn eval_param_jacobian<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    w: &Iterate,
    theta: &ParamVector,
    tau: f64,
) -> Result<DMatrix<f64>> {
    if tau < 0.0 {
        return Err(Error::Domain(format!("negative barrier value {tau}")));
    }
    let dims = ocp.nlp_dims();
    w.dims_match(dims)?;
    let pj = ocp.param_jacobians(&w.z, &w.lam, &w.mu, theta)?;
    let mut jac = DMatrix::zeros(dims.nw(), dims.ntheta);
    jac.rows_mut(0, dims.nz).copy_from(&pj.stat);
    jac.rows_mut(dims.nz, dims.ng).copy_from(&pj.eq);
    jac.rows_mut(dims.nz + dims.ng, dims.nh).copy_from(&pj.ineq);
    Ok(jac)
}
