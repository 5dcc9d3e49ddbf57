//! Parametric sensitivities of a converged smoothed KKT point.
//!
//! With `r(w; θ)` the smoothed KKT residual and `ℳ = ∂r/∂w` built from the
//! exact Lagrangian Hessian, the implicit function theorem gives
//! `∂w/∂θ = −ℳ⁻¹ ∂r/∂θ`. Here `J` always denotes `∂r/∂θ` itself, so forward
//! sensitivities are `−ℳ⁻¹J` and adjoints are `−Jᵀℳ⁻ᵀν`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::kkt::KktSystem;
use crate::nlp::{strict_complementarity_margin, Iterate, Nlp, NlpDims, ParamVector, RegularityDiagnostics};
use crate::ocp::{eval_param_jacobian, linearize_at, HessianMode, OcpDefinition, OcpDimensions, OcpModel};
use crate::sqp::{solve_nlp, SolveResult, SqpSettings};

/// Lower clamp on slacks before forming `μ/s`.
pub const SLACK_CLAMP: f64 = 1e-14;
/// Below this strict-complementarity margin a degeneracy warning is raised.
pub const DEGENERACY_MARGIN: f64 = 1e-6;
/// Activity threshold of the active-set oracle.
pub const ACTIVE_THRESHOLD: f64 = 1e-6;

/// Exact-Hessian Newton matrix at a solution, factorized once and shared by
/// forward and adjoint solves.
#[derive(Debug, Clone)]
pub struct SensitivityWorkspace {
    system: KktSystem,
    /// `∂r/∂θ` at the solution, `n_w × n_θ`.
    jac: DMatrix<f64>,
    w: Iterate,
    theta: ParamVector,
    tau_min: f64,
    ocp_dims: OcpDimensions,
    diagnostics: RegularityDiagnostics,
    warnings: Vec<String>,
}

impl SensitivityWorkspace {
    /// Builds the exact-Hessian system at a converged result.
    pub fn setup_and_factorize<M: OcpModel>(
        ocp: &OcpDefinition<M>,
        result: &SolveResult,
        theta: &ParamVector,
        tau_min: f64,
    ) -> Result<Self> {
        Self::setup_with_hessian(ocp, result, theta, tau_min, HessianMode::exact())
    }

    /// Rejects every mode other than the unregularized exact Hessian.
    pub fn setup_with_hessian<M: OcpModel>(
        ocp: &OcpDefinition<M>,
        result: &SolveResult,
        theta: &ParamVector,
        tau_min: f64,
        mode: HessianMode,
    ) -> Result<Self> {
        if !mode.is_unregularized_exact() {
            return Err(Error::InexactHessian);
        }
        Self::build(ocp, result, theta, tau_min, mode)
    }

    /// Same as [`SensitivityWorkspace::setup_with_hessian`] without the
    /// Hessian check. Only meant for demonstrating how inexact Hessians
    /// corrupt sensitivities.
    pub fn setup_with_inexact_hessian<M: OcpModel>(
        ocp: &OcpDefinition<M>,
        result: &SolveResult,
        theta: &ParamVector,
        tau_min: f64,
        mode: HessianMode,
    ) -> Result<Self> {
        Self::build(ocp, result, theta, tau_min, mode)
    }

    fn build<M: OcpModel>(
        ocp: &OcpDefinition<M>,
        result: &SolveResult,
        theta: &ParamVector,
        tau_min: f64,
        mode: HessianMode,
    ) -> Result<Self> {
        if !result.converged() {
            return Err(Error::NotConverged(format!(
                "sensitivities need a converged solution (status {})",
                result.status.as_str()
            )));
        }
        let mut w = result.w.clone();
        w.dims_match(ocp.nlp_dims())?;
        w.s = w.s.map(|v| v.max(SLACK_CLAMP));
        w.mu = w.mu.map(|v| v.max(f64::MIN_POSITIVE));
        let diagnostics = strict_complementarity_margin(&w);
        let mut warnings = Vec::new();
        if diagnostics.strict_comp_margin < DEGENERACY_MARGIN {
            warnings.push(format!(
                "strict complementarity margin {:.3e} below {DEGENERACY_MARGIN:e}",
                diagnostics.strict_comp_margin
            ));
        }
        let qp = linearize_at(ocp, &w, theta, mode)?;
        let jac = eval_param_jacobian(ocp, &w, theta, tau_min)?;
        let system = KktSystem::new(qp, &w.mu, &w.s)?;
        let diagnostics = RegularityDiagnostics {
            hessian_inertia_ok: Some(true),
            ..diagnostics
        };
        Ok(SensitivityWorkspace {
            system,
            jac,
            w,
            theta: theta.clone(),
            tau_min,
            ocp_dims: ocp.dims(),
            diagnostics,
            warnings,
        })
    }

    pub fn nlp_dims(&self) -> NlpDims {
        NlpDims {
            ntheta: self.theta.len(),
            ..self.system.nlp_dims()
        }
    }

    pub fn ocp_dims(&self) -> OcpDimensions {
        self.ocp_dims
    }

    pub fn param_jacobian(&self) -> &DMatrix<f64> {
        &self.jac
    }

    pub fn solution(&self) -> &Iterate {
        &self.w
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn diagnostics(&self) -> &RegularityDiagnostics {
        &self.diagnostics
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn system(&self) -> &KktSystem {
        &self.system
    }

    /// `∂w/∂θ_j` for every `j` in `param_indices`.
    pub fn forward(&self, param_indices: &[usize]) -> Result<ForwardSensitivities> {
        let nt = self.theta.len();
        let mut rhs = DMatrix::zeros(self.jac.nrows(), param_indices.len());
        for (k, &j) in param_indices.iter().enumerate() {
            if j >= nt {
                return Err(Error::Dimension {
                    what: "parameter index",
                    expected: nt,
                    got: j,
                });
            }
            rhs.column_mut(k).copy_from(&self.jac.column(j));
        }
        // ℳX = −J
        let columns = self.system.solve_panel_refined(&rhs, REFINEMENT_STEPS)?;
        Ok(ForwardSensitivities {
            columns,
            param_indices: param_indices.to_vec(),
            dims: self.ocp_dims,
            nlp: self.nlp_dims(),
        })
    }

    pub fn forward_all(&self) -> Result<ForwardSensitivities> {
        let idx: Vec<usize> = (0..self.theta.len()).collect();
        self.forward(&idx)
    }

    /// `νᵀ ∂w/∂θ` through one transposed solve.
    pub fn adjoint(&self, seed: &AdjointSeed) -> Result<AdjointResult> {
        check_len("adjoint seed", self.jac.nrows(), seed.nu.len())?;
        let nu = DMatrix::from_column_slice(seed.nu.len(), 1, seed.nu.as_slice());
        let x = self.system.solve_transpose_panel_refined(&nu, REFINEMENT_STEPS)?;
        let s_adj = -self.jac.tr_mul(&x.column(0));
        Ok(AdjointResult { s_adj })
    }

    /// Adjoints for the seeds stored as columns of `seeds`; row `k` of the
    /// result belongs to column `k`.
    pub fn adjoint_panel(&self, seeds: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let x = self.system.solve_transpose_panel_refined(seeds, REFINEMENT_STEPS)?;
        Ok(-x.tr_mul(&self.jac))
    }
}

/// Selected columns of `∂w/∂θ`.
#[derive(Debug, Clone)]
pub struct ForwardSensitivities {
    /// `n_w × |param_indices|`, rows ordered like [`Iterate::to_flat`].
    pub columns: DMatrix<f64>,
    pub param_indices: Vec<usize>,
    dims: OcpDimensions,
    nlp: NlpDims,
}

impl ForwardSensitivities {
    pub fn dx(&self, stage: usize) -> DMatrix<f64> {
        self.columns
            .rows(self.dims.x_offset(stage), self.dims.nx)
            .into_owned()
    }

    pub fn du(&self, stage: usize) -> DMatrix<f64> {
        self.columns
            .rows(self.dims.u_offset(stage), self.dims.nu)
            .into_owned()
    }

    pub fn dz(&self) -> DMatrix<f64> {
        self.columns.rows(0, self.nlp.nz).into_owned()
    }

    pub fn dlam(&self) -> DMatrix<f64> {
        self.columns.rows(self.nlp.nz, self.nlp.ng).into_owned()
    }

    pub fn dmu(&self) -> DMatrix<f64> {
        self.columns
            .rows(self.nlp.nz + self.nlp.ng, self.nlp.nh)
            .into_owned()
    }

    pub fn ds(&self) -> DMatrix<f64> {
        self.columns
            .rows(self.nlp.nz + self.nlp.ng + self.nlp.nh, self.nlp.nh)
            .into_owned()
    }
}

/// Seed `ν` of an adjoint solve, laid out like a flattened [`Iterate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSeed {
    pub nu: DVector<f64>,
}

impl AdjointSeed {
    pub fn zeros(dims: NlpDims) -> Self {
        AdjointSeed {
            nu: DVector::zeros(dims.nw()),
        }
    }

    pub fn from_iterate(nu: &Iterate) -> Self {
        AdjointSeed { nu: nu.to_flat() }
    }

    /// Unit seed on control `i` of stage `stage`.
    pub fn control(dims: OcpDimensions, stage: usize, i: usize) -> Self {
        let mut nu = DVector::zeros(dims.nw());
        nu[dims.u_offset(stage) + i] = 1.0;
        AdjointSeed { nu }
    }

    /// Unit seed on state `i` of stage `stage`.
    pub fn state(dims: OcpDimensions, stage: usize, i: usize) -> Self {
        let mut nu = DVector::zeros(dims.nw());
        nu[dims.x_offset(stage) + i] = 1.0;
        AdjointSeed { nu }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResult {
    /// `νᵀ ∂w/∂θ`, length `n_θ`.
    pub s_adj: DVector<f64>,
}

/// Sensitivities from the active-set system of the unsmoothed KKT conditions.
#[derive(Debug, Clone)]
pub struct ActiveSetSensitivities {
    pub active: Vec<usize>,
    /// `n_z × n_θ`.
    pub dz: DMatrix<f64>,
    pub dlam: DMatrix<f64>,
    /// Rows follow `active`.
    pub dmu_active: DMatrix<f64>,
}

/// Solves `[Q Gᵀ H_𝒜ᵀ; G 0 0; H_𝒜 0 0]·d(z, λ, μ_𝒜) = −∂(∇L, g, h_𝒜)/∂θ` with
/// `𝒜` read off the solution. Intended for solutions computed with `τ_min = 0`.
pub fn active_set_sensitivity_oracle<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    result: &SolveResult,
    theta: &ParamVector,
) -> Result<ActiveSetSensitivities> {
    if !result.converged() {
        return Err(Error::NotConverged("active-set oracle needs a converged solution".into()));
    }
    let dims = ocp.nlp_dims();
    let w = &result.w;
    let h = ocp.inequalities(&w.z, theta)?;
    let mut active = Vec::new();
    for i in 0..dims.nh {
        let on = w.mu[i] > ACTIVE_THRESHOLD;
        let tight = h[i].abs() < ACTIVE_THRESHOLD;
        match (on, tight) {
            (true, true) => active.push(i),
            (false, false) => {}
            _ => {
                return Err(Error::ActiveSetMismatch {
                    index: i,
                    mu: w.mu[i],
                    h: h[i],
                })
            }
        }
    }
    let qp = linearize_at(ocp, w, theta, HessianMode::exact())?.to_dense();
    let pj = ocp.param_jacobians(&w.z, &w.lam, &w.mu, theta)?;
    let (nz, ng, na) = (dims.nz, dims.ng, active.len());
    let n = nz + ng + na;
    let mut k = DMatrix::zeros(n, n);
    k.view_mut((0, 0), (nz, nz)).copy_from(&qp.hess);
    k.view_mut((0, nz), (nz, ng)).copy_from(&qp.eq_jac.transpose());
    k.view_mut((nz, 0), (ng, nz)).copy_from(&qp.eq_jac);
    let mut rhs = DMatrix::zeros(n, dims.ntheta);
    rhs.rows_mut(0, nz).copy_from(&(-&pj.stat));
    rhs.rows_mut(nz, ng).copy_from(&(-&pj.eq));
    for (r, &i) in active.iter().enumerate() {
        let row = qp.ineq_jac.row(i);
        k.view_mut((nz + ng + r, 0), (1, nz)).copy_from(&row);
        k.view_mut((0, nz + ng + r), (nz, 1)).copy_from(&row.transpose());
        rhs.row_mut(nz + ng + r).copy_from(&(-pj.ineq.row(i)));
    }
    let lu = k.clone().full_piv_lu();
    let sol = lu.solve(&rhs).ok_or(Error::Licq)?;
    let scale = k.amax().max(1.0);
    let check = &k * &sol - &rhs;
    if sol.iter().any(|v| !v.is_finite()) || check.amax() > 1e-6 * scale * (1.0 + sol.amax()) {
        return Err(Error::Licq);
    }
    Ok(ActiveSetSensitivities {
        active,
        dz: sol.rows(0, nz).into_owned(),
        dlam: sol.rows(nz, ng).into_owned(),
        dmu_active: sol.rows(nz + ng, na).into_owned(),
    })
}

/// Iterative refinement rounds applied to every sensitivity solve.
pub const REFINEMENT_STEPS: usize = 2;

/// Relative step of the central differences.
pub const FD_REL_STEP: f64 = 1e-5;
/// Tolerance of the re-solves.
pub const FD_TOL: f64 = 1e-10;

/// Central differences `(w(θ + h e_j) − w(θ − h e_j)) / 2h` for each `j` in
/// `param_indices`, with `h = 1e-5·max(1, |θ_j|)`. Re-solves use tolerance
/// `1e-10` and start from `init`.
pub fn finite_difference_oracle<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    theta: &ParamVector,
    settings: &SqpSettings,
    init: Option<&Iterate>,
    param_indices: &[usize],
) -> Result<DMatrix<f64>> {
    finite_difference_oracle_with_step(ocp, theta, settings, init, param_indices, FD_REL_STEP)
}

pub fn finite_difference_oracle_with_step<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    theta: &ParamVector,
    settings: &SqpSettings,
    init: Option<&Iterate>,
    param_indices: &[usize],
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let dims = ocp.nlp_dims();
    check_len("theta", dims.ntheta, theta.len())?;
    let tight = settings.with_tol(settings.tol.min(FD_TOL));
    let mut out = DMatrix::zeros(dims.nw(), param_indices.len());
    for (k, &j) in param_indices.iter().enumerate() {
        let h = rel_step * theta.as_slice()[j].abs().max(1.0);
        let mut sides = Vec::with_capacity(2);
        for sign in [1.0, -1.0] {
            let r = solve_nlp(ocp, &theta.perturbed(j, sign * h), init, &tight)?;
            if !r.converged() {
                return Err(Error::NotConverged(format!(
                    "finite-difference re-solve for parameter {j} ended with {}",
                    r.status.as_str()
                )));
            }
            sides.push(r.w.to_flat());
        }
        out.column_mut(k)
            .copy_from(&((&sides[0] - &sides[1]) / (2.0 * h)));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum SensitivityRequest {
    Forward(Vec<usize>),
    Adjoint(AdjointSeed),
}

#[derive(Debug, Clone)]
pub enum SensitivityOutput {
    Forward(ForwardSensitivities),
    Adjoint(AdjointResult),
}

/// Nominal solve with any Hessian mode, then sensitivities from an
/// exact-Hessian system rebuilt at the transferred iterate.
pub fn two_solver_solve_and_sensitivity<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    theta: &ParamVector,
    init: Option<&Iterate>,
    nominal_settings: &SqpSettings,
    request: &SensitivityRequest,
) -> Result<(SolveResult, SensitivityOutput)> {
    let result = solve_nlp(ocp, theta, init, nominal_settings)?;
    if !result.converged() {
        return Err(Error::NotConverged(format!(
            "nominal solve ended with {}",
            result.status.as_str()
        )));
    }
    let ws = SensitivityWorkspace::setup_and_factorize(ocp, &result, theta, nominal_settings.tau_min())?;
    let out = match request {
        SensitivityRequest::Forward(idx) => SensitivityOutput::Forward(ws.forward(idx)?),
        SensitivityRequest::Adjoint(seed) => SensitivityOutput::Adjoint(ws.adjoint(seed)?),
    };
    Ok((result, out))
}
