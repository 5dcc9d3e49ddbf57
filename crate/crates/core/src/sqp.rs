//! Full-step SQP on the smoothed KKT system of an OCP.
//!
//! Each iteration linearizes at the current iterate, solves the QP with the
//! interior-point method warm-started from the current duals, and takes the
//! whole step. Termination uses the residual of the NLP's smoothed KKT
//! system with `τ = τ_min`, so with `τ_min > 0` the result is the solution of
//! the barrier problem rather than of the original NLP.

use crate::error::{Error, Result};
use crate::ipm::{solve_qp, IpmSettings, IpmStatus};
use crate::nlp::{eval_kkt_residual, Iterate, KktResidual, Nlp, ParamVector};
use crate::ocp::{linearize_at, HessianMode, OcpDefinition, OcpModel};

/// Default inner tolerance as a share of the outer one.
const INNER_TOL_SHARE: f64 = 0.5;

/// Inner tolerance relative to the current outer residual.
const INNER_TOL_FACTOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub hessian: HessianMode,
    /// Inner solver settings; `ipm.tau_min` is the barrier floor of the
    /// whole solve.
    pub ipm: IpmSettings,
}

impl Default for SqpSettings {
    fn default() -> Self {
        SqpSettings::new(1e-8, 0.0, HessianMode::exact())
    }
}

impl SqpSettings {
    /// The inner tolerance is half of `tol`.
    pub fn new(tol: f64, tau_min: f64, hessian: HessianMode) -> Self {
        SqpSettings {
            tol,
            max_iter: 100,
            hessian,
            ipm: IpmSettings {
                tau_min,
                tol: INNER_TOL_SHARE * tol,
                ..IpmSettings::default()
            },
        }
    }

    pub fn tau_min(&self) -> f64 {
        self.ipm.tau_min
    }

    pub fn with_tau_min(mut self, tau_min: f64) -> Self {
        self.ipm.tau_min = tau_min;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self.ipm.tol = INNER_TOL_SHARE * tol;
        self
    }

    pub fn with_hessian(mut self, hessian: HessianMode) -> Self {
        self.hessian = hessian;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.ipm.validate()?;
        if self.tol > 0.0 && self.max_iter > 0 && self.ipm.tol <= self.tol {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid SQP settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqpStatus {
    Converged,
    MaxIter,
    Breakdown,
    EvalFail,
}

impl SqpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SqpStatus::Converged => "Converged",
            SqpStatus::MaxIter => "MaxIter",
            SqpStatus::Breakdown => "Breakdown",
            SqpStatus::EvalFail => "EvalFail",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub w: Iterate,
    pub status: SqpStatus,
    pub sqp_iterations: usize,
    pub total_ipm_iterations: usize,
    /// Smoothed residual at `w`; absent when it could not be evaluated.
    pub residual: Option<KktResidual>,
    /// Residual norm at every iterate, including the last.
    pub residual_history: Vec<f64>,
    /// Failure cause with the SQP iteration it occurred in.
    pub failure: Option<(usize, Error)>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SqpStatus::Converged
    }
}

/// Smoothed residual at `w` and whether its norm is within `tol`.
pub fn check_convergence<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    w: &Iterate,
    theta: &ParamVector,
    tau_min: f64,
    tol: f64,
) -> Result<(bool, KktResidual)> {
    let res = eval_kkt_residual(ocp, w, tau_min, theta)?;
    Ok((res.inf_norm <= tol, res))
}

pub fn solve_nlp<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    theta: &ParamVector,
    init: Option<&Iterate>,
    settings: &SqpSettings,
) -> Result<SolveResult> {
    settings.validate()?;
    let dims = ocp.nlp_dims();
    crate::error::check_len("theta", dims.ntheta, theta.len())?;
    let mut w = match init {
        Some(w0) => {
            w0.dims_match(dims)?;
            if !w0.is_strictly_interior() {
                return Err(Error::Domain("initial mu, s must be positive".into()));
            }
            w0.clone()
        }
        None => ocp.default_init(theta),
    };
    let tau_min = settings.tau_min();
    let mut total_ipm = 0;
    let mut history = Vec::new();
    let finish = |w: Iterate,
                  status: SqpStatus,
                  k: usize,
                  total_ipm: usize,
                  residual: Option<KktResidual>,
                  history: Vec<f64>,
                  failure: Option<(usize, Error)>| SolveResult {
        w,
        status,
        sqp_iterations: k,
        total_ipm_iterations: total_ipm,
        residual,
        residual_history: history,
        failure,
    };
    for k in 0..=settings.max_iter {
        let res = match eval_kkt_residual(ocp, &w, tau_min, theta) {
            Ok(r) => r,
            Err(e) => {
                return Ok(finish(w, SqpStatus::EvalFail, k, total_ipm, None, history, Some((k, e))))
            }
        };
        history.push(res.inf_norm);
        if res.inf_norm <= settings.tol {
            return Ok(finish(w, SqpStatus::Converged, k, total_ipm, Some(res), history, None));
        }
        if k == settings.max_iter {
            break;
        }
        let qp = match linearize_at(ocp, &w, theta, settings.hessian) {
            Ok(qp) => qp,
            Err(e) => {
                return Ok(finish(w, SqpStatus::EvalFail, k, total_ipm, Some(res), history, Some((k, e))))
            }
        };
        let warm = Iterate {
            z: nalgebra::DVector::zeros(dims.nz),
            lam: w.lam.clone(),
            mu: w.mu.clone(),
            s: w.s.clone(),
        };
        // Inexact inner solves far from the solution, tight ones near it.
        let inner = IpmSettings {
            tol: settings.ipm.tol.max(INNER_TOL_FACTOR * res.inf_norm),
            ..settings.ipm
        };
        let (sol, stats) = solve_qp(&qp, &inner, Some(&warm))?;
        total_ipm += stats.iterations;
        match stats.status {
            IpmStatus::Converged => {}
            IpmStatus::Breakdown => {
                let e = stats
                    .breakdown
                    .unwrap_or(Error::Breakdown { stage: 0, pivot: f64::NAN });
                return Ok(finish(w, SqpStatus::Breakdown, k, total_ipm, Some(res), history, Some((k, e))));
            }
            IpmStatus::MaxIter => {
                let e = Error::NotConverged(format!("QP solve hit the iteration limit in SQP iteration {k}"));
                return Ok(finish(w, SqpStatus::MaxIter, k, total_ipm, Some(res), history, Some((k, e))));
            }
        }
        w.z += &sol.z;
        w.lam = sol.lam;
        w.mu = sol.mu;
        // Slacks follow the new constraint values where those are feasible
        // and keep the QP slack otherwise.
        w.s = match ocp.inequalities(&w.z, theta) {
            Ok(h) => h.zip_map(&sol.s, |hi, si| if -hi > 0.0 { -hi } else { si }),
            Err(e) => {
                return Ok(finish(w, SqpStatus::EvalFail, k + 1, total_ipm, None, history, Some((k + 1, e))))
            }
        };
    }
    let res = eval_kkt_residual(ocp, &w, tau_min, theta).ok();
    let e = Error::NotConverged(format!("{} SQP iterations", settings.max_iter));
    Ok(finish(w, SqpStatus::MaxIter, settings.max_iter, total_ipm, res, history, Some((settings.max_iter, e))))
}

/// Runs `warmup` first and continues from its iterate with `settings`.
/// Typical use is a Gauss-Newton warm-up to a loose tolerance followed by
/// exact-Hessian iterations, which converge fast once close to a solution
/// but may break down far from it. The second run starts from the last
/// warm-up iterate even when the warm-up did not converge, as long as that
/// iterate is finite. Iteration counts and residual histories of both runs
/// are accumulated.
pub fn solve_nlp_with_warmup<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    theta: &ParamVector,
    init: Option<&Iterate>,
    warmup: &SqpSettings,
    settings: &SqpSettings,
) -> Result<SolveResult> {
    let first = solve_nlp(ocp, theta, init, warmup)?;
    if !(first.w.is_finite() && first.w.is_strictly_interior()) {
        return solve_nlp(ocp, theta, init, settings);
    }
    let mut second = solve_nlp(ocp, theta, Some(&first.w), settings)?;
    second.sqp_iterations += first.sqp_iterations;
    second.total_ipm_iterations += first.total_ipm_iterations;
    if let Some((k, _)) = second.failure.as_mut() {
        *k += first.sqp_iterations;
    }
    let mut history = first.residual_history;
    history.extend(second.residual_history.into_iter().skip(1));
    second.residual_history = history;
    Ok(second)
}
