//! Primal-dual interior-point method for the stage-structured QP
//!
//! ```text
//! min  qᵀΔz + ½ ΔzᵀQΔz   s.t.  g + GΔz = 0,  h + HΔz + s = 0,  s ≥ 0
//! ```
//!
//! driving the complementarity products `μ_i s_i` down to a floor `τ_min`
//! rather than to zero.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kkt::KktSystem;
use crate::nlp::{Iterate, KktResidual};
use crate::ocp::StageQpData;

/// Barrier targets stay at least this fraction of `tol` above `τ_min`.
pub const TAU_FLOOR_FRACTION: f64 = 1e-1;

/// How the next barrier value is chosen from the current duality measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CenteringRule {
    /// `τ = max(τ_min, σ·μᵀs/n_h)`.
    Fixed { sigma: f64 },
}

impl Default for CenteringRule {
    fn default() -> Self {
        CenteringRule::Fixed { sigma: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    pub tau_min: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub ftb_gamma: f64,
    pub tau0: f64,
    pub reduction: CenteringRule,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            tau_min: 0.0,
            tol: 1e-10,
            max_iter: 200,
            ftb_gamma: 0.995,
            tau0: 1.0,
            reduction: CenteringRule::default(),
        }
    }
}

impl IpmSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau_min >= 0.0
            && self.tau_min < self.tau0
            && self.tol > 0.0
            && self.max_iter > 0
            && self.ftb_gamma > 0.0
            && self.ftb_gamma < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid interior-point settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    MaxIter,
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct IpmStats {
    pub iterations: usize,
    pub final_tau: f64,
    /// Residual measured with `τ = τ_min`.
    pub final_residual: KktResidual,
    pub status: IpmStatus,
    /// Barrier value used in each Newton step.
    pub tau_history: Vec<f64>,
    /// Set when the Riccati recursion broke down.
    pub breakdown: Option<Error>,
}

/// Largest `α ≤ 1` keeping `s + α ds` and `μ + α dμ` strictly positive,
/// damped by `γ`: `α = min(1, γ·α_max)`.
pub fn fraction_to_boundary(
    s: &DVector<f64>,
    mu: &DVector<f64>,
    ds: &DVector<f64>,
    dmu: &DVector<f64>,
    gamma: f64,
) -> f64 {
    let mut alpha_max = f64::INFINITY;
    for (v, dv) in s.iter().zip(ds.iter()).chain(mu.iter().zip(dmu.iter())) {
        if *dv < 0.0 {
            alpha_max = alpha_max.min(-v / dv);
        }
    }
    (gamma * alpha_max).min(1.0)
}

pub fn barrier_schedule(duality_measure: f64, tau_min: f64, rule: CenteringRule) -> f64 {
    match rule {
        CenteringRule::Fixed { sigma } => tau_min.max(sigma * duality_measure),
    }
}

fn duality_measure(w: &Iterate) -> f64 {
    if w.mu.is_empty() {
        0.0
    } else {
        w.mu.dot(&w.s) / w.mu.len() as f64
    }
}

/// Residual `(q̂, ĝ, ĥ, m̂)` of the smoothed QP optimality conditions at `w`,
/// whose `z` block holds `Δz`.
pub fn qp_residual(qp: &StageQpData, w: &Iterate, tau: f64) -> Result<KktResidual> {
    w.dims_match(qp.nlp_dims())?;
    let stat = qp.stationarity(&w.z, &w.lam, &w.mu);
    let (eq, h) = qp.constraint_values(&w.z);
    let comp = w.mu.component_mul(&w.s).add_scalar(-tau);
    KktResidual::new(stat, eq, h + &w.s, comp)
}

/// Cold start: `Δz = 0`, `λ = 0`, `s_i = max(1, 1 − h_i)`, `μ_i = τ0/s_i`.
pub fn cold_start(qp: &StageQpData, tau0: f64) -> Iterate {
    let mut w = Iterate::zeros(qp.nlp_dims());
    let (_, _, h) = qp.constant_terms();
    w.s = h.map(|hi| (1.0 - hi).max(1.0));
    w.mu = w.s.map(|si| tau0 / si);
    w
}

/// Solves the QP to the smoothed tolerance. `warm` (if any) provides
/// `(Δz, λ, μ, s)` with `μ, s > 0`.
pub fn solve_qp(
    qp: &StageQpData,
    settings: &IpmSettings,
    warm: Option<&Iterate>,
) -> Result<(Iterate, IpmStats)> {
    settings.validate()?;
    let mut w = match warm {
        Some(w0) => {
            w0.dims_match(qp.nlp_dims())?;
            if !w0.is_strictly_interior() || !w0.is_finite() {
                return Err(Error::Domain("warm start must have mu, s > 0".into()));
            }
            w0.clone()
        }
        None => cold_start(qp, settings.tau0),
    };
    let mut tau = match warm {
        Some(_) => barrier_schedule(duality_measure(&w), settings.tau_min, settings.reduction)
            .min(settings.tau0),
        None => settings.tau0,
    };
    // Targets below this gain nothing at the requested tolerance and only
    // inflate the barrier weights of active constraints.
    let tau_floor = settings.tau_min + TAU_FLOOR_FRACTION * settings.tol;
    let mut tau_history = Vec::new();
    let mut iterations = 0;
    loop {
        let res = qp_residual(qp, &w, settings.tau_min)?;
        let status = if res.inf_norm <= settings.tol {
            Some(IpmStatus::Converged)
        } else if iterations >= settings.max_iter {
            Some(IpmStatus::MaxIter)
        } else {
            None
        };
        if let Some(status) = status {
            let final_tau = tau_history.last().copied().unwrap_or(tau);
            return Ok((
                w,
                IpmStats {
                    iterations,
                    final_tau,
                    final_residual: res,
                    status,
                    tau_history,
                    breakdown: None,
                },
            ));
        }
        if iterations > 0 {
            tau = tau.min(barrier_schedule(
                duality_measure(&w),
                settings.tau_min,
                settings.reduction,
            ));
        }
        tau = tau.max(tau_floor);
        let rhs = qp_residual(qp, &w, tau)?;
        let sys = match KktSystem::new(qp.clone(), &w.mu, &w.s) {
            Ok(sys) => sys,
            // Overflowing barrier weights are a numerical breakdown as well.
            Err(e @ (Error::Breakdown { .. } | Error::Domain(_))) => {
                return Ok((
                    w,
                    IpmStats {
                        iterations,
                        final_tau: tau,
                        final_residual: res,
                        status: IpmStatus::Breakdown,
                        tau_history,
                        breakdown: Some(e),
                    },
                ))
            }
            Err(e) => return Err(e),
        };
        let step = sys.solve(&rhs.to_flat())?;
        let alpha = fraction_to_boundary(&w.s, &w.mu, &step.ds, &step.dmu, settings.ftb_gamma);
        w.z.axpy(alpha, &step.dz, 1.0);
        w.lam.axpy(alpha, &step.dlam, 1.0);
        w.mu.axpy(alpha, &step.dmu, 1.0);
        w.s.axpy(alpha, &step.ds, 1.0);
        tau_history.push(tau);
        iterations += 1;
        if !w.is_finite() {
            return Err(Error::NotConverged(format!(
                "non-finite interior-point iterate after {iterations} iterations"
            )));
        }
    }
}
