//! Independent solve + sensitivity runs over many instances on a thread pool.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nlp::{Iterate, ParamVector};
use crate::ocp::{OcpDefinition, OcpModel};
use crate::sensitivity::{
    AdjointResult, AdjointSeed, ForwardSensitivities, SensitivityWorkspace,
};
use crate::sqp::{solve_nlp, SolveResult, SqpSettings};

#[derive(Debug, Clone)]
pub struct BatchInstance {
    pub theta: ParamVector,
    /// Replaces the definition's initial state.
    pub x0: Option<Vec<f64>>,
    pub init: Option<Iterate>,
}

impl BatchInstance {
    pub fn new(theta: ParamVector) -> Self {
        BatchInstance {
            theta,
            x0: None,
            init: None,
        }
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }
}

#[derive(Debug, Clone)]
pub enum BatchSensitivity {
    None,
    Forward(Vec<usize>),
    /// One seed per instance.
    Adjoint(Vec<AdjointSeed>),
}

#[derive(Debug, Clone)]
pub struct BatchRequest<M> {
    pub ocp: OcpDefinition<M>,
    pub instances: Vec<BatchInstance>,
    pub settings: SqpSettings,
    pub sensitivity: BatchSensitivity,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub enum InstanceSensitivity {
    Forward(ForwardSensitivities),
    Adjoint(AdjointResult),
}

#[derive(Debug, Clone)]
pub struct InstanceResult {
    /// `Err` when the instance could not be set up or solved at all.
    pub solve: Result<SolveResult>,
    pub sensitivity: Option<Result<InstanceSensitivity>>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub results: Vec<InstanceResult>,
    pub converged: usize,
    pub total_sqp_iterations: usize,
    pub total_ipm_iterations: usize,
    pub wall_time: Duration,
}

fn run_instance<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    inst: &BatchInstance,
    settings: &SqpSettings,
    sens: Option<&BatchSensitivityRef>,
) -> InstanceResult {
    let start = Instant::now();
    let local;
    let ocp = match &inst.x0 {
        Some(x0) => match ocp.with_initial_state(x0) {
            Ok(o) => {
                local = o;
                &local
            }
            Err(e) => {
                return InstanceResult {
                    solve: Err(e),
                    sensitivity: None,
                    wall_time: start.elapsed(),
                }
            }
        },
        None => ocp,
    };
    let solve = if inst.theta.is_finite() {
        solve_nlp(ocp, &inst.theta, inst.init.as_ref(), settings)
    } else {
        Err(Error::Domain("non-finite parameter vector".into()))
    };
    let sensitivity = match (&solve, sens) {
        (Ok(res), Some(req)) => Some(
            SensitivityWorkspace::setup_and_factorize(ocp, res, &inst.theta, settings.tau_min())
                .and_then(|ws| match req {
                    BatchSensitivityRef::Forward(idx) => ws.forward(idx).map(InstanceSensitivity::Forward),
                    BatchSensitivityRef::Adjoint(seed) => ws.adjoint(seed).map(InstanceSensitivity::Adjoint),
                }),
        ),
        _ => None,
    };
    InstanceResult {
        solve,
        sensitivity,
        wall_time: start.elapsed(),
    }
}

enum BatchSensitivityRef<'a> {
    Forward(&'a [usize]),
    Adjoint(&'a AdjointSeed),
}

/// Runs every instance; results keep the request order and do not depend on
/// the number of workers.
pub fn batch_run<M: OcpModel>(req: &BatchRequest<M>) -> Result<BatchResult> {
    if req.workers == 0 {
        return Err(Error::Domain("at least one worker is required".into()));
    }
    if let BatchSensitivity::Adjoint(seeds) = &req.sensitivity {
        crate::error::check_len("adjoint seeds", req.instances.len(), seeds.len())?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.workers)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let results: Vec<InstanceResult> = pool.install(|| {
        req.instances
            .par_iter()
            .enumerate()
            .map(|(i, inst)| {
                let sens = match &req.sensitivity {
                    BatchSensitivity::None => None,
                    BatchSensitivity::Forward(idx) => Some(BatchSensitivityRef::Forward(idx)),
                    BatchSensitivity::Adjoint(seeds) => Some(BatchSensitivityRef::Adjoint(&seeds[i])),
                };
                run_instance(&req.ocp, inst, &req.settings, sens.as_ref())
            })
            .collect()
    });
    let wall_time = start.elapsed();
    let mut converged = 0;
    let mut total_sqp_iterations = 0;
    let mut total_ipm_iterations = 0;
    for r in results.iter().filter_map(|r| r.solve.as_ref().ok()) {
        converged += r.converged() as usize;
        total_sqp_iterations += r.sqp_iterations;
        total_ipm_iterations += r.total_ipm_iterations;
    }
    Ok(BatchResult {
        results,
        converged,
        total_sqp_iterations,
        total_ipm_iterations,
        wall_time,
    })
}
