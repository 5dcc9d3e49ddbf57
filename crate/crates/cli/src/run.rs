//! Example runners. Each returns a table whose numeric content is fully
//! determined by the spec unless timing columns were requested.

use std::time::Instant;

use diffocp::batch::{batch_run, BatchInstance, BatchRequest, BatchSensitivity, InstanceSensitivity};
use diffocp::nlp::strict_complementarity_margin;
use diffocp::ocp::{HessianMode, OcpDefinition, OcpModel};
use diffocp::problems::{generate_lqr_bench, Jump, ManyParam, Pendulum, Tutorial};
use diffocp::sensitivity::{finite_difference_oracle, AdjointSeed, SensitivityWorkspace};
use diffocp::sqp::{solve_nlp, solve_nlp_with_warmup, SolveResult, SqpSettings};
use diffocp::{Iterate, Nlp, ParamVector};

use crate::config::{ExampleName, ExampleSpec, HessianChoice};
use crate::table::{Cell, Table};
use crate::CliError;

const NAN: f64 = f64::NAN;

pub fn run_example(spec: &ExampleSpec) -> Result<Table, CliError> {
    spec.validate()?;
    match spec.name {
        ExampleName::Tutorial => tutorial(spec),
        ExampleName::Jump => jump(spec),
        ExampleName::Pendulum => pendulum(spec),
        ExampleName::LqrBench => lqr_bench(spec),
        ExampleName::ManyParam => many_param(spec),
    }
}

fn hessian_mode(choice: HessianChoice) -> HessianMode {
    match choice {
        HessianChoice::Exact => HessianMode::exact(),
        HessianChoice::GaussNewton => HessianMode::gauss_newton(),
    }
}

fn status_of(r: &Result<SolveResult, diffocp::Error>) -> String {
    match r {
        Ok(res) => res.status.as_str().to_string(),
        Err(_) => "Error".to_string(),
    }
}

fn header(base: &[&str], extra: &[(&str, bool)]) -> Vec<String> {
    base.iter()
        .map(|s| s.to_string())
        .chain(extra.iter().filter(|(_, on)| *on).map(|(s, _)| s.to_string()))
        .collect()
}

/// Forward sensitivity of variable `idx` of the flat iterate.
fn forward_entry<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    res: &SolveResult,
    theta: &ParamVector,
    tau_min: f64,
    mode: HessianMode,
    idx: usize,
) -> f64 {
    let ws = if mode.is_unregularized_exact() {
        SensitivityWorkspace::setup_and_factorize(ocp, res, theta, tau_min)
    } else {
        SensitivityWorkspace::setup_with_inexact_hessian(ocp, res, theta, tau_min, mode)
    };
    ws.and_then(|ws| ws.forward(&[0]))
        .map(|f| f.columns[(idx, 0)])
        .unwrap_or(NAN)
}

fn fd_entry<M: OcpModel>(
    ocp: &OcpDefinition<M>,
    theta: &ParamVector,
    settings: &SqpSettings,
    init: &Iterate,
    idx: usize,
) -> f64 {
    finite_difference_oracle(ocp, theta, settings, Some(init), &[0])
        .map(|m| m[(idx, 0)])
        .unwrap_or(NAN)
}

/// `min (x − θ²)²` on `[−1, 1]` over the θ grid, once per `τ_min`.
pub fn tutorial(spec: &ExampleSpec) -> Result<Table, CliError> {
    let ocp = Tutorial::ocp();
    let mut table = Table::new(&header(
        &["theta", "tau_min", "z", "dz_dtheta"],
        &[("fd_dz_dtheta", spec.fd)],
    ));
    table.header.extend(
        ["mu_lower", "mu_upper", "exact_z", "exact_dz_dtheta", "status", "sqp_iterations"]
            .map(String::from),
    );
    if spec.timings {
        table.header.push("time_s".into());
    }
    let mode = hessian_mode(spec.hessian());
    for theta in spec.grid().values()? {
        for &tau in &spec.tau_min() {
            let start = Instant::now();
            let th = ParamVector::scalar(theta);
            let settings = SqpSettings::new(spec.tol(), tau, mode);
            let res = solve_nlp(&ocp, &th, None, &settings);
            let mut row: Vec<Cell> = vec![theta.into(), tau.into()];
            match &res {
                Ok(r) if r.converged() => {
                    row.push(r.w.z[0].into());
                    row.push(forward_entry(&ocp, r, &th, tau, HessianMode::exact(), 0).into());
                    if spec.fd {
                        row.push(fd_entry(&ocp, &th, &settings, &r.w, 0).into());
                    }
                    row.push(r.w.mu[0].into());
                    row.push(r.w.mu[1].into());
                }
                _ => {
                    row.extend([NAN.into(), NAN.into()]);
                    if spec.fd {
                        row.push(NAN.into());
                    }
                    row.extend([NAN.into(), NAN.into()]);
                }
            }
            let exact_dz = if (theta.abs() - 1.0).abs() < 1e-12 {
                NAN
            } else {
                Tutorial::exact_derivative(theta)
            };
            row.push(Tutorial::exact_solution(theta).into());
            row.push(exact_dz.into());
            row.push(status_of(&res).into());
            row.push(res.as_ref().map(|r| r.sqp_iterations).unwrap_or(0).into());
            if spec.timings {
                row.push(start.elapsed().as_secs_f64().into());
            }
            table.push(row);
        }
    }
    Ok(table)
}

/// Full-step exact-Hessian SQP from `init` after a Levenberg-Marquardt
/// regularized warm-up, which keeps the first steps short on the nonconvex
/// quartic.
pub fn jump_solve(
    ocp: &OcpDefinition<Jump>,
    theta: &ParamVector,
    init: &Iterate,
    tol: f64,
    tau_min: f64,
    mode: HessianMode,
) -> Result<SolveResult, diffocp::Error> {
    let warmup = SqpSettings::new(1e-4, tau_min, mode.with_levenberg_marquardt(4.0));
    let settings = SqpSettings::new(tol, tau_min, mode);
    solve_nlp_with_warmup(ocp, theta, Some(init), &warmup, &settings)
}

/// Two local minimizers; each grid point is solved from every initial guess.
pub fn jump(spec: &ExampleSpec) -> Result<Table, CliError> {
    let ocp = Jump::ocp();
    let mut table = Table::new(&header(
        &["theta", "tau_min", "x_init", "z", "dz_dtheta"],
        &[("fd_dz_dtheta", spec.fd)],
    ));
    table
        .header
        .extend(["mu_lower", "mu_upper", "objective", "status", "sqp_iterations"].map(String::from));
    if spec.timings {
        table.header.push("time_s".into());
    }
    let mode = hessian_mode(spec.hessian());
    for &x_init in &spec.inits() {
        for theta in spec.grid().values()? {
            for &tau in &spec.tau_min() {
                let start = Instant::now();
                let th = ParamVector::scalar(theta);
                let mut init = ocp.default_init(&th);
                init.z[0] = x_init;
                let res = jump_solve(&ocp, &th, &init, spec.tol(), tau, mode);
                let mut row: Vec<Cell> = vec![theta.into(), tau.into(), x_init.into()];
                match &res {
                    Ok(r) if r.converged() => {
                        row.push(r.w.z[0].into());
                        row.push(forward_entry(&ocp, r, &th, tau, HessianMode::exact(), 0).into());
                        if spec.fd {
                            let st = SqpSettings::new(spec.tol(), tau, HessianMode::exact());
                            row.push(fd_entry(&ocp, &th, &st, &r.w, 0).into());
                        }
                        row.push(r.w.mu[0].into());
                        row.push(r.w.mu[1].into());
                        row.push(ocp.objective(&r.w.z, &th).unwrap_or(NAN).into());
                    }
                    _ => {
                        let n = if spec.fd { 6 } else { 5 };
                        row.extend((0..n).map(|_| Cell::Num(NAN)));
                    }
                }
                row.push(status_of(&res).into());
                row.push(res.as_ref().map(|r| r.sqp_iterations).unwrap_or(0).into());
                if spec.timings {
                    row.push(start.elapsed().as_secs_f64().into());
                }
                table.push(row);
            }
        }
    }
    Ok(table)
}

/// Cart-pole solve: a Gauss-Newton warm-up to `1e-4` followed by exact
/// iterations, or Gauss-Newton throughout when requested.
pub fn pendulum_solve(
    ocp: &OcpDefinition<Pendulum>,
    theta: &ParamVector,
    init: Option<&Iterate>,
    tol: f64,
    tau_min: f64,
    choice: HessianChoice,
) -> Result<SolveResult, diffocp::Error> {
    let gn = SqpSettings::new(1e-4, tau_min, HessianMode::gauss_newton());
    match choice {
        HessianChoice::Exact => {
            solve_nlp_with_warmup(ocp, theta, init, &gn, &SqpSettings::new(tol, tau_min, HessianMode::exact()))
        }
        HessianChoice::GaussNewton => solve_nlp(ocp, theta, init, &gn.with_tol(tol)),
    }
}

/// Order in which a sorted grid is swept by continuation: the point nearest
/// `anchor` first, then outward in both directions. Each entry carries the
/// index of the neighbour whose solution serves as its warm start.
pub fn continuation_order(grid: &[f64], anchor: f64) -> Vec<(usize, Option<usize>)> {
    let Some(a) = (0..grid.len()).min_by(|&i, &j| (grid[i] - anchor).abs().total_cmp(&(grid[j] - anchor).abs()))
    else {
        return Vec::new();
    };
    let mut order = vec![(a, None)];
    order.extend((a + 1..grid.len()).map(|i| (i, Some(i - 1))));
    order.extend((0..a).rev().map(|i| (i, Some(i + 1))));
    order
}

/// Pendulum solves over a grid for one `τ_min`, in grid order. A cold start
/// from the constant initial state diverges for light carts under full
/// steps, so the sweep starts at the nominal mass and warm-starts each point
/// from its converged neighbour, retrying cold if that fails.
pub fn pendulum_sweep(
    ocp: &OcpDefinition<Pendulum>,
    grid: &[f64],
    tol: f64,
    tau_min: f64,
    choice: HessianChoice,
) -> Vec<(Result<SolveResult, diffocp::Error>, f64)> {
    let mut out: Vec<Option<(Result<SolveResult, diffocp::Error>, f64)>> = grid.iter().map(|_| None).collect();
    for (i, from) in continuation_order(grid, 1.0) {
        let start = Instant::now();
        let th = ParamVector::scalar(grid[i]);
        let warm = from
            .and_then(|j| out[j].as_ref())
            .and_then(|(r, _)| r.as_ref().ok())
            .filter(|r| r.converged())
            .map(|r| r.w.clone());
        let mut res = pendulum_solve(ocp, &th, warm.as_ref(), tol, tau_min, choice);
        if warm.is_some() && !matches!(&res, Ok(r) if r.converged()) {
            res = pendulum_solve(ocp, &th, None, tol, tau_min, choice);
        }
        out[i] = Some((res, start.elapsed().as_secs_f64()));
    }
    out.into_iter().map(|r| r.expect("every grid point is visited")).collect()
}

/// Pendulum sweep with `u₀`, its exact and Gauss-Newton sensitivities and
/// the multipliers whose sign changes explain the kinks.
pub fn pendulum(spec: &ExampleSpec) -> Result<Table, CliError> {
    let ocp = Pendulum::ocp();
    let d = ocp.dims();
    let u0 = d.u_offset(0);
    let mut table = Table::new(&header(
        &["theta", "tau_min", "u0", "du0_dtheta"],
        &[("fd_du0_dtheta", spec.fd)],
    ));
    table.header.extend(
        [
            "gn_du0_dtheta",
            "mu_u0_lower",
            "mu_u0_upper",
            "mu_position_max",
            "active_constraints",
            "strict_comp_margin",
            "status",
            "sqp_iterations",
        ]
        .map(String::from),
    );
    if spec.timings {
        table.header.push("time_s".into());
    }
    let grid = spec.grid().values()?;
    let taus = spec.tau_min();
    let sweeps: Vec<_> = taus.iter().map(|&tau| pendulum_sweep(&ocp, &grid, spec.tol(), tau, spec.hessian())).collect();
    for (i, &theta) in grid.iter().enumerate() {
        for (k, &tau) in taus.iter().enumerate() {
            let (res, elapsed) = &sweeps[k][i];
            let th = ParamVector::scalar(theta);
            let mut row: Vec<Cell> = vec![theta.into(), tau.into()];
            match res {
                Ok(r) if r.converged() => {
                    row.push(r.w.z[u0].into());
                    row.push(forward_entry(&ocp, r, &th, tau, HessianMode::exact(), u0).into());
                    if spec.fd {
                        let st = SqpSettings::new(spec.tol(), tau, HessianMode::exact());
                        row.push(fd_entry(&ocp, &th, &st, &r.w, u0).into());
                    }
                    row.push(forward_entry(&ocp, r, &th, tau, HessianMode::gauss_newton(), u0).into());
                    let h0 = d.h_offset(0);
                    row.push(r.w.mu[h0].into());
                    row.push(r.w.mu[h0 + 1].into());
                    let mut pos_max: f64 = 0.0;
                    for n in 0..=d.horizon {
                        let off = d.h_offset(n);
                        let k = d.stage_nh(n);
                        for i in (k - 2)..k {
                            pos_max = pos_max.max(r.w.mu[off + i]);
                        }
                    }
                    row.push(pos_max.into());
                    let diag = strict_complementarity_margin(&r.w);
                    row.push(diag.active_count().into());
                    row.push(diag.strict_comp_margin.into());
                }
                _ => {
                    let n = if spec.fd { 9 } else { 8 };
                    row.extend((0..n).map(|_| Cell::Num(NAN)));
                }
            }
            row.push(status_of(res).into());
            row.push(res.as_ref().map(|r| r.sqp_iterations).unwrap_or(0).into());
            if spec.timings {
                row.push((*elapsed).into());
            }
            table.push(row);
        }
    }
    Ok(table)
}

/// Bounded LQR batch: one row per sampled initial state. Each instance also
/// carries the adjoint of its first control with respect to all problem
/// data, summarized by its largest entry.
pub fn lqr_bench(spec: &ExampleSpec) -> Result<Table, CliError> {
    let (nx, nu, horizon) = (spec.nx(), spec.nu(), spec.horizon());
    let tau = spec.tau_min()[0];
    let data = generate_lqr_bench(nx, nu, horizon, spec.u_max(), spec.n_batch(), spec.seed());
    let zero_controls = vec![vec![0.0; nu]; horizon];
    let mut instances = Vec::with_capacity(data.x0.len());
    for x0 in &data.x0 {
        let ocp = data.ocp.with_initial_state(x0)?;
        let init = ocp.rollout_init(&data.theta, &zero_controls)?;
        instances.push(BatchInstance {
            theta: data.theta.clone(),
            x0: Some(x0.clone()),
            init: Some(init),
        });
    }
    let seeds = vec![AdjointSeed::control(data.ocp.dims(), 0, 0); instances.len()];
    let req = BatchRequest {
        ocp: data.ocp.clone(),
        instances,
        settings: SqpSettings::new(spec.tol(), tau, hessian_mode(spec.hessian())),
        sensitivity: BatchSensitivity::Adjoint(seeds),
        workers: spec.workers(),
    };
    let out = batch_run(&req)?;

    let mut cols: Vec<String> = vec!["instance".into()];
    cols.extend((0..nx).map(|i| format!("x0_{i}")));
    cols.extend(
        ["status", "sqp_iterations", "ipm_iterations", "residual", "objective", "active_bounds"]
            .map(String::from),
    );
    cols.extend((0..nu).map(|i| format!("u0_{i}")));
    cols.push("du00_dtheta_max_abs".into());
    if spec.timings {
        cols.push("time_s".into());
    }
    let mut table = Table::new(&cols);
    for (i, (x0, r)) in data.x0.iter().zip(&out.results).enumerate() {
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(x0.iter().map(|v| Cell::Num(*v)));
        let status = status_of(&r.solve);
        match &r.solve {
            Ok(s) => {
                let ocp = data.ocp.with_initial_state(x0)?;
                row.push(status.into());
                row.push(s.sqp_iterations.into());
                row.push(s.total_ipm_iterations.into());
                row.push(s.residual.as_ref().map(|r| r.inf_norm).unwrap_or(NAN).into());
                row.push(ocp.objective(&s.w.z, &data.theta).unwrap_or(NAN).into());
                row.push(strict_complementarity_margin(&s.w).active_count().into());
                row.extend(ocp.u(&s.w.z, 0).iter().map(|v| Cell::Num(*v)));
            }
            Err(_) => {
                row.push(status.into());
                row.extend([0usize.into(), 0usize.into(), NAN.into(), NAN.into(), 0usize.into()]);
                row.extend((0..nu).map(|_| Cell::Num(NAN)));
            }
        }
        let adj = match &r.sensitivity {
            Some(Ok(InstanceSensitivity::Adjoint(a))) => a.s_adj.amax(),
            _ => NAN,
        };
        row.push(adj.into());
        if spec.timings {
            row.push(r.wall_time.as_secs_f64().into());
        }
        table.push(row);
    }
    Ok(table)
}

pub fn many_param_ocp(spec: &ExampleSpec) -> Result<OcpDefinition<ManyParam>, CliError> {
    let model = ManyParam {
        horizon: spec.horizon(),
        ..ManyParam::default()
    };
    Ok(OcpDefinition::new(model, ManyParam::initial_state())?)
}

pub fn many_param_solve(
    ocp: &OcpDefinition<ManyParam>,
    theta: &ParamVector,
    tol: f64,
    tau_min: f64,
) -> Result<SolveResult, diffocp::Error> {
    let gn = SqpSettings::new(1e-4, tau_min, HessianMode::gauss_newton());
    solve_nlp_with_warmup(ocp, theta, None, &gn, &SqpSettings::new(tol, tau_min, HessianMode::exact()))
}

/// Sensitivities of `u₀` to every parameter, by forward columns and by a
/// single adjoint.
pub fn many_param(spec: &ExampleSpec) -> Result<Table, CliError> {
    let ocp = many_param_ocp(spec)?;
    let theta = ParamVector::new(ocp.model().nominal_theta());
    let mut table = Table::new(&[
        "tau_min",
        "param_index",
        "theta",
        "du0_dtheta_forward",
        "du0_dtheta_adjoint",
        "status",
    ]);
    let u0 = ocp.dims().u_offset(0);
    for &tau in &spec.tau_min() {
        let res = many_param_solve(&ocp, &theta, spec.tol(), tau);
        let sens = res.as_ref().ok().filter(|r| r.converged()).and_then(|r| {
            let ws = SensitivityWorkspace::setup_and_factorize(&ocp, r, &theta, tau).ok()?;
            let fwd = ws.forward_all().ok()?;
            let adj = ws.adjoint(&AdjointSeed::control(ocp.dims(), 0, 0)).ok()?;
            Some((fwd.columns.row(u0).transpose(), adj.s_adj))
        });
        for j in 0..theta.len() {
            let (f, a) = sens.as_ref().map(|(f, a)| (f[j], a[j])).unwrap_or((NAN, NAN));
            table.push(vec![
                tau.into(),
                j.into(),
                theta.as_slice()[j].into(),
                f.into(),
                a.into(),
                status_of(&res).into(),
            ]);
        }
    }
    Ok(table)
}

/// Timing study on the many-parameter OCP: one full forward Jacobian
/// versus one adjoint, both on the same factorized system.
pub fn sens_compare(spec: &ExampleSpec) -> Result<Table, CliError> {
    spec.validate()?;
    let ocp = many_param_ocp(spec)?;
    let theta = ParamVector::new(ocp.model().nominal_theta());
    let tau = spec.tau_min()[0];
    let res = many_param_solve(&ocp, &theta, spec.tol(), tau)?;
    if !res.converged() {
        return Err(CliError::Solver(diffocp::Error::NotConverged(format!(
            "many_param solve ended with {}",
            res.status.as_str()
        ))));
    }
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &res, &theta, tau)?;
    let seed = AdjointSeed::control(ocp.dims(), 0, 0);
    let u0 = ocp.dims().u_offset(0);
    let mut table = Table::new(&["repetition", "ntheta", "forward_s", "adjoint_s", "ratio", "max_abs_diff"]);
    for rep in 0..spec.repetitions() {
        let t = Instant::now();
        let fwd = ws.forward_all()?;
        let t_fwd = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let adj = ws.adjoint(&seed)?;
        let t_adj = t.elapsed().as_secs_f64();
        let diff = (fwd.columns.row(u0).transpose() - &adj.s_adj).amax();
        table.push(vec![
            rep.into(),
            theta.len().into(),
            t_fwd.into(),
            t_adj.into(),
            (t_adj / t_fwd).into(),
            diff.into(),
        ]);
    }
    Ok(table)
}
