use diffocp::ocp::{rk4_step, HessianMode, OcpModel};
use diffocp::problems::pendulum::cart_pole_rhs;
use diffocp::problems::random::RandomOcp;
use diffocp::problems::{generate_lqr_bench, Jump, LqrBench, ManyParam, Pendulum, Tutorial};
use diffocp::sqp::{solve_nlp, SqpSettings};
use diffocp::ParamVector;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

/// Central-difference Jacobian of `f` at `x`.
fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] += H;
        xm[j] -= H;
        let (fp, fm) = (f(&xp), f(&xm));
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * H);
        }
    }
    jac
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}");
    let e = (a - b).amax();
    assert!(e <= 1e-5 * (1.0 + b.amax()), "{what}: error {e:e}");
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Checks every analytic or dual-number derivative of one stage against
/// central differences of the plain `f64` model functions.
fn check_stage<M: OcpModel>(model: &M, stage: usize, x: &[f64], u: &[f64], p: &[f64], rng: &mut ChaCha8Rng) {
    let d = model.dims();
    let terminal = stage == d.horizon;
    let nxu = x.len() + u.len();
    let split = |v: &[f64]| (v[..x.len()].to_vec(), v[x.len()..].to_vec());
    let xu: Vec<f64> = x.iter().chain(u).copied().collect();
    let lam = uniform(rng, if terminal { 0 } else { d.nx }, -1.0, 1.0);
    let mu = uniform(rng, d.stage_nh(stage), 0.0, 1.0);

    let cost = |v: &[f64], p: &[f64]| {
        let (x, u) = split(v);
        if terminal {
            model.terminal_cost(&x, p)
        } else {
            model.stage_cost(stage, &x, &u, p)
        }
    };
    let dynamics = |v: &[f64], p: &[f64]| {
        let (x, u) = split(v);
        if terminal {
            Vec::new()
        } else {
            model.dynamics(stage, &x, &u, p)
        }
    };
    let cons = |v: &[f64], p: &[f64]| {
        let (x, u) = split(v);
        if terminal {
            model.terminal_constraints(&x, p)
        } else {
            model.path_constraints(stage, &x, &u, p)
        }
    };
    let first_order = |v: &[f64], p: &[f64]| {
        let (x, u) = split(v);
        if terminal {
            model.terminal_first_order(&x, p).unwrap()
        } else {
            model.stage_first_order(stage, &x, &u, p).unwrap()
        }
    };
    let lagrangian_grad = |v: &[f64], p: &[f64]| -> Vec<f64> {
        let fo = first_order(v, p);
        let g = fo.cost_grad
            + fo.dyn_jac.tr_mul(&DVector::from_column_slice(&lam))
            + fo.cons_jac.tr_mul(&DVector::from_column_slice(&mu));
        g.iter().copied().collect()
    };

    let fo = first_order(&xu, p);
    close(
        &DMatrix::from_row_slice(1, nxu, fo.cost_grad.as_slice()),
        &fd_jacobian(|v| vec![cost(v, p)], &xu),
        "cost gradient",
    );
    close(&fo.dyn_jac, &fd_jacobian(|v| dynamics(v, p), &xu), "dynamics jacobian");
    close(&fo.cons_jac, &fd_jacobian(|v| cons(v, p), &xu), "constraint jacobian");

    let hess = if terminal {
        model.terminal_lagrangian_hessian(x, p, &mu).unwrap()
    } else {
        model.stage_lagrangian_hessian(stage, x, u, p, &lam, &mu).unwrap()
    };
    close(&hess, &fd_jacobian(|v| lagrangian_grad(v, p), &xu), "lagrangian hessian");

    let pj = if terminal {
        model.terminal_param_jacobians(x, p, &mu).unwrap()
    } else {
        model.stage_param_jacobians(stage, x, u, p, &lam, &mu).unwrap()
    };
    close(&pj.lagrangian_grad, &fd_jacobian(|q| lagrangian_grad(&xu, q), p), "parameter jacobian of the gradient");
    close(&pj.dynamics, &fd_jacobian(|q| dynamics(&xu, q), p), "parameter jacobian of the dynamics");
    close(&pj.constraints, &fd_jacobian(|q| cons(&xu, q), p), "parameter jacobian of the constraints");
}

fn check_model<M: OcpModel>(model: &M, p: &[f64], stages: &[usize], seed: u64) {
    let d = model.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &n in stages {
        let x = uniform(&mut rng, d.nx, -0.5, 0.5);
        let u = uniform(&mut rng, if n == d.horizon { 0 } else { d.nu }, -0.5, 0.5);
        check_stage(model, n, &x, &u, p, &mut rng);
    }
}

#[test]
fn model_derivatives_match_finite_differences() {
    check_model(&Tutorial, &[0.7], &[0, 1], 1);
    check_model(&Jump, &[0.3], &[0, 1], 2);
    check_model(&Pendulum::default(), &[1.1], &[0, 17, 50], 3);
    let mp = ManyParam::default();
    check_model(&mp, &mp.nominal_theta(), &[0, 9, 40], 4);
    let data = generate_lqr_bench(3, 2, 5, 1.0, 1, 1);
    check_model(data.ocp.model(), data.theta.as_slice(), &[0, 4, 5], 5);
    let (ocp, th) = RandomOcp::generate(3, 2, 2, 3, 6);
    check_model(ocp.model(), th.as_slice(), &[0, 2, 3], 6);
}

#[test]
fn benchmark_dimensions() {
    assert_eq!(LqrBench::new(8, 4, 20, 1.0).ntheta(), 248);
    let data = generate_lqr_bench(8, 4, 20, 1.0, 128, 0);
    assert_eq!(data.x0.len(), 128);
    assert_eq!(data.theta.len(), 248);
    let again = generate_lqr_bench(8, 4, 20, 1.0, 4, 0);
    assert_eq!(&data.x0[..4], &again.x0[..]);
    assert_eq!(data.theta, again.theta);
}

#[test]
fn many_param_has_over_a_hundred_parameters() {
    let ocp = ManyParam::ocp();
    assert_eq!(ocp.dims().horizon, 40);
    assert!(ocp.ntheta() >= 100);
    assert_eq!(ocp.model().nominal_theta().len(), ocp.ntheta());
}

#[test]
fn rk4_matches_a_fine_integration_of_the_cart_pole() {
    let p = Pendulum::default();
    let x = Pendulum::initial_state();
    let u = [10.0];
    let coarse = rk4_step(|x, u, p| cart_pole_rhs(x, u, p[0]), &x, &u, &[1.0], p.dt());
    let mut fine = x.clone();
    let sub = 1000;
    for _ in 0..sub {
        fine = rk4_step(|x, u, p| cart_pole_rhs(x, u, p[0]), &fine, &u, &[1.0], p.dt() / sub as f64);
    }
    let e = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(e < 1e-5, "{e:e}");
}

#[test]
fn jump_branch_ends_inside_the_expected_window() {
    let end = Jump::branch_end();
    assert!((0.50..=0.58).contains(&end));
    assert!((end - 2.0 / (3.0 * 6f64.sqrt()) * 2.0).abs() < 1e-12);
    let ocp = Jump::ocp();
    let st = SqpSettings::new(1e-10, 0.0, HessianMode::exact());
    let mut init = ocp.default_init(&ParamVector::scalar(0.0));
    init.z[0] = -1.0 + 0.3;
    let below = solve_nlp(&ocp, &ParamVector::scalar(end - 0.05), Some(&init), &st).unwrap();
    assert!(below.converged() && below.w.z[0] < 0.0);
    let above = solve_nlp(&ocp, &ParamVector::scalar(end + 0.05), Some(&init), &st).unwrap();
    assert!(!above.converged() || above.w.z[0] > 0.0);
}
