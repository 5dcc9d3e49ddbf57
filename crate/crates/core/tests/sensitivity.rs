use diffocp::ocp::{HessianMode, OcpDefinition, OcpModel};
use diffocp::problems::random::RandomOcp;
use diffocp::problems::{generate_lqr_bench, Pendulum, Tutorial};
use diffocp::sensitivity::{
    active_set_sensitivity_oracle, finite_difference_oracle, two_solver_solve_and_sensitivity,
    AdjointSeed, SensitivityOutput, SensitivityRequest, SensitivityWorkspace,
};
use diffocp::sqp::{solve_nlp, solve_nlp_with_warmup, SolveResult, SqpSettings};
use diffocp::{Error, Nlp, ParamVector};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn exact(tol: f64, tau_min: f64) -> SqpSettings {
    SqpSettings::new(tol, tau_min, HessianMode::exact())
}

fn tutorial_dz(theta: f64, tau_min: f64) -> f64 {
    let ocp = Tutorial::ocp();
    let th = ParamVector::scalar(theta);
    let r = solve_nlp(&ocp, &th, None, &exact(1e-10, tau_min)).unwrap();
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &r, &th, tau_min).unwrap();
    ws.forward_all().unwrap().dz()[(0, 0)]
}

fn pendulum(theta: f64) -> (OcpDefinition<Pendulum>, ParamVector, SolveResult) {
    let ocp = Pendulum::ocp();
    let th = ParamVector::scalar(theta);
    let warmup = SqpSettings::new(1e-4, 0.0, HessianMode::gauss_newton());
    let r = solve_nlp_with_warmup(&ocp, &th, None, &warmup, &exact(1e-10, 0.0)).unwrap();
    assert!(r.converged());
    (ocp, th, r)
}

fn random_problem(seed: u64) -> (OcpDefinition<RandomOcp>, ParamVector, SolveResult) {
    let (ocp, th) = RandomOcp::generate(4, 2, 2, 3, seed);
    // The sensitivity at the final barrier value differs from the active-set
    // one by about τ/μ², so weakly active bounds need a tight solve.
    let r = solve_nlp(&ocp, &th, None, &exact(1e-12, 0.0)).unwrap();
    assert!(r.converged(), "seed {seed}: {:?}", r.failure);
    (ocp, th, r)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-8)
}

#[test]
fn tutorial_derivatives_inside_and_outside_the_bound() {
    assert!((tutorial_dz(0.5, 0.0) - 1.0).abs() < 1e-8);
    assert!(tutorial_dz(2.0, 0.0).abs() < 1e-8);
}

#[test]
fn smoothed_derivative_is_defined_at_the_kink() {
    let tau_min = 1e-2;
    let ocp = Tutorial::ocp();
    let th = ParamVector::scalar(1.0);
    let st = exact(1e-10, tau_min);
    let r = solve_nlp(&ocp, &th, None, &st).unwrap();
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &r, &th, tau_min).unwrap();
    let dz = ws.forward_all().unwrap().dz()[(0, 0)];
    let fd = finite_difference_oracle(&ocp, &th, &st, Some(&r.w), &[0]).unwrap()[(0, 0)];
    assert!((dz - fd).abs() <= 1e-4, "{dz} vs {fd}");
    assert!(dz > 0.0 && dz < 2.0);
}

#[test]
fn finite_differences_of_the_tutorial() {
    let fd = finite_difference_oracle(&Tutorial::ocp(), &ParamVector::scalar(0.5), &exact(1e-10, 0.0), None, &[0])
        .unwrap();
    assert!((fd[(0, 0)] - 1.0).abs() <= 1e-6);
}

#[test]
fn finite_differences_reproduce_the_linear_feedback_gain() {
    // Unconstrained LQR with x̄₀ as parameter: the map x̄₀ ↦ w is linear, so
    // central differences are exact up to rounding.
    let data = generate_lqr_bench(3, 2, 6, 1e4, 1, 2);
    let ocp = data.ocp.with_initial_state(&data.x0[0]).unwrap().with_x0_as_parameter();
    let mut th = data.theta.as_slice().to_vec();
    th.extend_from_slice(&data.x0[0]);
    let th = ParamVector::new(th);
    let st = exact(1e-10, 0.0);
    let r = solve_nlp(&ocp, &th, None, &st).unwrap();
    assert!(r.converged());
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &r, &th, 0.0).unwrap();
    let idx: Vec<usize> = (th.len() - 3..th.len()).collect();
    let fwd = ws.forward(&idx).unwrap().dz();
    let fd = finite_difference_oracle(&ocp, &th, &st, Some(&r.w), &idx).unwrap();
    let nz = fwd.nrows();
    let e = (fd.rows(0, nz) - &fwd).amax();
    assert!(e <= 1e-6, "{e:e}");
}

#[test]
fn zero_seed_gives_zero_adjoint() {
    let (ocp, th, r) = pendulum(1.0);
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &r, &th, 0.0).unwrap();
    let out = ws.adjoint(&AdjointSeed::zeros(ocp.nlp_dims())).unwrap();
    assert_eq!(out.s_adj.amax(), 0.0);
}

#[test]
fn control_seed_picks_the_forward_row() {
    let (ocp, th, r) = pendulum(1.0);
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &r, &th, 0.0).unwrap();
    let fwd = ws.forward_all().unwrap();
    let adj = ws.adjoint(&AdjointSeed::control(ocp.dims(), 0, 0)).unwrap();
    let row = fwd.du(0);
    assert!((adj.s_adj[0] - row[(0, 0)]).abs() <= 1e-10 * (1.0 + row[(0, 0)].abs()));
}

fn check_duality<M: OcpModel>(ocp: &OcpDefinition<M>, th: &ParamVector, r: &SolveResult, tau_min: f64) {
    let ws = SensitivityWorkspace::setup_and_factorize(ocp, r, th, tau_min).unwrap();
    let fwd = ws.forward_all().unwrap().columns;
    let nw = fwd.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let nu = normal_vec(&mut rng, nw);
        let s_adj = ws.adjoint(&AdjointSeed { nu: nu.clone() }).unwrap().s_adj;
        let contracted = fwd.tr_mul(&nu);
        for j in 0..s_adj.len() {
            assert!((contracted[j] - s_adj[j]).abs() <= 1e-10 * (1.0 + s_adj[j].abs()));
        }
    }
    let unit = ws.adjoint_panel(&DMatrix::identity(nw, nw)).unwrap();
    let e = (&unit - &fwd).amax() / fwd.amax().max(1.0);
    assert!(e <= 1e-10, "{e:e}");
}

#[test]
fn adjoints_are_dual_to_forward_sensitivities() {
    let ocp = Tutorial::ocp();
    for (theta, tau) in [(0.5, 0.0), (2.0, 0.0), (1.0, 1e-2)] {
        let th = ParamVector::scalar(theta);
        let r = solve_nlp(&ocp, &th, None, &exact(1e-10, tau)).unwrap();
        check_duality(&ocp, &th, &r, tau);
    }
    let (ocp, th, r) = pendulum(1.0);
    check_duality(&ocp, &th, &r, 0.0);
    let data = generate_lqr_bench(8, 4, 20, 1e4, 1, 0);
    let ocp = data.ocp.with_initial_state(&data.x0[0]).unwrap();
    let r = solve_nlp(&ocp, &data.theta, None, &exact(1e-8, 0.0)).unwrap();
    check_duality(&ocp, &data.theta, &r, 0.0);
    for seed in 0..3 {
        let (ocp, th, r) = random_problem(seed);
        check_duality(&ocp, &th, &r, 0.0);
    }
}

#[test]
fn sensitivity_setup_rejects_inexact_hessians() {
    let (ocp, th, r) = pendulum(1.0);
    for mode in [HessianMode::gauss_newton(), HessianMode::exact().with_levenberg_marquardt(0.1)] {
        let e = SensitivityWorkspace::setup_with_hessian(&ocp, &r, &th, 0.0, mode).unwrap_err();
        assert!(matches!(e, Error::InexactHessian));
    }
}

#[test]
fn unconverged_results_are_rejected() {
    let ocp = Tutorial::ocp();
    let th = ParamVector::scalar(0.5);
    let mut st = exact(1e-10, 0.0);
    st.max_iter = 1;
    let r = solve_nlp(&ocp, &th, None, &st).unwrap();
    assert!(!r.converged());
    assert!(SensitivityWorkspace::setup_and_factorize(&ocp, &r, &th, 0.0).is_err());
}

fn triangle<M: OcpModel>(ocp: &OcpDefinition<M>, th: &ParamVector, r: &SolveResult) -> bool {
    let ws = SensitivityWorkspace::setup_and_factorize(ocp, r, th, 0.0).unwrap();
    if ws.diagnostics().strict_comp_margin < 1e-3 {
        return false;
    }
    let fwd = ws.forward_all().unwrap();
    let dz = fwd.dz();
    let act = active_set_sensitivity_oracle(ocp, r, th).unwrap();
    let idx: Vec<usize> = (0..th.len()).collect();
    let fd = finite_difference_oracle(ocp, th, &exact(1e-10, 0.0), Some(&r.w), &idx).unwrap();
    let fd = fd.rows(0, dz.nrows());
    let scale = dz.amax().max(1.0);
    let e = (&dz - &act.dz).amax();
    assert!(e <= 1e-6 * scale, "forward vs active set {e:e}, margin {:e}", ws.diagnostics().strict_comp_margin);
    assert!((&dz - fd).amax() <= 1e-4 * scale);
    assert!((&act.dz - fd).amax() <= 1e-4 * scale);
    true
}

#[test]
fn forward_active_set_and_finite_differences_agree() {
    let (ocp, th, r) = pendulum(1.0);
    assert!(triangle(&ocp, &th, &r));
    let mut checked = 0;
    for seed in 0..20 {
        let (ocp, th, r) = random_problem(seed);
        checked += triangle(&ocp, &th, &r) as usize;
    }
    assert!(checked >= 10, "only {checked} strictly complementary instances");
}

#[test]
fn two_solver_sensitivities_match_finite_differences_on_the_pendulum() {
    let (ocp, th, r) = pendulum(1.0);
    let gn = SqpSettings::new(1e-10, 0.0, HessianMode::gauss_newton());
    let (_, out) =
        two_solver_solve_and_sensitivity(&ocp, &th, Some(&r.w), &gn, &SensitivityRequest::Forward(vec![0])).unwrap();
    let SensitivityOutput::Forward(fwd) = out else { panic!("forward requested") };
    let fd = finite_difference_oracle(&ocp, &th, &exact(1e-10, 0.0), Some(&r.w), &[0]).unwrap();
    let u0 = ocp.dims().u_offset(0);
    assert!(rel(fwd.du(0)[(0, 0)], fd[(u0, 0)]) <= 1e-4);
}

#[test]
fn gauss_newton_nominal_matches_exact_on_the_benchmark() {
    let data = generate_lqr_bench(4, 2, 8, 1.0, 1, 3);
    let ocp = data.ocp.with_initial_state(&data.x0[0]).unwrap();
    let req = SensitivityRequest::Forward((0..5).collect());
    let run = |mode| {
        let st = SqpSettings::new(1e-10, 0.0, mode);
        match two_solver_solve_and_sensitivity(&ocp, &data.theta, None, &st, &req).unwrap().1 {
            SensitivityOutput::Forward(f) => f.columns,
            _ => unreachable!(),
        }
    };
    let a = run(HessianMode::exact());
    let b = run(HessianMode::gauss_newton());
    assert!((&a - &b).amax() <= 1e-9 * a.amax().max(1.0));
}

#[test]
fn levenberg_marquardt_in_the_nominal_solver_leaves_sensitivities_unchanged() {
    let ocp = Tutorial::ocp();
    let th = ParamVector::scalar(0.5);
    let req = SensitivityRequest::Forward(vec![0]);
    let mut out = Vec::new();
    for lm in [0.0, 0.1] {
        let st = SqpSettings::new(1e-10, 0.0, HessianMode::exact().with_levenberg_marquardt(lm));
        let (r, s) = two_solver_solve_and_sensitivity(&ocp, &th, None, &st, &req).unwrap();
        assert!(r.converged());
        let SensitivityOutput::Forward(f) = s else { unreachable!() };
        out.push(f.dz()[(0, 0)]);
    }
    assert!((out[0] - out[1]).abs() <= 1e-8);
    assert!((out[0] - 1.0).abs() <= 1e-8);
}

#[test]
fn parameter_indices_are_bounds_checked() {
    let ocp = Tutorial::ocp();
    let th = ParamVector::scalar(0.5);
    let r = solve_nlp(&ocp, &th, None, &exact(1e-10, 0.0)).unwrap();
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &r, &th, 0.0).unwrap();
    assert!(ws.forward(&[1]).is_err());
}
