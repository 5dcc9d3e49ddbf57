use diffocp::ipm::{solve_qp, IpmSettings, IpmStatus};
use diffocp::ocp::{linearize_at, HessianMode};
use diffocp::problems::{generate_lqr_bench, Pendulum, Tutorial};
use diffocp::sqp::{check_convergence, solve_nlp, solve_nlp_with_warmup, SqpSettings, SqpStatus};
use diffocp::ParamVector;

fn exact(tol: f64, tau_min: f64) -> SqpSettings {
    SqpSettings::new(tol, tau_min, HessianMode::exact())
}

#[test]
fn tutorial_interior_solution() {
    let r = solve_nlp(&Tutorial::ocp(), &ParamVector::scalar(0.5), None, &exact(1e-8, 0.0)).unwrap();
    assert!(r.converged());
    assert!((r.w.z[0] - 0.25).abs() <= 1e-8);
}

#[test]
fn tutorial_bound_solution() {
    let r = solve_nlp(&Tutorial::ocp(), &ParamVector::scalar(2.0), None, &exact(1e-8, 0.0)).unwrap();
    assert!(r.converged());
    assert!((r.w.z[0] - 1.0).abs() <= 1e-8);
    // constraints are (−u − 1, u − 1)
    assert!(r.w.mu[1] > 0.0 && r.w.mu[1] > 1e3 * r.w.mu[0]);
}

#[test]
fn smoothed_solution_keeps_products_at_the_floor() {
    let tau_min = 1e-2;
    let tol = 1e-10;
    let r = solve_nlp(&Tutorial::ocp(), &ParamVector::scalar(2.0), None, &exact(tol, tau_min)).unwrap();
    assert!(r.converged());
    let theta = ParamVector::scalar(2.0);
    let h = [-r.w.z[0] - 1.0, r.w.z[0] - 1.0];
    for i in 0..2 {
        assert!((r.w.mu[i] * -h[i] - tau_min).abs() <= 2.0 * tol);
    }
    assert!(r.w.z[0] < 1.0 - 1e-4);
    let (ok, _) = check_convergence(&Tutorial::ocp(), &r.w, &theta, tau_min, tol).unwrap();
    assert!(ok);
}

fn pendulum_solve(theta: f64, tol: f64) -> diffocp::sqp::SolveResult {
    let ocp = Pendulum::ocp();
    let warmup = SqpSettings::new(1e-4, 0.0, HessianMode::gauss_newton());
    solve_nlp_with_warmup(&ocp, &ParamVector::scalar(theta), None, &warmup, &exact(tol, 0.0)).unwrap()
}

#[test]
fn pendulum_converges_with_bounded_force() {
    let r = pendulum_solve(1.0, 1e-8);
    assert!(r.converged(), "{:?}", r.failure);
    let u0 = r.w.z[4];
    assert!(u0.is_finite() && u0.abs() <= 80.0 + 1e-6);
}

#[test]
fn only_the_final_pendulum_iterate_passes_the_convergence_test() {
    let tol = 1e-8;
    let r = pendulum_solve(1.0, tol);
    assert!(r.converged());
    let (last, earlier) = r.residual_history.split_last().unwrap();
    assert!(*last <= tol);
    assert!(earlier.iter().all(|v| *v > tol));
    let (ok, _) = check_convergence(&Pendulum::ocp(), &r.w, &ParamVector::scalar(1.0), 0.0, tol).unwrap();
    assert!(ok);
}

#[test]
fn perturbed_iterate_fails_the_convergence_test() {
    let theta = ParamVector::scalar(0.5);
    let r = solve_nlp(&Tutorial::ocp(), &theta, None, &exact(1e-8, 0.0)).unwrap();
    let mut w = r.w.clone();
    w.z[0] += 1e-3;
    let (ok, res) = check_convergence(&Tutorial::ocp(), &w, &theta, 0.0, 1e-8).unwrap();
    assert!(!ok && res.inf_norm > 1e-8);
}

#[test]
fn repeated_solves_are_bit_identical() {
    let a = pendulum_solve(1.2, 1e-8);
    let b = pendulum_solve(1.2, 1e-8);
    assert_eq!(a.w.to_flat().as_slice(), b.w.to_flat().as_slice());
    assert_eq!(a.residual_history, b.residual_history);
}

#[test]
fn converged_iterate_is_a_fixed_point_of_the_qp() {
    let tol = 1e-8;
    let theta = ParamVector::scalar(1.0);
    let r = pendulum_solve(1.0, tol);
    let ocp = Pendulum::ocp();
    let qp = linearize_at(&ocp, &r.w, &theta, HessianMode::exact()).unwrap();
    let mut warm = r.w.clone();
    warm.z.fill(0.0);
    let st = IpmSettings {
        tol: 0.5 * tol,
        ..IpmSettings::default()
    };
    let (step, stats) = solve_qp(&qp, &st, Some(&warm)).unwrap();
    assert_eq!(stats.status, IpmStatus::Converged);
    assert!(step.z.amax() <= 10.0 * tol, "step {:e}", step.z.amax());
}

#[test]
fn gauss_newton_and_exact_coincide_on_the_benchmark() {
    let data = generate_lqr_bench(4, 2, 10, 1.0, 3, 5);
    for x0 in &data.x0 {
        let ocp = data.ocp.with_initial_state(x0).unwrap();
        let a = solve_nlp(&ocp, &data.theta, None, &exact(1e-8, 0.0)).unwrap();
        let gn = exact(1e-8, 0.0).with_hessian(HessianMode::gauss_newton());
        let b = solve_nlp(&ocp, &data.theta, None, &gn).unwrap();
        assert!(a.converged() && b.converged());
        assert_eq!(a.sqp_iterations, b.sqp_iterations);
        let e = (a.w.to_flat() - b.w.to_flat()).amax() / a.w.to_flat().amax().max(1.0);
        assert!(e <= 1e-12, "{e:e}");
    }
}

#[test]
fn invalid_settings_and_non_finite_parameters_are_rejected() {
    let ocp = Tutorial::ocp();
    assert!(solve_nlp(&ocp, &ParamVector::scalar(0.5), None, &exact(-1.0, 0.0)).is_err());
    assert!(solve_nlp(&ocp, &ParamVector::new(vec![0.5, 1.0]), None, &exact(1e-8, 0.0)).is_err());
    let r = solve_nlp(&ocp, &ParamVector::scalar(f64::NAN), None, &exact(1e-8, 0.0));
    assert!(r.is_err() || r.unwrap().status == SqpStatus::EvalFail);
}
