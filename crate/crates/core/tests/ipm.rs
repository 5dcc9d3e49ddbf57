use diffocp::ipm::{fraction_to_boundary, solve_qp, IpmSettings, IpmStatus};
use diffocp::ocp::{linearize_at, HessianMode, OcpDimensions, StageQpData};
use diffocp::problems::random::random_stage_qp;
use diffocp::problems::{generate_lqr_bench, Tutorial};
use diffocp::sqp::{solve_nlp, SqpSettings};
use diffocp::ParamVector;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn settings(tau_min: f64, tol: f64) -> IpmSettings {
    IpmSettings {
        tau_min,
        tol,
        ..IpmSettings::default()
    }
}

fn dims(nh: usize, nh_terminal: usize) -> OcpDimensions {
    OcpDimensions {
        horizon: 4,
        nx: 3,
        nu: 2,
        nh,
        nh_terminal,
        ntheta: 0,
    }
}

/// Random QP for which `Δz = 0` is strictly feasible.
fn strictly_feasible_qp(seed: u64) -> StageQpData {
    let mut qp = random_stage_qp(dims(3, 2), seed);
    qp.init_res.fill(0.0);
    for st in &mut qp.stages {
        st.dyn_res.fill(0.0);
        st.h = st.h.map(|v| -1.0 - v.abs());
    }
    qp.terminal.h = qp.terminal.h.map(|v| -1.0 - v.abs());
    qp
}

#[test]
fn equality_only_qp_converges_in_one_newton_step() {
    for seed in 0..10 {
        let qp = random_stage_qp(dims(0, 0), seed);
        let (_, stats) = solve_qp(&qp, &settings(0.0, 1e-10), None).unwrap();
        assert_eq!(stats.status, IpmStatus::Converged);
        assert_eq!(stats.iterations, 1, "seed {seed}");
    }
}

#[test]
fn complementarity_products_sit_at_the_floor() {
    let tau_min = 1e-2;
    let tol = 1e-9;
    for seed in 0..10 {
        let qp = strictly_feasible_qp(seed);
        let (w, stats) = solve_qp(&qp, &settings(tau_min, tol), None).unwrap();
        assert_eq!(stats.status, IpmStatus::Converged, "seed {seed}");
        for (m, s) in w.mu.iter().zip(w.s.iter()) {
            assert!(*s > 0.0 && *m > 0.0);
            assert!((m * s - tau_min).abs() <= tol, "seed {seed}: product {}", m * s);
        }
    }
}

#[test]
fn tutorial_qp_at_the_smoothed_solution_keeps_the_product() {
    let ocp = Tutorial::ocp();
    let theta = ParamVector::scalar(2.0);
    let tau_min = 1e-3;
    let st = SqpSettings::new(1e-10, tau_min, HessianMode::exact());
    let r = solve_nlp(&ocp, &theta, None, &st).unwrap();
    assert!(r.converged());
    let qp = linearize_at(&ocp, &r.w, &theta, HessianMode::exact()).unwrap();
    let mut warm = r.w.clone();
    warm.z.fill(0.0);
    let (w, stats) = solve_qp(&qp, &settings(tau_min, 1e-11), Some(&warm)).unwrap();
    assert_eq!(stats.status, IpmStatus::Converged);
    assert!((w.mu[1] * w.s[1] - 1e-3).abs() <= 1e-9);
}

#[test]
fn fraction_to_boundary_keeps_iterates_interior() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let pos = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.random_range(1e-6..10.0));
        let dir = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.random_range(-50.0..50.0));
        let (s, mu) = (pos(&mut rng), pos(&mut rng));
        let (ds, dmu) = (dir(&mut rng), dir(&mut rng));
        let a = fraction_to_boundary(&s, &mu, &ds, &dmu, 0.995);
        assert!(a > 0.0 && a <= 1.0);
        assert!((s + ds * a).min() > 0.0);
        assert!((mu + dmu * a).min() > 0.0);
    }
}

#[test]
fn unconstrained_benchmark_matches_the_equality_oracle() {
    let data = generate_lqr_bench(8, 4, 20, 1e4, 8, 0);
    for x0 in &data.x0 {
        let ocp = data.ocp.with_initial_state(x0).unwrap();
        let w0 = ocp.default_init(&data.theta);
        let qp = linearize_at(&ocp, &w0, &data.theta, HessianMode::exact()).unwrap();
        let (w, stats) = solve_qp(&qp, &settings(0.0, 1e-9), None).unwrap();
        assert_eq!(stats.status, IpmStatus::Converged);
        let (dz, _) = qp.to_dense().solve_equality_constrained().unwrap();
        let e = (&w.z - &dz).amax() / dz.amax().max(1.0);
        assert!(e < 1e-8, "error {e:e}");
        assert!(w.mu.amax() < 1e-6, "a bound is active");
    }
}

#[test]
fn barrier_sequence_is_nonincreasing_and_ends_at_the_floor() {
    let data = generate_lqr_bench(8, 4, 20, 1e4, 2, 0);
    let ocp = data.ocp.with_initial_state(&data.x0[0]).unwrap();
    let w0 = ocp.default_init(&data.theta);
    let qp = linearize_at(&ocp, &w0, &data.theta, HessianMode::exact()).unwrap();
    let st = settings(1e-3, 1e-8);
    let (_, stats) = solve_qp(&qp, &st, None).unwrap();
    assert_eq!(stats.status, IpmStatus::Converged);
    for pair in stats.tau_history.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    let floor = st.tau_min + 0.1 * st.tol;
    assert!(stats.final_tau >= st.tau_min && stats.final_tau <= floor * (1.0 + 1e-12));
}

#[test]
fn warm_start_must_be_interior() {
    let qp = random_stage_qp(dims(2, 0), 1);
    let (mut w, _) = solve_qp(&qp, &settings(0.0, 1e-8), None).unwrap();
    w.s[0] = -1.0;
    assert!(solve_qp(&qp, &settings(0.0, 1e-8), Some(&w)).is_err());
}
