use diffocp::kkt::{dense_kkt_matrix, dense_kkt_oracle, KktSystem};
use diffocp::ocp::OcpDimensions;
use diffocp::problems::random::{random_iterate, random_stage_qp};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dims(seed: u64) -> OcpDimensions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OcpDimensions {
        horizon: rng.random_range(1..=6),
        nx: rng.random_range(1..=4),
        nu: rng.random_range(1..=4),
        nh: rng.random_range(0..=3),
        nh_terminal: rng.random_range(0..=2),
        ntheta: 0,
    }
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn random_panel(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn structured_solves_match_the_dense_matrix_over_100_seeds() {
    for seed in 0..100 {
        let dims = random_dims(seed);
        let qp = random_stage_qp(dims, seed);
        let w = random_iterate(dims, seed);
        let m = dense_kkt_matrix(&qp, &w.mu, &w.s).unwrap();
        let sys = KktSystem::new(qp.clone(), &w.mu, &w.s).unwrap();
        let nw = dims.nw();

        let rhs = random_panel(nw, 1, seed + 1000).column(0).into_owned();
        let step = sys.solve(&rhs).unwrap().to_flat();
        let oracle = dense_kkt_oracle(&qp, &w.mu, &w.s, &rhs).unwrap().to_flat();
        let e = (&step - &oracle).norm() / oracle.norm();
        assert!(e < 1e-10, "seed {seed}: step error {e:e}");

        let j = random_panel(nw, 3, seed + 2000);
        let fwd = sys.solve_panel(&j).unwrap();
        let fwd_oracle = m.clone().lu().solve(&(-&j)).unwrap();
        let e = rel_err(&fwd, &fwd_oracle);
        assert!(e < 1e-10, "seed {seed}: forward error {e:e}");

        let nu = random_panel(nw, 3, seed + 3000);
        let adj = sys.solve_transpose_panel(&nu).unwrap();
        let adj_oracle = m.transpose().lu().solve(&nu).unwrap();
        let e = rel_err(&adj, &adj_oracle);
        assert!(e < 1e-10, "seed {seed}: transpose error {e:e}");
    }
}

#[test]
fn matrix_free_products_match_the_dense_matrix() {
    for seed in 0..20 {
        let dims = random_dims(seed);
        let qp = random_stage_qp(dims, seed);
        let w = random_iterate(dims, seed);
        let m = dense_kkt_matrix(&qp, &w.mu, &w.s).unwrap();
        let sys = KktSystem::new(qp, &w.mu, &w.s).unwrap();
        let x = random_panel(dims.nw(), 2, seed);
        assert!(rel_err(&sys.apply(&x).unwrap(), &(&m * &x)) < 1e-14);
        assert!(rel_err(&sys.apply_transpose(&x).unwrap(), &(m.transpose() * &x)) < 1e-14);
    }
}

#[test]
fn refinement_does_not_degrade_accurate_solves() {
    let dims = random_dims(3);
    let qp = random_stage_qp(dims, 3);
    let w = random_iterate(dims, 3);
    let sys = KktSystem::new(qp, &w.mu, &w.s).unwrap();
    let j = random_panel(dims.nw(), 2, 9);
    let plain = sys.solve_panel(&j).unwrap();
    let refined = sys.solve_panel_refined(&j, 2).unwrap();
    assert!(rel_err(&refined, &plain) < 1e-12);
    let residual = sys.apply(&refined).unwrap() + &j;
    assert!(residual.amax() < 1e-12 * j.amax().max(1.0) * 1e2);
}

#[test]
fn zero_rhs_gives_zero_step() {
    let dims = random_dims(5);
    let qp = random_stage_qp(dims, 5);
    let w = random_iterate(dims, 5);
    let sys = KktSystem::new(qp, &w.mu, &w.s).unwrap();
    let step = sys.solve(&DVector::zeros(dims.nw())).unwrap().to_flat();
    assert_eq!(step.amax(), 0.0);
}

#[test]
fn non_positive_slack_is_rejected() {
    let dims = OcpDimensions {
        horizon: 2,
        nx: 2,
        nu: 1,
        nh: 1,
        nh_terminal: 0,
        ntheta: 0,
    };
    let qp = random_stage_qp(dims, 1);
    let mut w = random_iterate(dims, 1);
    w.s[0] = 0.0;
    assert!(KktSystem::new(qp, &w.mu, &w.s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transpose_solve_is_adjoint_of_forward_solve(seed in 0u64..10_000) {
        let dims = random_dims(seed);
        let qp = random_stage_qp(dims, seed);
        let w = random_iterate(dims, seed);
        let sys = KktSystem::new(qp, &w.mu, &w.s).unwrap();
        let r = random_panel(dims.nw(), 1, seed + 1);
        let nu = random_panel(dims.nw(), 1, seed + 2);
        // νᵀ(−ℳ⁻¹r) = −(ℳ⁻ᵀν)ᵀr
        let lhs = nu.column(0).dot(&sys.solve_panel(&r).unwrap().column(0));
        let rhs = -sys.solve_transpose_panel(&nu).unwrap().column(0).dot(&r.column(0));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }
}
