use diffocp::batch::{batch_run, BatchInstance, BatchRequest, BatchSensitivity, InstanceSensitivity};
use diffocp::ocp::HessianMode;
use diffocp::problems::{generate_lqr_bench, Tutorial};
use diffocp::sensitivity::{AdjointSeed, SensitivityWorkspace};
use diffocp::sqp::{solve_nlp, SqpSettings};
use diffocp::{Nlp, ParamVector};
use nalgebra::DVector;

fn lqr_request(n: usize, workers: usize, sensitivity: BatchSensitivity) -> BatchRequest<diffocp::problems::LqrBench> {
    let data = generate_lqr_bench(8, 4, 20, 1e4, n, 0);
    BatchRequest {
        instances: data
            .x0
            .iter()
            .map(|x| BatchInstance::new(data.theta.clone()).with_x0(x.clone()))
            .collect(),
        ocp: data.ocp,
        settings: SqpSettings::new(1e-8, 0.0, HessianMode::exact()),
        sensitivity,
        workers,
    }
}

fn flat_bits(res: &diffocp::batch::BatchResult) -> Vec<Vec<u64>> {
    res.results
        .iter()
        .map(|r| {
            let mut v: Vec<u64> = r.solve.as_ref().unwrap().w.to_flat().iter().map(|x| x.to_bits()).collect();
            if let Some(Ok(InstanceSensitivity::Forward(f))) = &r.sensitivity {
                v.extend(f.columns.iter().map(|x| x.to_bits()));
            }
            v
        })
        .collect()
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let runs: Vec<_> = [1, 2, 4]
        .into_iter()
        .map(|w| flat_bits(&batch_run(&lqr_request(12, w, BatchSensitivity::Forward(vec![0, 5]))).unwrap()))
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn single_instance_matches_a_direct_solve() {
    let ocp = Tutorial::ocp();
    let theta = ParamVector::scalar(0.7);
    let settings = SqpSettings::new(1e-10, 0.0, HessianMode::exact());
    let req = BatchRequest {
        ocp: ocp.clone(),
        instances: vec![BatchInstance::new(theta.clone())],
        settings,
        sensitivity: BatchSensitivity::Forward(vec![0]),
        workers: 1,
    };
    let out = batch_run(&req).unwrap();
    let direct = solve_nlp(&ocp, &theta, None, &settings).unwrap();
    let ws = SensitivityWorkspace::setup_and_factorize(&ocp, &direct, &theta, 0.0).unwrap();
    let fwd = ws.forward(&[0]).unwrap();
    let r = &out.results[0];
    assert_eq!(r.solve.as_ref().unwrap().w, direct.w);
    let Some(Ok(InstanceSensitivity::Forward(f))) = &r.sensitivity else { panic!("missing sensitivity") };
    assert_eq!(f.columns, fwd.columns);
    assert_eq!(out.converged, 1);
}

#[test]
fn a_non_finite_instance_only_poisons_its_own_slot() {
    let ocp = Tutorial::ocp();
    let thetas = [0.5, f64::NAN, 2.0];
    let req = BatchRequest {
        ocp,
        instances: thetas.iter().map(|t| BatchInstance::new(ParamVector::scalar(*t))).collect(),
        settings: SqpSettings::new(1e-10, 0.0, HessianMode::exact()),
        sensitivity: BatchSensitivity::None,
        workers: 2,
    };
    let out = batch_run(&req).unwrap();
    assert!(out.results[1].solve.is_err());
    assert!((out.results[0].solve.as_ref().unwrap().w.z[0] - 0.25).abs() < 1e-8);
    assert!((out.results[2].solve.as_ref().unwrap().w.z[0] - 1.0).abs() < 1e-8);
    assert_eq!(out.converged, 2);
}

#[test]
fn batch_adjoints_match_forward_contractions() {
    let n = 6;
    let probe = lqr_request(n, 1, BatchSensitivity::None);
    let nw = probe.ocp.nlp_dims().nw();
    let seeds: Vec<AdjointSeed> = (0..n)
        .map(|i| AdjointSeed {
            nu: DVector::from_fn(nw, |k, _| ((k * 7 + i * 13) % 11) as f64 - 5.0),
        })
        .collect();
    let ntheta = probe.ocp.ntheta();
    let adj = batch_run(&lqr_request(n, 2, BatchSensitivity::Adjoint(seeds.clone()))).unwrap();
    let fwd = batch_run(&lqr_request(n, 2, BatchSensitivity::Forward((0..ntheta).collect()))).unwrap();
    assert_eq!(adj.converged, n);
    for i in 0..n {
        let Some(Ok(InstanceSensitivity::Adjoint(a))) = &adj.results[i].sensitivity else { panic!() };
        let Some(Ok(InstanceSensitivity::Forward(f))) = &fwd.results[i].sensitivity else { panic!() };
        let c = f.columns.tr_mul(&seeds[i].nu);
        for j in 0..ntheta {
            assert!((c[j] - a.s_adj[j]).abs() <= 1e-10 * (1.0 + a.s_adj[j].abs()));
        }
    }
}

#[test]
fn malformed_requests_are_rejected() {
    assert!(batch_run(&lqr_request(2, 0, BatchSensitivity::None)).is_err());
    assert!(batch_run(&lqr_request(2, 1, BatchSensitivity::Adjoint(Vec::new()))).is_err());
}
