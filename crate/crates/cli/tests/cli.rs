use std::process::{Command, Output};

use diffocp_cli::config::{ExampleName, ExampleSpec};
use diffocp_cli::run::run_example;
use diffocp_cli::table::{Cell, Table};

fn diffocp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffocp")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn header_of(csv: &str) -> &str {
    csv.lines().next().unwrap()
}

#[test]
fn example_headers() {
    let cases: [(&[&str], &str); 5] = [
        (
            &["example", "tutorial", "--theta-start", "0", "--theta-stop", "0"],
            "theta,tau_min,z,dz_dtheta,mu_lower,mu_upper,exact_z,exact_dz_dtheta,status,sqp_iterations",
        ),
        (
            &["example", "jump", "--theta-start", "0", "--theta-stop", "0", "--init", "1"],
            "theta,tau_min,x_init,z,dz_dtheta,mu_lower,mu_upper,objective,status,sqp_iterations",
        ),
        (
            &["example", "pendulum", "--theta-points", "1", "--theta-start", "1", "--tau-min", "0", "--tol", "1e-8"],
            "theta,tau_min,u0,du0_dtheta,gn_du0_dtheta,mu_u0_lower,mu_u0_upper,mu_position_max,\
             active_constraints,strict_comp_margin,status,sqp_iterations",
        ),
        (
            &["bench", "--n-batch", "2", "--nx", "2", "--nu", "1", "--horizon", "4"],
            "instance,x0_0,x0_1,status,sqp_iterations,ipm_iterations,residual,objective,active_bounds,u0_0,du00_dtheta_max_abs",
        ),
        (&["sens-compare", "--repetitions", "1"], "repetition,ntheta,forward_s,adjoint_s,ratio,max_abs_diff"),
    ];
    for (args, expected) in cases {
        let out = stdout(&diffocp(args));
        assert_eq!(header_of(&out), expected, "{args:?}");
        assert!(out.lines().count() >= 2, "{args:?}");
    }
}

#[test]
fn optional_columns_follow_flags() {
    let out = stdout(&diffocp(&["example", "tutorial", "--theta-start", "0.5", "--theta-stop", "0.5", "--fd", "--timings"]));
    let h = header_of(&out);
    assert!(h.contains("dz_dtheta,fd_dz_dtheta,"));
    assert!(h.ends_with(",time_s"));
}

#[test]
fn tutorial_origin_row() {
    let out = stdout(&diffocp(&["example", "tutorial", "--theta-start", "0", "--theta-stop", "0", "--tau-min", "0"]));
    let t = Table::read_csv(out.as_bytes()).unwrap();
    assert_eq!(t.rows.len(), 1);
    let row = &t.rows[0];
    let get = |name: &str| row[t.column(name).unwrap()].clone();
    assert_eq!(get("z").as_f64().unwrap().abs(), 0.0);
    assert!(get("dz_dtheta").as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(get("status"), Cell::Text("Converged".into()));
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let mut spec = ExampleSpec::new(ExampleName::Tutorial);
    spec.grid = Some(diffocp_cli::config::Grid::stepped(-1.3, 1.3, 0.1));
    let t = run_example(&spec).unwrap();
    let back = Table::read_csv(t.to_csv_string().unwrap().as_bytes()).unwrap();
    assert_eq!(back.header, t.header);
    for (a, b) in t.rows.iter().flatten().zip(back.rows.iter().flatten()) {
        match (a, b) {
            (Cell::Num(x), Cell::Num(y)) => assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())),
            (Cell::Int(x), Cell::Num(y)) => assert_eq!(*x as f64, *y),
            (Cell::Text(x), Cell::Text(y)) => assert_eq!(x, y),
            _ => panic!("{a:?} read back as {b:?}"),
        }
    }
}

#[test]
fn json_keeps_column_order() {
    let out = stdout(&diffocp(&["example", "tutorial", "--theta-start", "0.5", "--theta-stop", "0.5", "--format", "json"]));
    let first = out.find("\"theta\"").unwrap();
    let last = out.find("\"sqp_iterations\"").unwrap();
    assert!(first < last);
    assert!(out.trim_start().starts_with('['));
    assert!(out.contains("\"status\": \"Converged\""));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out.csv");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"name": "tutorial", "grid": {{"start": 0.5, "stop": 0.7, "step": 0.1}}, "tau_min": [0.01], "out": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let run = diffocp(&["example", "--config", cfg.to_str().unwrap(), "--tau-min", "0"]);
    assert!(run.status.success());
    assert!(run.stdout.is_empty());
    let t = Table::read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(t.values("tau_min").iter().all(|v| *v == Some(0.0)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"name": "tutorial", "bogus": 1}"#).unwrap();
    assert_eq!(diffocp(&["example", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(diffocp(&["example"]).status.code(), Some(2));
    assert_eq!(diffocp(&["example", "tutorial", "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(diffocp(&["example", "nonexistent"]).status.code(), Some(2));
    let unwritable = dir.path().join("missing").join("out.csv");
    let run = diffocp(&["example", "tutorial", "--theta-points", "1", "--out", unwritable.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).starts_with("error:"));
}

#[test]
fn bench_output_is_deterministic_across_workers() {
    let args = ["bench", "--n-batch", "6", "--nx", "3", "--nu", "2", "--horizon", "6", "--seed", "3"];
    let one = stdout(&diffocp(&[&args[..], &["--workers", "1"]].concat()));
    let again = stdout(&diffocp(&[&args[..], &["--workers", "1"]].concat()));
    let three = stdout(&diffocp(&[&args[..], &["--workers", "3"]].concat()));
    assert_eq!(one, again);
    assert_eq!(one, three);
}

#[test]
fn pendulum_sweep_converges_at_light_carts() {
    let mut spec = ExampleSpec::new(ExampleName::Pendulum);
    spec.grid = Some(diffocp_cli::config::Grid::linspace(0.25, 0.35, 3));
    spec.tau_min = Some(vec![0.0]);
    let t = run_example(&spec).unwrap();
    let j = t.column("status").unwrap();
    assert!(t.rows.iter().all(|r| r[j] == Cell::Text("Converged".into())));
}
