//! Command-line surface and its mapping onto [`ExampleSpec`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExampleName, ExampleSpec, Format, Grid, HessianChoice};
use crate::run::{run_example, sens_compare};
use crate::table::Table;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "diffocp", version, about = "Parametric OCP solutions and their sensitivities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep one of the built-in examples over its parameter grid.
    Example {
        /// Example to run; may instead come from `--config`.
        name: Option<ExampleName>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Seeded bounded-LQR batch.
    Bench {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Forward-versus-adjoint timing on the many-parameter OCP.
    SensCompare {
        #[command(flatten)]
        opts: CommonOpts,
    },
}

#[derive(Debug, Args, Default)]
pub struct CommonOpts {
    /// JSON document with the fields of an example spec. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Barrier floor; repeat for several values.
    #[arg(long = "tau-min")]
    pub tau_min: Vec<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    pub hessian: Option<HessianChoice>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long = "theta-start", allow_negative_numbers = true)]
    pub theta_start: Option<f64>,
    #[arg(long = "theta-stop", allow_negative_numbers = true)]
    pub theta_stop: Option<f64>,
    #[arg(long = "theta-step", conflicts_with = "theta_points")]
    pub theta_step: Option<f64>,
    #[arg(long = "theta-points")]
    pub theta_points: Option<usize>,
    /// Initial guess of the decision variable; repeatable.
    #[arg(long = "init", allow_negative_numbers = true)]
    pub inits: Vec<f64>,
    #[arg(long = "n-batch")]
    pub n_batch: Option<usize>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nu: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long = "u-max")]
    pub u_max: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Add finite-difference oracle columns.
    #[arg(long)]
    pub fd: bool,
    /// Add wall-clock columns.
    #[arg(long)]
    pub timings: bool,
}

impl CommonOpts {
    /// Config file (if any) with the flags applied on top.
    pub fn to_spec(&self, name: Option<ExampleName>) -> Result<ExampleSpec, CliError> {
        let mut spec = match (&self.config, name) {
            (Some(path), _) => {
                let mut s = ExampleSpec::load(path)?;
                if let Some(n) = name {
                    s.name = n;
                }
                s
            }
            (None, Some(n)) => ExampleSpec::new(n),
            (None, None) => {
                return Err(CliError::Config("an example name or --config is required".into()))
            }
        };
        if !self.tau_min.is_empty() {
            spec.tau_min = Some(self.tau_min.clone());
        }
        if !self.inits.is_empty() {
            spec.inits = Some(self.inits.clone());
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    spec.$field = Some(v);
                }
            )*};
        }
        set!(tol, hessian, seed, workers, out, format, n_batch, nx, nu, horizon, u_max, repetitions);
        spec.fd |= self.fd;
        spec.timings |= self.timings;
        let grid_flags = self.theta_start.is_some()
            || self.theta_stop.is_some()
            || self.theta_step.is_some()
            || self.theta_points.is_some();
        if grid_flags {
            let base = spec.grid();
            let mut g = Grid {
                start: self.theta_start.unwrap_or(base.start),
                stop: self.theta_stop.unwrap_or(base.stop),
                ..base
            };
            if let Some(step) = self.theta_step {
                g.step = Some(step);
                g.points = None;
            }
            if let Some(points) = self.theta_points {
                g.points = Some(points);
                g.step = None;
            }
            spec.grid = Some(g);
        }
        Ok(spec)
    }
}

pub fn write_table(table: &Table, spec: &ExampleSpec) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match &spec.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    match spec.format() {
        Format::Csv => table.write_csv(sink),
        Format::Json => table.write_json(sink),
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let (spec, compare) = match &cli.command {
        Command::Example { name, opts } => (opts.to_spec(*name)?, false),
        Command::Bench { opts } => (opts.to_spec(Some(ExampleName::LqrBench))?, false),
        Command::SensCompare { opts } => (opts.to_spec(Some(ExampleName::ManyParam))?, true),
    };
    let table = if compare { sens_compare(&spec)? } else { run_example(&spec)? };
    write_table(&table, &spec)
}
