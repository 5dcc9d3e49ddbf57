//! Example specification, loadable from JSON and overridable by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExampleName {
    Tutorial,
    Jump,
    Pendulum,
    LqrBench,
    ManyParam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HessianChoice {
    Exact,
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// `points` evenly spaced values, or values `start + k·step` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl Grid {
    pub fn stepped(start: f64, stop: f64, step: f64) -> Self {
        Grid {
            start,
            stop,
            step: Some(step),
            points: None,
        }
    }

    pub fn linspace(start: f64, stop: f64, points: usize) -> Self {
        Grid {
            start,
            stop,
            step: None,
            points: Some(points),
        }
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let bad = |msg: &str| Err(CliError::Config(format!("grid {self:?}: {msg}")));
        if !(self.start.is_finite() && self.stop.is_finite()) || self.stop < self.start {
            return bad("needs finite start <= stop");
        }
        match (self.step, self.points) {
            (Some(_), Some(_)) => bad("give either step or points"),
            (None, None) => bad("needs step or points"),
            (Some(step), None) => {
                if !(step > 0.0) {
                    return bad("step must be positive");
                }
                // Tolerate rounding in the span so that `stop` is included.
                let n = ((self.stop - self.start) / step + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|k| self.start + k as f64 * step).collect())
            }
            (None, Some(0)) => bad("needs at least one point"),
            (None, Some(1)) => Ok(vec![self.start]),
            (None, Some(n)) => {
                let h = (self.stop - self.start) / (n - 1) as f64;
                Ok((0..n)
                    .map(|k| if k + 1 == n { self.stop } else { self.start + k as f64 * h })
                    .collect())
            }
        }
    }
}

/// Everything a run needs. Unset fields take per-example defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleSpec {
    pub name: ExampleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    /// Initial guesses of the scalar decision variable (jump example).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<HessianChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    /// Adds finite-difference columns.
    #[serde(default)]
    pub fd: bool,
    /// Adds wall-clock columns, which make the output nondeterministic.
    #[serde(default)]
    pub timings: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl ExampleSpec {
    pub fn new(name: ExampleName) -> Self {
        ExampleSpec {
            name,
            grid: None,
            inits: None,
            tau_min: None,
            tol: None,
            hessian: None,
            seed: None,
            n_batch: None,
            nx: None,
            nu: None,
            horizon: None,
            u_max: None,
            workers: None,
            repetitions: None,
            fd: false,
            timings: false,
            out: None,
            format: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Grid {
        self.grid.unwrap_or(match self.name {
            ExampleName::Tutorial => Grid::stepped(-2.0, 2.0, 0.01),
            ExampleName::Jump => Grid::stepped(-0.2, 0.8, 0.01),
            ExampleName::Pendulum => Grid::linspace(0.3, 1.6, 50),
            ExampleName::LqrBench | ExampleName::ManyParam => Grid::linspace(0.0, 0.0, 1),
        })
    }

    pub fn inits(&self) -> Vec<f64> {
        self.inits.clone().unwrap_or_else(|| vec![-1.0, 0.0, 1.0])
    }

    pub fn tau_min(&self) -> Vec<f64> {
        self.tau_min.clone().unwrap_or_else(|| match self.name {
            ExampleName::Tutorial => vec![0.0, 1e-2, 1e-1],
            ExampleName::Pendulum => vec![0.0, 1e-3, 1e-1],
            _ => vec![0.0],
        })
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(match self.name {
            ExampleName::Tutorial | ExampleName::ManyParam => 1e-8,
            ExampleName::Jump | ExampleName::Pendulum => 1e-10,
            ExampleName::LqrBench => 1e-7,
        })
    }

    pub fn hessian(&self) -> HessianChoice {
        self.hessian.unwrap_or(HessianChoice::Exact)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn n_batch(&self) -> usize {
        self.n_batch.unwrap_or(128)
    }

    pub fn nx(&self) -> usize {
        self.nx.unwrap_or(8)
    }

    pub fn nu(&self) -> usize {
        self.nu.unwrap_or(4)
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.name {
            ExampleName::ManyParam => 40,
            _ => 20,
        })
    }

    pub fn u_max(&self) -> f64 {
        self.u_max.unwrap_or(1.0)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions.unwrap_or(20)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    /// Rejects settings no run could use.
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        if self.grid().values()?.is_empty() {
            return err("empty grid".into());
        }
        if !(self.tol() > 0.0) {
            return err(format!("tol must be positive, got {}", self.tol()));
        }
        let taus = self.tau_min();
        if taus.is_empty() || taus.iter().any(|t| !(*t >= 0.0 && *t < 1.0)) {
            return err(format!("tau_min values must lie in [0, 1), got {taus:?}"));
        }
        if self.inits().is_empty() || self.inits().iter().any(|x| !x.is_finite()) {
            return err("inits must be a nonempty list of finite values".into());
        }
        if self.workers() == 0 || self.n_batch() == 0 || self.repetitions() == 0 {
            return err("workers, n_batch and repetitions must be positive".into());
        }
        if self.nx() == 0 || self.nu() == 0 || self.horizon() == 0 {
            return err("nx, nu and horizon must be positive".into());
        }
        if !(self.u_max() > 0.0) {
            return err(format!("u_max must be positive, got {}", self.u_max()));
        }
        Ok(())
    }
}
