//! Run configuration: a TOML file whose keys mirror the long flags, overridden by flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "repic", version, about = "Independent-component intensity models for replicated point patterns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit a model with fixed p and zeta.
    Fit(Opts),
    /// Choose (p, zeta) by K-fold cross-validation, then refit on all replications.
    Cv(Opts),
    /// Generate synthetic data or run the simulation study.
    Simulate(Opts),
    /// Confidence intervals for a fitted model from its limiting distribution.
    Variance(Opts),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Cv(_) => "cv",
            Command::Simulate(_) => "simulate",
            Command::Variance(_) => "variance",
        }
    }

    pub fn opts(&self) -> &Opts {
        match self {
            Command::Fit(o) | Command::Cv(o) | Command::Simulate(o) | Command::Variance(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Bspline,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimulateWhat {
    /// Synthetic events in the ingestion format.
    Data,
    /// Component errors under grid-optimal and cross-validated smoothing.
    Table1,
    /// Intensity and density errors of the cross-validated fit.
    Table2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    Optimal,
    Cv,
    Both,
}

/// Observation region: `lower,upper` for an interval or a path to a vertex CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionArg {
    Interval([f64; 2]),
    File(PathBuf),
}

impl FromStr for RegionArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() == 2 {
            if let (Ok(l), Ok(u)) = (parts[0].parse(), parts[1].parse()) {
                return Ok(RegionArg::Interval([l, u]));
            }
        }
        Ok(RegionArg::File(PathBuf::from(s)))
    }
}

/// `rows x cols` centre grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CenterGrid {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for CenterGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(CenterGrid { rows: parse(r)?, cols: parse(c)? })
    }
}

impl TryFrom<String> for CenterGrid {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<CenterGrid> for String {
    fn from(g: CenterGrid) -> String {
        format!("{}x{}", g.rows, g.cols)
    }
}

/// Every setting, as given by flags or by the config file. Unset values take
/// per-command defaults when resolved.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct Opts {
    /// TOML configuration file; its keys are the long flag names.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Event CSV: replication_id,t (1-D) or replication_id,x,y (2-D).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `lower,upper` for an interval, or a CSV of polygon vertices with columns x,y.
    #[arg(long)]
    pub region: Option<RegionArg>,
    /// Dimension of the events (1 or 2; default 1).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub dim: Option<u8>,
    #[arg(long, value_enum)]
    pub basis: Option<BasisKind>,
    /// B-spline knot spans for fit/cv/variance; number of B-spline functions for simulate.
    #[arg(long)]
    pub knots: Option<usize>,
    /// RBF centre grid, e.g. 7x7.
    #[arg(long)]
    pub centers: Option<CenterGrid>,
    /// RBF bandwidth (default 1.2 times the centre spacing).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Quadrature resolution: Gauss-Legendre panels in 1-D, grid cells per side in 2-D.
    #[arg(long)]
    pub quadrature: Option<usize>,
    /// Number of components.
    #[arg(long)]
    pub p: Option<usize>,
    /// Candidate component counts for cv, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<usize>>,
    /// Smoothing parameter.
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Candidate smoothing parameters for cv and simulate, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub zeta_grid: Option<Vec<f64>>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Root seed; every subcommand draws from named streams derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gibbs sweeps per E-step (fit, cv, simulate) or per score evaluation (variance).
    #[arg(long)]
    pub mc_draws: Option<usize>,
    /// Simulation replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,

    /// Maximum EM iterations.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// EM stopping tolerance on the penalised objective.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Monte-Carlo draws for monitoring the objective.
    #[arg(long)]
    pub objective_draws: Option<usize>,
    /// Monte-Carlo draws per held-out log-likelihood.
    #[arg(long)]
    pub heldout_draws: Option<usize>,
    /// Evaluation grid size for components.csv and intensities.csv (points per axis).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Replications whose posterior intensities are written to intensities.csv.
    #[arg(long, value_delimiter = ',')]
    pub intensity_ids: Option<Vec<String>>,

    /// Fitted model.json (variance).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Confidence level of the intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Draws of the limiting law when some coefficient sits on the boundary.
    #[arg(long)]
    pub delta_draws: Option<usize>,
    /// Estimate the information from this many patterns simulated from the fit.
    #[arg(long)]
    pub generative: Option<usize>,
    /// Simulate the limiting law even when the closed form applies.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub force_draws: bool,
    /// Write the raw limiting-law draws to draws.csv.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub draws_csv: bool,
    /// Activation tolerance for zero coefficients (default 1e-6 times the largest).
    #[arg(long)]
    pub activation_tol: Option<f64>,

    /// What to simulate.
    #[arg(long, value_enum)]
    pub what: Option<SimulateWhat>,
    /// Generating model for simulate (1 or 2).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub gen_model: Option<u8>,
    /// Replications per simulated data set.
    #[arg(long)]
    pub n: Option<usize>,
    /// Smoothing policies reported by simulate table1.
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr; $($field:ident),* ; $($flag:ident),*) => {
        Opts {
            config: $flags.config,
            $($field: $flags.$field.or($file.$field),)*
            $($flag: $flags.$flag || $file.$flag,)*
        }
    };
}

impl Opts {
    /// Flags win over file values.
    pub fn over(self, file: Opts) -> Opts {
        overlay!(self, file;
            input, region, dim, basis, knots, centers, bandwidth, quadrature, p, p_grid, zeta, zeta_grid,
            folds, seed, mc_draws, reps, out, threads, max_iters, tol, objective_draws, heldout_draws, grid,
            intensity_ids, model, level, delta_draws, generative, activation_tol, what, gen_model, n, policy;
            force_draws, draws_csv)
    }

    /// Merge with the config file named by `--config`, if any.
    pub fn resolve_file(self) -> Result<Opts> {
        match self.config.clone() {
            None => Ok(self),
            Some(path) => {
                let file = load_config(&path)?;
                Ok(self.over(file.rebase(path.parent().unwrap_or(Path::new(".")))))
            }
        }
    }

    /// Resolve relative paths in a config file against the file's directory.
    fn rebase(mut self, dir: &Path) -> Opts {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = dir.join(&*x);
                }
            }
        };
        fix(&mut self.input);
        fix(&mut self.out);
        fix(&mut self.model);
        if let Some(RegionArg::File(x)) = self.region.as_mut() {
            if x.is_relative() {
                *x = dir.join(&*x);
            }
        }
        self
    }
}

pub fn load_config(path: &Path) -> Result<Opts> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Parse { path: path.into(), message: e.to_string() })
}
