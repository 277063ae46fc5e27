use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use monomdp::solver::{Lambda, Mode, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "monomdp", version, about = "Monotone-policy solver for finite-horizon MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a model and write trace.csv and policy.json.
    Solve(SolveArgs),
    /// Check the monotonicity assumptions A1-A4.
    Check(CheckArgs),
    /// Write a random model satisfying A1-A4.
    Generate(GenerateArgs),
    /// Iterations-to-threshold over a grid of rho values, both modes.
    Bench(BenchArgs),
}

/// Source of the optimal cost used for cost gaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Backward induction when unconstrained, otherwise a long plain run.
    Auto,
    Dp,
    LongRun,
    /// No reference: convergence is decided by the residual alone.
    None,
    Value(f64),
}

impl FromStr for Reference {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "dp" => Ok(Self::Dp),
            "long-run" => Ok(Self::LongRun),
            "none" => Ok(Self::None),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(Self::Value)
                .ok_or_else(|| format!("expected auto, dp, long-run, none or a number, got '{v}'")),
        }
    }
}

/// Settings shared by `solve` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    /// Regularisation weight, or `auto`.
    #[arg(long, default_value = "auto")]
    pub lambda: Lambda,
    #[arg(long, default_value_t = 10)]
    pub i_admm: usize,
    #[arg(long, default_value_t = 5)]
    pub i_sg: usize,
    /// Budget over ADMM and subgradient steps combined.
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eps_cost: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_res: f64,
    /// Switch to plain ADMM after this many iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub boost_iter: usize,
}

impl TuningArgs {
    pub fn config(&self, rho: f64, mode: Mode) -> SolverConfig {
        SolverConfig {
            rho,
            lambda: self.lambda,
            i_admm: self.i_admm,
            i_sg: self.i_sg,
            max_iter: self.max_iter,
            eps_cost: self.eps_cost,
            eps_res: self.eps_res,
            boost_iter: self.boost_iter,
            mode,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `plain` or `regularized`.
    #[arg(long, default_value = "regularized")]
    pub mode: Mode,
    #[arg(long, default_value_t = 5.0)]
    pub rho: f64,
    /// `auto`, `dp`, `long-run`, `none` or a cost value.
    #[arg(long, default_value = "auto")]
    pub reference: Reference,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub x: usize,
    #[arg(long)]
    pub u: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub cost_scale: f64,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Model file; otherwise models are generated from --x/--u/--n and each seed.
    #[arg(long, conflicts_with_all = ["x", "u", "n", "seeds"])]
    pub model: Option<PathBuf>,
    #[arg(long, requires_all = ["u", "n"])]
    pub x: Option<usize>,
    #[arg(long)]
    pub u: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rhos: Vec<f64>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Output directory for table.csv, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}
