use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::grid::KappaGrid;

#[derive(Debug, Parser)]
#[command(name = "lyapcert", version, about = "Quadratic Lyapunov certificates for first-order methods")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify the smallest rate of one method and print the certificate.
    Rate(RateArgs),
    /// Tabulate certified rates over a condition-number grid.
    Sweep(SweepArgs),
    /// Check a certificate file, or the round trip of a sweep table.
    Check(CheckArgs),
    /// Run a method on a random test function and print its progress.
    Simulate(SimulateArgs),
    /// Find the restart period with the best per-gradient rate.
    RestartOpt(RestartOptArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Gm,
    Hbm,
    Fgm,
    Tmm,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ElsName {
    Gd,
    Hbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Restrict {
    None,
    LambdaZero,
    PosdefShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FunctionName {
    Quadratic,
    Lse,
}

#[derive(Debug, Clone, Args)]
pub struct ClassArgs {
    /// Strong convexity modulus.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Smoothness constant.
    #[arg(long = "L", default_value_t = 10.0)]
    pub l: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub tol_rho: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub eps_feas: f64,
    #[arg(long, default_value_t = 1.5)]
    pub rho_max: f64,
}

/// Which analysis to run: a fixed-step method, a line-search variant or a
/// restarted method.
#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, conflicts_with_all = ["els", "restart"])]
    pub method: Option<MethodName>,
    /// Gradient descent or heavy ball with exact (subspace) line search.
    #[arg(long, value_enum, conflicts_with = "restart")]
    pub els: Option<ElsName>,
    /// Fast gradient method restarted every N steps.
    #[arg(long)]
    pub restart: Option<usize>,
    /// Degree of a custom method.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "none")]
    pub restrict: Restrict,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub class: ClassArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the certificate here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<MethodName>,
    /// Restriction modes applied to every method in `--methods`.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub restrict: Vec<Restrict>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub els: Vec<ElsName>,
    /// Restart periods; adds the best of them and the reference bound.
    #[arg(long, value_delimiter = ',')]
    pub restart: Vec<usize>,
    /// Also search periods `1..=n` for the best-period column.
    #[arg(long, requires = "restart")]
    pub restart_nmax: Option<usize>,
    /// Grid as `min:max:count[log|lin]`.
    #[arg(long)]
    pub kappa: KappaGrid,
    /// Emit `-1/ln(rho)` instead of `rho`.
    #[arg(long)]
    pub iterations: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Certificate document.
    #[arg(required_unless_present = "table")]
    pub certificate: Option<PathBuf>,
    /// Check that a sweep table re-emits byte for byte.
    #[arg(long, conflicts_with = "certificate")]
    pub table: Option<PathBuf>,
    /// Random test functions to run; 0 checks the algebra only.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// Tolerance on constraint residuals.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Relative tolerance on each decrease step.
    #[arg(long, default_value_t = 1e-8)]
    pub decrease_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub class: ClassArgs,
    /// Take method and class from a certificate and report its energy.
    #[arg(long, conflicts_with_all = ["method", "els", "restart"])]
    pub certificate: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "quadratic")]
    pub function: FunctionName,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RestartOptArgs {
    #[command(flatten)]
    pub class: ClassArgs,
    /// Periods `1..=n_max` are tried.
    #[arg(long, default_value_t = 20)]
    pub n_max: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the certificate of the best period here.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
