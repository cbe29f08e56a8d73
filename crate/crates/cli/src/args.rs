use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use mgpert::OptionKind;

/// Perturbative Merton-Garman pricing, Monte Carlo benchmarks and oracle checks.
///
/// Values not given as flags are read from `--config`, then fall back to the
/// built-in defaults (the 30-day static scenario).
#[derive(Debug, Parser)]
#[command(name = "mgpert", version)]
pub struct Cli {
    /// Flat TOML file with keys named after the long flags (`steps_per_day`, ...).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; 0 or unset uses all cores. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leading-order price C0 + C1, printed as JSON.
    Price(PriceArgs),
    /// Monte Carlo price of one contract under the full model, printed as JSON.
    McPrice(McPriceArgs),
    /// Heat-kernel quadrature against the closed form, PDE residuals and the
    /// symmetry-breaking term report.
    OracleCheck(OracleArgs),
    /// Calibration experiments; CSVs go to the output directory.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Sigma-only fits to one Monte Carlo cross-section per starting volatility.
    Static(StaticArgs),
    /// Full fits along simulated weekly option panels.
    Timeseries(TimeseriesArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Mean-reversion speed kappa [1/year].
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Long-run variance theta [1/year].
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Vol-of-vol xi [year^(alpha-1) / year^(1/2)].
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<f64>,
    /// Spot/variance correlation rho, in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Variance elasticity alpha [dimensionless].
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Continuously compounded risk-free rate [1/year].
    #[arg(long, allow_hyphen_values = true)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ContractArgs {
    /// Underlying price [currency].
    #[arg(long, allow_hyphen_values = true)]
    pub spot: Option<f64>,
    /// Strike [currency].
    #[arg(long, allow_hyphen_values = true)]
    pub strike: Option<f64>,
    /// Time to maturity [calendar days, 365 per year].
    #[arg(long, allow_hyphen_values = true)]
    pub days: Option<f64>,
    /// Current instantaneous variance [1/year].
    #[arg(long, allow_hyphen_values = true)]
    pub variance: Option<f64>,
    /// call or put.
    #[arg(long)]
    pub kind: Option<OptionKind>,
}

#[derive(Debug, Clone, Args)]
pub struct PertArgs {
    /// Averaged volatility sigma of the symmetric model [1/year^(1/2)], default 0.18.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// Reference variance V0 of the heat coordinates [1/year].
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    /// Simulated paths [count].
    #[arg(long)]
    pub paths: Option<usize>,
    /// Euler steps per calendar day [count].
    #[arg(long)]
    pub steps_per_day: Option<usize>,
    /// Antithetic pairs (true/false); needs an even path count.
    #[arg(long, action = ArgAction::Set, value_name = "BOOL")]
    pub antithetic: Option<bool>,
    /// Stratify the first spot shock (true/false).
    #[arg(long, action = ArgAction::Set, value_name = "BOOL")]
    pub stratified: Option<bool>,
    /// Strata [count]; must divide the number of independent draws.
    #[arg(long)]
    pub n_strata: Option<usize>,
    /// Random seed [integer].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub contract: ContractArgs,
    #[command(flatten)]
    pub pert: PertArgs,
}

#[derive(Debug, Clone, Args)]
pub struct McPriceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub contract: ContractArgs,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub pert: PertArgs,
    /// Underlying price [currency].
    #[arg(long, allow_hyphen_values = true)]
    pub spot: Option<f64>,
    /// Time to maturity [calendar days].
    #[arg(long, allow_hyphen_values = true)]
    pub days: Option<f64>,
    /// Points per axis of the (moneyness, volatility) grid [count].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Gauss-Legendre nodes per spatial axis [count].
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Gauss-Legendre nodes in time [count].
    #[arg(long)]
    pub time_nodes: Option<usize>,
    /// Spatial window half-width [standard deviations].
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Finite-difference step for x-derivatives [heat-coordinate units].
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Relative agreement required between a pass and its refinement [fraction].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Random parameter draws for the symmetry-breaking sweep [count].
    #[arg(long)]
    pub draws: Option<usize>,
    /// Seed of the sweep [integer].
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination [path]; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StaticArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Starting volatilities, comma separated [1/year^(1/2)].
    #[arg(long, value_delimiter = ',')]
    pub v_grid: Option<Vec<f64>>,
    /// Maturity of the cross-section [calendar days].
    #[arg(long)]
    pub maturity_days: Option<u32>,
    /// Output directory [path]; created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TimeseriesArgs {
    /// Data set ids 1-4, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dataset: Option<Vec<u8>>,
    /// 10 paths x 12 observations x 10^4 simulations (the default).
    #[arg(long, conflicts_with = "full")]
    pub desk_scale: bool,
    /// 100 paths x 52 observations x 5 x 10^4 simulations.
    #[arg(long)]
    pub full: bool,
    /// Override the number of latent sample paths [count].
    #[arg(long)]
    pub sample_paths: Option<usize>,
    /// Override the number of weekly observations per path [count].
    #[arg(long)]
    pub obs: Option<usize>,
    /// Override the simulations per option [count].
    #[arg(long)]
    pub sims: Option<usize>,
    /// Random seed [integer].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [path]; created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
