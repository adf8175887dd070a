mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

/// Environment variable holding the default RNG seed.
pub const SEED_ENV: &str = "SPARSE_HINF_SEED";

#[derive(Debug, Parser)]
#[command(name = "sparse-hinf", version, about = "Sparse state feedback with a certified H-infinity level")]
#[command(args_override_self = true)]
pub struct Cli {
    /// JSON file whose keys mirror the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Default seed for every random draw.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the stage-one LMIs and write the ellipsoid of admissible gains.
    Synthesize(SynthesizeArgs),
    /// Sparsify by re-weighted l1 minimization inside the shrunk ellipsoid.
    SparsifyL1(L1Args),
    /// Sparsify by greedy entry elimination inside the shrunk ellipsoid.
    SparsifyGreedy(GreedyArgs),
    /// Generate a random plant.
    Gen(GenArgs),
    /// Sweep the shrink factor for both sparsifiers.
    Sweep(SweepArgs),
    /// Monte-Carlo fragility study of a gain.
    Perturb(PerturbArgs),
    /// Closed-loop H-infinity norm of a plant under a gain.
    Hinf(HinfArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Feasibility,
    MaxMargin,
    Ball,
}

#[derive(Debug, Clone, Args)]
pub struct SynthesisFlags {
    /// Stage-one selection among feasible points.
    #[arg(long, value_enum, default_value = "feasibility")]
    pub objective: ObjectiveArg,
    /// Bound on the condition number of the Lyapunov matrix (0 disables).
    #[arg(long, default_value_t = 1e6)]
    pub condition_cap: f64,
    /// Margin for strict inequalities (default scales with the plant).
    #[arg(long)]
    pub strictness_eps: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub solver_tol: f64,
    #[arg(long)]
    pub allow_theta_above_one: bool,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// Attenuation level; defaults to 1.25 times the smallest feasible level.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub synthesis: SynthesisFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Spectral,
    Frobenius,
}

#[derive(Debug, Args)]
pub struct L1Args {
    #[arg(long)]
    pub region: PathBuf,
    #[arg(long)]
    pub theta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub zeta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_d: f64,
    #[arg(long, default_value_t = 20)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 4)]
    pub reweight_iters: usize,
    #[arg(long, default_value_t = 5e-5)]
    pub truncation: f64,
    #[arg(long, value_enum, default_value = "spectral")]
    pub norm: NormArg,
    /// Plant used to verify the H-infinity level of the result.
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long)]
    pub allow_theta_above_one: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriterionArg {
    Maxeig,
    Trace,
    Logdet,
}

#[derive(Debug, Args)]
pub struct GreedyArgs {
    #[arg(long)]
    pub region: PathBuf,
    #[arg(long)]
    pub theta: f64,
    #[arg(long, value_enum, default_value = "maxeig")]
    pub criterion: CriterionArg,
    /// Stop after this many eliminations.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 1e-12)]
    pub power_tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub power_max_iters: usize,
    #[arg(long, default_value_t = 25)]
    pub recompute_period: usize,
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long)]
    pub allow_theta_above_one: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Gaussian,
    Spatial,
}

#[derive(Debug, Clone, Args)]
pub struct PlantFlags {
    /// State dimension (agent count for the spatial family).
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    /// Input dimension of the Gaussian family (defaults to n).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Connectivity radius of the spatial family.
    #[arg(long, default_value_t = 0.25)]
    pub r: f64,
    #[arg(long, default_value_t = 4.0)]
    pub bv_scale: f64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub family: Family,
    #[command(flatten)]
    pub plant: PlantFlags,
    #[arg(long)]
    pub out: PathBuf,
    /// Edge list of the plant coupling graph (spatial family).
    #[arg(long)]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Plant file; alternatively generate plants with --family.
    #[arg(long, conflicts_with = "family")]
    pub system: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    #[command(flatten)]
    pub plant: PlantFlags,
    /// Seeds of the generated plants (default: the global seed).
    #[arg(long, action = ArgAction::Set, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Attenuation level; defaults to 1.25 times each plant's floor.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
    pub thetas: Vec<f64>,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "l1,greedy")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub synthesis: SynthesisFlags,
    /// Plot table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub gain: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.5)]
    pub magnitude: f64,
    /// Labels for the CDF table.
    #[arg(long, default_value_t = f64::NAN)]
    pub theta: f64,
    #[arg(long, default_value = "")]
    pub method: String,
    /// Empirical CDF table (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HinfArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub gain: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Also report the peak over this many log-spaced frequencies.
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    // later occurrences of a flag replace earlier ones, so explicit flags
    // override config entries
    let matches = Cli::command()
        .mut_subcommands(|s| s.args_override_self(true))
        .get_matches_from(args);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
