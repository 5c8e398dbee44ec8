use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Open multitype SIR epidemics on directed trade networks.
///
/// Every subcommand is a pure function of the config bytes, the flags and the
/// seed. Reports go to stdout unless `--out` is given; a run manifest is
/// written next to the first output file.
#[derive(Debug, Parser)]
#[command(name = "netsir", version)]
pub struct Cli {
    /// Model configuration (JSON with keys n, B, b, d, theta, beta, gamma and optional N, x0, I0, time_unit).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Base seed of every random stream.
    #[arg(long, global = true, env = "EPI_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for ensembles and optimizer restarts [default: all cores]. Results do not depend on it.
    #[arg(long, global = true, value_name = "K")]
    pub workers: Option<usize>,

    /// Run manifest path [default: <first output>.manifest.json; none when everything goes to stdout].
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Demography matrix, z*, offspring matrix, R0, growth rate and outbreak probabilities.
    Analyze(AnalyzeArgs),
    /// Extinction probabilities q, p = 1 - q and the outbreak probability of I0.
    OutbreakProb(OutbreakProbArgs),
    /// One exact stochastic trajectory as an event CSV plus a JSON stats sidecar.
    Simulate(SimulateArgs),
    /// Replicated simulation experiments with a JSON report and per-replicate CSV.
    Ensemble(EnsembleArgs),
    /// Deterministic limit on a uniform time grid as CSV.
    Ode(OdeArgs),
    /// Endemic equilibrium of the SIR ODE with its stability class.
    Equilibrium(EquilibriumArgs),
    /// Minimal large-deviation action to leave a ball around the equilibrium.
    ExitCost(ExitCostArgs),
    /// Ratio estimates of the rates from census and movement CSVs, written as a config.
    Calibrate(CalibrateArgs),
    /// Random strongly connected network with cattle-like rates, written as a config.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Fixed-point tolerance on the sup-norm gap of successive iterates.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    /// Floating-point width of the computation.
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    /// Report path (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutbreakProbArgs {
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    /// Start from a single infective in node K (1-based) instead of the config's I0.
    #[arg(long, value_name = "K")]
    pub seed_node: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Process {
    /// Demography only.
    Population,
    Sir,
    /// Linear branching approximation of the infectives (runs to extinction or --cap).
    Branching,
    /// SIR and branching processes driven by shared random streams.
    Coupled,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Process::Sir)]
    pub process: Process,
    /// Population scale; overrides the config's N.
    #[arg(long = "N", value_name = "N")]
    pub scale: Option<f64>,
    /// Time horizon (ignored by the branching process).
    #[arg(long, default_value_t = 100.0)]
    pub t_end: f64,
    /// Replica index; together with --seed it fixes the trajectory.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Infective cap of the branching process.
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: u64,
    /// Event CSV; stats go to <out>.stats.json and, for coupled runs, branching events to <out>.branching.csv.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Major-outbreak frequency of SIR replicates against the branching prediction.
    Outbreak,
    /// Time-averaged population against N·z*.
    Stationary,
    /// Sup-norm deviation of X/N from the linear flow, per scale.
    Lln,
    /// Empirical offspring generating function of one infective.
    Offspring,
    /// Extinction time and size of major outbreaks on an endemic model as N grows.
    Scaling,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Replicates (per scale for lln and scaling) [default: 10000 for outbreak and offspring, 200 otherwise].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Population scale for outbreak and stationary; overrides the config's N.
    #[arg(long = "N", value_name = "N")]
    pub scale: Option<f64>,
    /// Comma-separated scales for lln [10,100,1000] and scaling [10,20,40,80].
    #[arg(long, value_delimiter = ',')]
    pub scales: Vec<f64>,
    /// Horizon for stationary [burn-in + 1000] and lln [100].
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Averaging start for stationary [10/|spectral abscissa|].
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Sampling step of the lln sup norm.
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Source node of the offspring experiment (1-based).
    #[arg(long, default_value_t = 1)]
    pub source: usize,
    /// Comma-separated PGF argument, one entry per node; repeatable [default: 0 and 1/2 everywhere].
    #[arg(long, value_delimiter = ',', action = clap::ArgAction::Append)]
    pub probe: Vec<f64>,
    /// Censoring time of the scaling experiment [default: 10^4 over the slowest rate].
    #[arg(long)]
    pub t_cap: Option<f64>,
    /// Bootstrap resamples for the scaling slopes.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Report path (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-replicate summaries (CSV).
    #[arg(long, value_name = "FILE")]
    pub replicas: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OdeMode {
    /// Population flow x' = A x + B from x0.
    Linear,
    /// SIR system from (x0 - I0/N, I0/N, 0).
    Sir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Denominator {
    /// Current node total s + i + r.
    Total,
    /// Fixed equilibrium population z*.
    Zstar,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[arg(long, value_enum, default_value_t = OdeMode::Sir)]
    pub mode: OdeMode,
    #[arg(long, value_enum, default_value_t = Denominator::Total)]
    pub denominator: Denominator,
    #[arg(long, default_value_t = 100.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Trajectory CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[arg(long, value_enum, default_value_t = Denominator::Total)]
    pub denominator: Denominator,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExitProcess {
    /// From z* in the n-dimensional population space.
    Population,
    /// From the endemic equilibrium in the 3n-dimensional SIR space.
    Sir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Norm {
    Two,
    Inf,
}

#[derive(Debug, Args)]
pub struct ExitCostArgs {
    #[arg(long, value_enum, default_value_t = ExitProcess::Population)]
    pub process: ExitProcess,
    /// Ball radius in scaled coordinates.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Norm::Two)]
    pub norm: Norm,
    /// Path segments.
    #[arg(long, default_value_t = 64, value_name = "M")]
    pub grid: usize,
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    /// Path duration.
    #[arg(long, default_value_t = 10.0, value_name = "T")]
    pub horizon: f64,
    /// Box bound on the conjugate variable of the local rate.
    #[arg(long, default_value_t = 40.0)]
    pub u_max: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Optimal path CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Action report (JSON) [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// node_id,avg_population,births,deaths,external_in
    #[arg(long, value_name = "FILE")]
    pub nodes: PathBuf,
    /// src_id,dst_id,count
    #[arg(long, value_name = "FILE")]
    pub movements: PathBuf,
    /// Length of the calibration period.
    #[arg(long, default_value = "day")]
    pub time_unit: String,
    /// Floor for unobserved transfer rates [default: 1e-6 per year in --time-unit].
    #[arg(long)]
    pub floor: Option<f64>,
    /// Uniform infection rate written into the config.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Uniform recovery rate written into the config.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Config path (JSON); node order is sorted node_id.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of nodes.
    #[arg(long)]
    pub n: usize,
    /// Probability of each ordered edge.
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
