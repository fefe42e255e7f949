//! Command-line surface.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isingkit::instances::InstanceClass;

#[derive(Debug, Parser)]
#[command(
    name = "isingkit",
    version,
    about = "Ising spin-glass instances, solvers, metrics and annealing simulation",
    after_help = "Set ISINGKIT_THREADS to bound the worker pool. Results do not depend on it."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate benchmark instances as COO files plus a manifest.
    Gen(GenArgs),
    /// Run one solver on one instance and write a samples file.
    Solve(SolveArgs),
    /// Median approximation-ratio and diversity curves over instances.
    Bench(BenchArgs),
    /// Temperature estimate, uncertainty-relation bounds and operating mode.
    Thermo(ThermoArgs),
    /// Closed-system transverse-field annealing of a small instance.
    Simulate(SimulateArgs),
    /// Time-to-target, success fraction and diversity of sample files.
    Metrics(MetricsArgs),
}

/// `RxCxT`: rows, columns and spins per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeArg {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: usize,
}

impl FromStr for LatticeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let parsed: Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
        match parsed.as_deref() {
            Ok([rows, cols, cell_size]) => Ok(LatticeArg {
                rows: *rows,
                cols: *cols,
                cell_size: *cell_size,
            }),
            _ => Err(format!("expected ROWSxCOLSxCELL, got '{s}'")),
        }
    }
}

fn parse_class(s: &str) -> Result<InstanceClass, String> {
    s.parse().map_err(|e: isingkit::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Instance class: rau, rco or cbfm-p.
    #[arg(long, value_parser = parse_class)]
    pub class: InstanceClass,
    /// King lattice as ROWSxCOLSxCELL.
    #[arg(long, required_unless_present = "graph", conflicts_with = "graph")]
    pub lattice: Option<LatticeArg>,
    /// Drop diagonal cell links (square grid of cells).
    #[arg(long, requires = "lattice")]
    pub grid: bool,
    /// COO file whose coupling pattern is the graph.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Instance `k` is drawn with seed `seed + k`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// File prefix; defaults to the class name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Bruteforce,
    Sa,
    Pa,
    Sbm,
    Peps,
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformSet {
    Identity,
    All,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// COO instance file.
    pub instance: PathBuf,
    #[arg(long, value_enum)]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Independent replicas (sa, sbm, descent) or trajectories (pa).
    #[arg(long)]
    pub replicas: Option<usize>,
    /// SA temperature steps.
    #[arg(long)]
    pub temperature_steps: Option<usize>,
    /// SA sweeps per temperature.
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// PA / SBM integration steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of lowest states returned by bruteforce.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// PEPS lattice as ROWSxCOLSxCELL.
    #[arg(long)]
    pub lattice: Option<LatticeArg>,
    /// PEPS lattice without diagonal cell links.
    #[arg(long)]
    pub grid: bool,
    /// PEPS boundary bond dimension.
    #[arg(long, default_value_t = 32)]
    pub chi: usize,
    /// PEPS inverse temperature.
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// PEPS beam width.
    #[arg(long, default_value_t = 256)]
    pub max_states: usize,
    /// PEPS relative probability cutoff.
    #[arg(long, default_value_t = 0.0)]
    pub cutoff: f64,
    /// PEPS lattice orientations to search.
    #[arg(long, value_enum, default_value_t = TransformSet::Identity)]
    pub transforms: TransformSet,
    /// PEPS droplet energy window above the best state.
    #[arg(long, requires = "droplet_min_hamming")]
    pub droplet_max_energy: Option<f64>,
    /// PEPS droplet minimum Hamming distance from accepted states.
    #[arg(long, requires = "droplet_max_energy")]
    pub droplet_min_hamming: Option<usize>,
    /// Record this run time instead of the measured one, making the
    /// artifact byte-reproducible.
    #[arg(long)]
    pub t_run: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Approximation-ratio cutoff.
    #[arg(long, default_value_t = 0.01)]
    pub ratio: f64,
    /// Target confidence for time-to-target.
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    /// Minimum Hamming distance between diverse solutions, as a fraction of N.
    #[arg(long, default_value_t = 0.5)]
    pub independence: f64,
    /// Greedy restarts of the diversity estimate.
    #[arg(long, default_value_t = 100)]
    pub restarts: usize,
    /// Seed of the diversity estimate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Instance manifest written by `gen`; files resolve relative to it.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Samples files written by `solve`.
    #[arg(long, num_args = 1.., required = true)]
    pub samples: Vec<PathBuf>,
    /// Time budgets in seconds; defaults to every distinct run time.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<f64>>,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// JSON table to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV copy of the curve table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThermoArgs {
    /// COO instance file.
    #[arg(long)]
    pub model: PathBuf,
    /// Samples file of initial configurations.
    #[arg(long)]
    pub initial: PathBuf,
    /// Samples file of final configurations, paired with `--initial` by position.
    #[arg(long = "final")]
    pub final_: PathBuf,
    /// Inverse temperature of the computational system.
    #[arg(long)]
    pub beta1: f64,
    /// Upper end of the temperature search bracket.
    #[arg(long, default_value_t = isingkit::thermo::BETA_MAX)]
    pub beta_max: f64,
    /// Ground energy; computed exactly for small instances when absent.
    #[arg(long)]
    pub ground_energy: Option<f64>,
    /// Measured mean bath energy change, enabling direct mode classification.
    #[arg(long, allow_hyphen_values = true)]
    pub de2: Option<f64>,
    /// Grid coordinates copied into the record.
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathKind {
    Forward,
    Reverse,
    Pause,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// COO instance file (at most 12 spins).
    #[arg(long)]
    pub model: PathBuf,
    /// Total anneal time.
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = PathKind::Forward)]
    pub schedule: PathKind,
    /// Turning point of reverse schedules.
    #[arg(long)]
    pub s_a: Option<f64>,
    /// CSV envelope with columns s, A, B; linear envelopes when absent.
    #[arg(long)]
    pub envelope: Option<PathBuf>,
    /// Standard deviation of coupling noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Number of noise draws.
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Earlier simulate record to compare against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// COO instance file.
    #[arg(long)]
    pub instance: PathBuf,
    /// Samples files, one per run.
    #[arg(long, num_args = 1.., required = true)]
    pub samples: Vec<PathBuf>,
    /// Reference energy; defaults to the lowest energy across the files.
    #[arg(long, allow_hyphen_values = true)]
    pub e_best: Option<f64>,
    /// Absolute success threshold instead of the relative one.
    #[arg(long, allow_hyphen_values = true)]
    pub target_energy: Option<f64>,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long)]
    pub out: PathBuf,
}
