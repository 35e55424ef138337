mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "qdist",
    version,
    about = "Schedule, distribute and simulate parallel quantum programs"
)]
struct Cli {
    /// Print machine-readable JSON lines instead of a summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Cluster {
    /// Topology JSON file: {"qpus":[{"id":"QPU_0","qubits":3}, ...]}.
    #[arg(long, conflicts_with = "qpus")]
    topology: Option<PathBuf>,
    /// Qubits per QPU, comma separated, e.g. 3,3,3.
    #[arg(long, value_delimiter = ',')]
    qpus: Vec<usize>,
}

#[derive(Debug, Args)]
struct Outputs {
    /// Write the execution trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the schedule and resource report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Accounting profile JSON for resource counts.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run circuit files as parallel programs and print their outputs.
    Run {
        /// Circuit JSON; repeat for several programs.
        #[arg(long = "circuit", required = true)]
        circuits: Vec<PathBuf>,
        #[command(flatten)]
        cluster: Cluster,
        #[arg(long, default_value_t = 1000)]
        shots: u32,
        #[arg(long)]
        seed: u64,
        /// Place programs on random free slots instead of filling QPUs in order.
        #[arg(long)]
        random_allocation: bool,
        /// Fail instead of warning when ancillas overflow a QPU.
        #[arg(long)]
        strict_ancilla: bool,
        #[command(flatten)]
        outputs: Outputs,
    },
    /// Phase estimation of diag(1, e^{2πiθ}) split over two QPUs.
    Qpe {
        /// Measurement qubits.
        #[arg(long)]
        n: usize,
        /// Eigenphase θ in [0, 1).
        #[arg(long)]
        phase: f64,
        #[arg(long, default_value_t = 1000)]
        shots: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        strict_ancilla: bool,
        #[command(flatten)]
        outputs: Outputs,
    },
    /// Energy of an ansatz under a Pauli-sum Hamiltonian, one program per term.
    Vqe {
        /// Terms JSON: [{"coeff":0.5,"pauli":"ZIXX"}, ...].
        #[arg(long)]
        terms: PathBuf,
        /// Ansatz circuit JSON.
        #[arg(long)]
        ansatz: PathBuf,
        #[command(flatten)]
        cluster: Cluster,
        /// Read expectations off the final state instead of sampling.
        #[arg(long, conflicts_with = "shots")]
        exact: bool,
        #[arg(long)]
        shots: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strict_ancilla: bool,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Power-law amplitude estimation.
    Plae {
        #[arg(long)]
        beta: f64,
        /// Number of query programs K.
        #[arg(long)]
        k: u32,
        /// Shots per query program.
        #[arg(long)]
        shots: u32,
        /// Success probability of a one-qubit rotation oracle.
        #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
        amplitude: Option<f64>,
        /// Oracle circuit JSON; requires --grover.
        #[arg(long, requires = "grover")]
        oracle: Option<PathBuf>,
        /// Grover iterate circuit JSON.
        #[arg(long, requires = "oracle")]
        grover: Option<PathBuf>,
        /// Logical qubit whose outcome 1 marks success.
        #[arg(long, default_value_t = 0)]
        good: usize,
        /// Likelihood grid resolution.
        #[arg(long, default_value_t = qdist_core::engine::DEFAULT_GRID)]
        grid: usize,
        #[command(flatten)]
        cluster: Cluster,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Swap-test k-means on CSV feature vectors.
    Kmeans {
        /// CSV file, one vector per row; a non-numeric first row is a header.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[command(flatten)]
        cluster: Cluster,
        #[arg(long, conflicts_with = "shots")]
        exact: bool,
        #[arg(long)]
        shots: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Operation counts of monolithic and split phase estimation as CSV.
    SweepQpe {
        /// Inclusive range of measurement-qubit counts, e.g. 1..11.
        #[arg(long, value_parser = commands::parse_range)]
        n: std::ops::RangeInclusive<usize>,
        /// Accounting profile JSON.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli.command, cli.json) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
