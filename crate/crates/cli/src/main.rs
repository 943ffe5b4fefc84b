use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod input;
mod output;

#[derive(Parser, Debug)]
#[command(
    name = "stochmatch",
    version,
    about = "Stochastic matching models on multigraphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Graph file (JSON with `nodes`, `edges`, `self_loops`).
    #[arg(long)]
    pub graph: PathBuf,
    /// Output directory for artifacts; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Measure {
    /// Measure file, or `uniform` / `deg`.
    #[arg(long, default_value = "uniform")]
    pub mu: String,
}

#[derive(Args, Debug, Clone)]
pub struct Run {
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,
    /// Defaults to 1% of the steps.
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftFn {
    Quadratic,
    Linear,
    Ldelta,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Graph statistics, maximal subgraph, blow-up, bipartite and multipartite structure.
    Info {
        #[command(flatten)]
        common: Common,
    },
    /// Stability condition: margin and witness for `--mu`, or the empty-region verdict.
    Ncond {
        #[command(flatten)]
        common: Common,
        /// Measure file or `uniform` / `deg`; without it only the region is described.
        #[arg(long)]
        mu: Option<String>,
    },
    /// Degree measure `deg(i)/|E|` and its stability margin.
    Mudeg {
        #[command(flatten)]
        common: Common,
    },
    /// Normalising constant and product-form probabilities of short words under FCFM.
    StationaryFcfm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
    },
    /// Global balance residual of the product form over all words up to `--max-len`.
    VerifyBalance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Runs the chain and reports word frequencies up to `--max-len`.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        /// Policy file, inline JSON or shorthand (`fcfm`, `lcfm`, `uniform`, `ml`, `ms`).
        #[arg(long, default_value = "fcfm")]
        policy: String,
        #[command(flatten)]
        run: Run,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
    },
    /// Total variation between simulated frequencies and the FCFM product form.
    TvCompare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        #[arg(long, default_value = "fcfm")]
        policy: String,
        #[command(flatten)]
        run: Run,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
    },
    /// Empirical local balance between the backward chain and forward words.
    Reversibility {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Excursion lengths and partner-class frequencies along one FCFM run.
    Excursions {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        #[arg(long, default_value_t = 200_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest accepted per-class deviation, in standard deviations.
        #[arg(long, default_value_t = 4.0)]
        tol: f64,
    },
    /// Exact one-step drift and identity residuals for every word up to `--max-len`.
    Drift {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        #[arg(long, default_value = "fcfm")]
        policy: String,
        #[arg(long = "fn", value_enum, default_value_t = DriftFn::Quadratic)]
        function: DriftFn,
        /// `δ` for `ldelta`; defaults to the stability margin.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Emits the maximal subgraph (`--check`) or the minimal blow-up (`--blowup`).
    Transform {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "blowup", required_unless_present = "blowup")]
        check: bool,
        #[arg(long)]
        blowup: bool,
        /// With `--blowup`, also emit the evenly split measure.
        #[arg(long)]
        mu: Option<String>,
    },
    /// Extends a measure to the blow-up.
    ExtendMeasure {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        /// Fractions kept by each self-looped node (file or inline JSON); even split by default.
        #[arg(long)]
        split: Option<String>,
    },
    /// Drift identities between the graph, its blow-up and its maximal subgraph.
    VerifyIdentities {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        measure: Measure,
        /// Policies to check; FCFM, ML, MS and uniform when omitted.
        #[arg(long)]
        policy: Vec<String>,
        #[arg(long, default_value_t = 5)]
        max_len: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

/// Why a command did not succeed.
pub enum Failure {
    /// Bad files, arguments, or a model outside the command's domain.
    Input(anyhow::Error),
    /// The command ran and its check failed.
    Verification(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<stochmatch::Error> for Failure {
    fn from(e: stochmatch::Error) -> Self {
        Failure::Input(e.into())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    use commands as c;
    match cli.command {
        Command::Info { common } => c::info(&common),
        Command::Ncond { common, mu } => c::ncond(&common, mu.as_deref()),
        Command::Mudeg { common } => c::mudeg(&common),
        Command::StationaryFcfm {
            common,
            measure,
            max_len,
        } => c::stationary_fcfm(&common, &measure, max_len),
        Command::VerifyBalance {
            common,
            measure,
            max_len,
            tol,
        } => c::verify_balance(&common, &measure, max_len, tol),
        Command::Simulate {
            common,
            measure,
            policy,
            run,
            max_len,
        } => c::simulate(&common, &measure, &policy, &run, max_len),
        Command::TvCompare {
            common,
            measure,
            policy,
            run,
            max_len,
            tol,
        } => c::tv_compare(&common, &measure, &policy, &run, max_len, tol),
        Command::Reversibility {
            common,
            measure,
            steps,
            seed,
        } => c::reversibility(&common, &measure, steps, seed),
        Command::Excursions {
            common,
            measure,
            steps,
            seed,
            tol,
        } => c::excursions(&common, &measure, steps, seed, tol),
        Command::Drift {
            common,
            measure,
            policy,
            function,
            delta,
            max_len,
            tol,
        } => c::drift(&common, &measure, &policy, function, delta, max_len, tol),
        Command::Transform {
            common,
            check,
            blowup: _,
            mu,
        } => c::transform(&common, check, mu.as_deref()),
        Command::ExtendMeasure {
            common,
            measure,
            split,
        } => c::extend_measure(&common, &measure, split.as_deref()),
        Command::VerifyIdentities {
            common,
            measure,
            policy,
            max_len,
            tol,
        } => c::verify_identities(&common, &measure, &policy, max_len, tol),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
