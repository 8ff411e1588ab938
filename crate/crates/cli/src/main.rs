//! Command-line front end: one subcommand per experiment kind, each driven by
//! a config file and writing into its own output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clockrobust::config::{self, Algorithm, ExperimentConfig};
use clockrobust::runner;
use clockrobust::Error;

#[derive(Parser)]
#[command(name = "clockrobust", version, about = "Clock-noise robust quantum control synthesis")]
struct Cli {
    /// Worker threads for sampling and sweeps (default: all cores).
    #[arg(long, global = true, env = "CLOCKROBUST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the ideal gate error.
    Grape(RunArgs),
    /// GRAPE followed by homotopic refinement of the estimated noise error.
    Homotopic(RunArgs),
    /// Batch-stochastic optimization over sampled clock noise.
    Bgrape(RunArgs),
    /// Estimate the noise error of the config's initial schedule.
    Estimate(RunArgs),
    /// Monte-Carlo test of the config's initial schedule.
    Test(RunArgs),
    /// Latency sweep of the config's initial schedule.
    Sweep(RunArgs),
    /// All three optimizers with and without jitter, plus a summary table.
    Replicate(ReplicateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the initial-guess, training-noise and b-GRAPE seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReplicateArgs {
    /// Base config (defaults to the built-in CNOT benchmark).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", failure("threads", runner::EXIT_FAILURE, &e.to_string()));
            return ExitCode::from(runner::EXIT_FAILURE as u8);
        }
    }
    let code = match cli.command {
        Command::Grape(a) => single(Algorithm::Grape, a),
        Command::Homotopic(a) => single(Algorithm::Homotopic, a),
        Command::Bgrape(a) => single(Algorithm::Bgrape, a),
        Command::Estimate(a) => single(Algorithm::Estimate, a),
        Command::Test(a) => single(Algorithm::Test, a),
        Command::Sweep(a) => single(Algorithm::Sweep, a),
        Command::Replicate(a) => replicate(a),
    };
    ExitCode::from(code as u8)
}

fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let cfg = match path {
        Some(p) => config::load_config(p)?,
        None => config::benchmark_config(),
    };
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn single(algorithm: Algorithm, args: RunArgs) -> i32 {
    let result = load(Some(&args.config), args.seed).and_then(|mut cfg| {
        cfg.run.algorithm = algorithm;
        runner::run_experiment(&cfg, &args.out)
    });
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
            let code = outcome.exit_code();
            if code != runner::EXIT_OK {
                let reason = outcome.summary.note.as_deref().unwrap_or("not converged");
                eprintln!("{}", failure("not_converged", code, reason));
            }
            code
        }
        Err(e) => report(&e),
    }
}

fn replicate(args: ReplicateArgs) -> i32 {
    match load(args.config.as_deref(), args.seed).and_then(|cfg| runner::replicate(&cfg, &args.out)) {
        Ok(rows) => {
            println!("{}", serde_json::to_string_pretty(&rows).expect("summary serializes"));
            runner::EXIT_OK
        }
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    let code = runner::exit_code(e);
    let kind = match code {
        runner::EXIT_CONFIG => "config",
        runner::EXIT_NOT_CONVERGED => "not_converged",
        runner::EXIT_IO => "io",
        _ => "failure",
    };
    eprintln!("{}", failure(kind, code, &e.to_string()));
    code
}

fn failure(kind: &str, code: i32, message: &str) -> String {
    serde_json::json!({ "status": kind, "exit_code": code, "reason": message }).to_string()
}
