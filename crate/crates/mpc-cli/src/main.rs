use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpc_cli::commands::{eval, gendata, regret, sweep, train};
use mpc_cli::error::Result;
use mpc_cli::setup::resolve_config;
use mpc_cli::Config;

#[derive(Parser)]
#[command(name = "mpc", version, about = "Evidential training with a meta-policy controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in preset name or path to a config file
    #[arg(long)]
    config: String,
    /// Override a config entry as section.key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Override the run seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write epoch logs, reports and records
    Train(RunArgs),
    /// Run a grid of training runs and merge the results
    Sweep(RunArgs),
    /// Online-gradient-descent regret traces and bound checks
    Regret(RunArgs),
    /// Generate a synthetic dataset on disk
    GenData(RunArgs),
    /// Recompute metrics from a saved records file
    Eval {
        /// Path to a records.csv written by `train`
        records: PathBuf,
        /// Number of equal-width confidence bins
        #[arg(long, default_value_t = 15)]
        bins: usize,
        /// Optional file to write the report to
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn load(args: &RunArgs) -> Result<Config> {
    let mut cfg = resolve_config(&args.config)?;
    for spec in &args.sets {
        cfg.set(spec)?;
    }
    cfg.validate_keys()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = load(&args)?;
            train::cmd_train(&cfg, args.seed, &args.out, args.quiet)
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            sweep::cmd_sweep(&cfg, args.seed, &args.out, args.quiet)
        }
        Command::Regret(args) => {
            let cfg = load(&args)?;
            regret::cmd_regret(&cfg, args.seed, &args.out, args.quiet)
        }
        Command::GenData(args) => {
            let cfg = load(&args)?;
            gendata::cmd_gendata(&cfg, args.seed, &args.out, args.quiet)
        }
        Command::Eval { records, bins, out, quiet } => {
            eval::cmd_eval(&records, bins, out.as_deref(), quiet)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
