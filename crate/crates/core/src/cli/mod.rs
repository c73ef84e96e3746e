//! Command-line experiment runner.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser};

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use run::{run, RunContext, RunError, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "mcre",
    version,
    about = "Coupling, assumption checks and convergence estimators for Markov chains in random environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Check the contraction and minorization assumptions of the model.
    Verify(RunArgs),
    /// Coupling campaign: failure rates against the analytic bound.
    Couple(RunArgs),
    /// Total-variation decay curve between the two starting points.
    Tv(RunArgs),
    /// Alpha-mixing curve of the chain or the environment.
    Mix(RunArgs),
    /// SGLD VaR/CVaR run on a loss series.
    Var(RunArgs),
    /// Rate-template fits of a curve CSV.
    Fit(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("MCRE_LOG", "warn")).try_init();
    let (sub, args) = match cli.command {
        Command::Verify(a) => (Subcommand::Verify, a),
        Command::Couple(a) => (Subcommand::Couple, a),
        Command::Tv(a) => (Subcommand::Tv, a),
        Command::Mix(a) => (Subcommand::Mix, a),
        Command::Var(a) => (Subcommand::Var, a),
        Command::Fit(a) => (Subcommand::Fit, a),
    };
    match execute(sub, args) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("mcre {}: {e}", sub.name());
            e.exit_code()
        }
    }
}

fn execute(sub: Subcommand, args: RunArgs) -> Result<Vec<PathBuf>, RunError> {
    let (config, text) = load_config(&args.config)?;
    let base_dir = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let ctx = RunContext {
        seed: args.seed.unwrap_or(config.seed),
        out_dir: args.out.unwrap_or_else(|| base_dir.join(&config.output.dir)),
        config,
        config_text: text,
        base_dir,
    };
    let workers = match args.workers {
        Some(0) => return Err(ConfigError::at("--workers", "must be at least 1").into()),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| RunError::Io(format!("thread pool: {e}")))?;
    pool.install(|| run(sub, &ctx))
}
