use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use jumpgauss_cli::{run, CliError, ExperimentConfig, Overrides, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Rate-functional table η₁, η₂, η₃ with small-jump drift and variance.
    Eta,
    /// Generator gap against its bound on the (s, x) grid.
    GenCheck,
    /// Splitting-identity checks per band.
    SplitCheck,
    /// Coupled terminal samples of every configured scheme.
    Simulate,
    /// Weak-error table and log-log rate fit.
    WeakRate,
    /// KDE total-variation table and log-log rate fit.
    TvRate,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Eta => Subcommand::Eta,
            Command::GenCheck => Subcommand::GenCheck,
            Command::SplitCheck => Subcommand::SplitCheck,
            Command::Simulate => Subcommand::Simulate,
            Command::WeakRate => Subcommand::WeakRate,
            Command::TvRate => Subcommand::TvRate,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "jumpgauss",
    version,
    about = "Small-jump truncation vs Gaussian substitution experiments"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// INI-style configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    /// Comma-separated truncation levels.
    #[arg(long = "eps-list")]
    eps_list: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to JUMPGAUSS_THREADS, then all cores.
    #[arg(long, env = "JUMPGAUSS_THREADS")]
    threads: Option<usize>,
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    let cmd = Subcommand::from(cli.command);
    let overrides = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        eps_list: cli.eps_list,
        out: cli.out,
    };
    let config = ExperimentConfig::load(cli.config.as_deref(), &overrides, cmd.name())?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    log::info!(
        "{cmd}: config {} seed {} threads {}",
        config.hash(),
        config.seed,
        pool.current_num_threads()
    );
    pool.install(|| run(cmd, &config))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
