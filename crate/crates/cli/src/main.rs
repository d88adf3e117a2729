mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shellspec_core::verify::VerifyLevel;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "shellspec", version, about = "Gap spectra of Dirac operators with δ-shell interactions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to the config's "output" field, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (1 gives bit-identical outputs).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Sample σ_min over the gap and bracket its dips.
    Scan(RunArgs),
    /// Refine every bracket into eigenvalues and densities.
    Eigs(RunArgs),
    /// Coupling inversion and charge-conjugation checks.
    Symmetry(RunArgs),
    /// Nonrelativistic limit sweep over c_list.
    Nonrel(RunArgs),
    /// Invariant suite.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| CliError::Output { path: dir.display().to_string(), source })
}

fn run_task(args: &RunArgs, task: fn(&RunConfig, &Path) -> Result<String, CliError>) -> Result<String, CliError> {
    set_threads(args.threads)?;
    let config = RunConfig::load(&args.config)?;
    let out = args.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    prepare_out(&out)?;
    log::info!("coupling class {:?}", config.classification());
    task(&config, &out)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Scan(a) => run_task(&a, commands::scan),
        Command::Eigs(a) => run_task(&a, commands::eigs),
        Command::Symmetry(a) => run_task(&a, commands::symmetry),
        Command::Nonrel(a) => run_task(&a, commands::nonrel),
        Command::Verify { level, config, out, threads } => {
            set_threads(threads)?;
            if let Some(path) = config {
                RunConfig::load(&path)?;
            }
            if let Some(dir) = &out {
                prepare_out(dir)?;
            }
            let level = match level {
                Level::Quick => VerifyLevel::Quick,
                Level::Full => VerifyLevel::Full,
            };
            commands::verify(level, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
