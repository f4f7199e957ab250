use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use permanence_cli::commands::{cmd_analyze, cmd_models, cmd_simulate, cmd_sweep, emit};
use permanence_cli::config;
use permanence_cli::{CliError, Format, Global};

#[derive(Parser)]
#[command(name = "permanence", version, about = "Permanence analysis for competitive Kolmogorov systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for all quasi-random sampling
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: logical cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Decide permanence of the configured system
    Analyze,
    /// Integrate trajectories and write one CSV per start plus summary.json
    Simulate,
    /// Analyze every cell of a 1- or 2-parameter grid
    Sweep,
    /// List the built-in growth laws
    Models,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let global = Global {
        out: cli.out,
        seed: cli.seed,
        format: cli.format.map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }),
    };
    if let Command::Models = cli.command {
        return Ok(cmd_models(global.format));
    }
    let path = cli.config.ok_or_else(|| CliError::Input("--config PATH is required".into()))?;
    let loaded = config::load(&path)?;
    log::debug!("loaded {} (n = {})", path.display(), loaded.spec.dim());
    match cli.command {
        Command::Analyze => cmd_analyze(&loaded, &global),
        Command::Simulate => cmd_simulate(&loaded, &global),
        Command::Sweep => cmd_sweep(&loaded, &global),
        Command::Models => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PERMANENCE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            emit(&text);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
