use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use triad::{CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "triad", version, about = "Exercise-supportiveness pipeline for street networks")]
struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Stage to run, or `all`.
    #[arg(long, default_value = "all")]
    stage: String,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Checks a configuration and prints it with defaults filled in.
    ValidateConfig { path: PathBuf },
}

fn load(path: Option<&PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(Command::ValidateConfig { path }) = &cli.command {
        let cfg = PipelineConfig::load(path)?;
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let mut cfg = load(cli.config.as_ref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.into()))?;
    for m in triad::run(&cfg, &cli.stage)? {
        println!("{}: {} outputs, {:.2} s", m.stage, m.outputs.len(), m.wall_time_s);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
