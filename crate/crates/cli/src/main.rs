use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shellid_cli::{exit, CliError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "shellid", version, about = "Isogeometric shell material identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default runs/<case>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: logical cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the reference problem; optionally run the mesh study
    Forward,
    /// Generate a synthetic experiment on the fine mesh
    Synth,
    /// Identify the material field
    Identify,
    /// Repeat noisy identifications
    Stats {
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Mesh-refinement study of the forward solution
    Convergence,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    let outcome = match cli.command {
        Command::Forward => shellid_cli::run_forward(&cfg)?,
        Command::Synth => shellid_cli::run_synth(&cfg)?,
        Command::Identify => shellid_cli::run_identify(&cfg)?,
        Command::Stats { repetitions } => {
            if repetitions.is_some() {
                cfg.repetitions = repetitions;
            }
            shellid_cli::run_stats(&cfg)?
        }
        Command::Convergence => shellid_cli::run_convergence(&cfg)?,
    };
    log::info!("wrote {}", outcome.out_dir.display());
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    debug_assert!(code >= exit::SUCCESS);
    ExitCode::from(code as u8)
}
