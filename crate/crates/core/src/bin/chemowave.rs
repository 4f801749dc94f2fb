use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use env_logger::Env;

use chemowave::cli_io::{self, Mode, Provenance, EXIT_VALIDATION};

/// Travelling waves of a kinetic chemotaxis model.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// validate | upsilon-scan | profile | simulate
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `run.output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the speed scan.
    #[arg(long)]
    threads: Option<usize>,
    /// Recorded in the output headers; the workflows are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: &Cli) -> Result<String, cli_io::CliError> {
    let text = cli_io::read_config(&cli.config)?;
    let config = cli_io::parse_config(&text)?.with_mode(cli.mode)?;
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let prov = Provenance::for_config(&text, cli.seed);
    cli_io::execute(&config, &out, &prov)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("CHEMOWAVE_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool");
        if let Err(e) = pool {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
