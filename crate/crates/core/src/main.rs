use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fluxread::cli::{load_config, run_subcommand, RunArgs, Subcommand};

/// Fluxonium readout modeling: spectra, dispersive shifts, MIST maps,
/// flux-compensated readout and shot simulation.
#[derive(Parser, Debug)]
#[command(name = "fluxread", version)]
struct Args {
    /// One of: spectrum, chi, mist-map, collisions, tls-boundaries,
    /// compensate, ramsey, simulate-readout, postselect, classify, optimize,
    /// fit-kappa.
    subcommand: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Required by simulate-readout and optimize.
    #[arg(long)]
    seed: Option<u64>,
    /// Data file for postselect, classify (shot CSV) and fit-kappa (contrast CSV).
    #[arg(long)]
    input: Option<PathBuf>,
}

fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("FLUXREAD_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FLUXREAD_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let command: Subcommand = match args.subcommand.parse() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = load_config(&args.config).and_then(|config| {
        run_subcommand(
            command,
            &config,
            &RunArgs {
                out_dir: args.out,
                seed: args.seed,
                input: args.input,
            },
        )
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                fluxread::FluxError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
