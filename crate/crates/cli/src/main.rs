//! `isfno`: data generation, training, rollouts, statistics and inverse
//! scattering demos. Every run leaves a `manifest.json` in its output
//! directory from which `isfno replay` repeats it.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isfno_core::dataset::read_header;

use crate::commands::{execute, inspect, Manifest, Resolved, Status};
use crate::config::{
    resolve_train, AutocorrSection, ConfigFile, DataSection, IstSection, ModelSection, RolloutSection, TrainSection,
};
use crate::error::{CliError, EXIT_DIVERGED};

#[derive(Parser)]
#[command(name = "isfno", version, about = "Invertible spectral neural operators for time-dependent PDEs")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving every output and the manifest.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// TOML config file with [data], [model], [train], [rollout], [autocorr]
    /// and [ist] tables; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate random initial conditions and write an ISFN dataset.
    GenData(DataSection),
    /// Train a model variant on a dataset.
    Train {
        #[command(flatten)]
        model: ModelSection,
        #[command(flatten)]
        train: TrainSection,
    },
    /// Roll a trained model out against the solver and export the error curve.
    Rollout(RolloutSection),
    /// Spatial autocorrelation of the trajectories in an ISFN file.
    Autocorr(AutocorrSection),
    /// Discrete spectrum and reflectionless reconstruction of KdV solitons.
    IstDemo(IstSection),
    /// Print the header of an ISFN or ISFM file.
    Inspect { path: PathBuf },
    /// Repeat the run recorded in a manifest.
    Replay { manifest: PathBuf },
}

fn resolve(command: Command, file: ConfigFile) -> Result<Resolved, CliError> {
    Ok(match command {
        Command::GenData(flags) => Resolved::GenData(flags.over(file.data).resolve()?),
        Command::Train { model, train } => {
            let (model, train) = (model.over(file.model), train.over(file.train));
            let path = train.data.clone().ok_or_else(|| CliError::usage("train needs --data"))?;
            let mut r = std::io::BufReader::new(std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?);
            let header = read_header(&mut r)?;
            Resolved::Train(resolve_train(model, train, &header)?)
        }
        Command::Rollout(flags) => Resolved::Rollout(flags.over(file.rollout).resolve()?),
        Command::Autocorr(flags) => Resolved::Autocorr(flags.over(file.autocorr).resolve()?),
        Command::IstDemo(flags) => Resolved::IstDemo(flags.over(file.ist).resolve()?),
        Command::Inspect { .. } | Command::Replay { .. } => unreachable!("handled before resolution"),
    })
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let (resolved, threads) = match cli.command {
        Command::Inspect { path } => {
            print_json(&inspect(&path)?)?;
            return Ok(0);
        }
        Command::Replay { manifest } => {
            let m = Manifest::load(&manifest)?;
            if m.version != env!("CARGO_PKG_VERSION") {
                eprintln!(
                    "warning: manifest written by version {}, replaying with {}",
                    m.version,
                    env!("CARGO_PKG_VERSION")
                );
            }
            m.check_inputs()?;
            (Resolved::from_config(&m.command, m.config)?, cli.threads.or(m.threads))
        }
        command => (resolve(command, ConfigFile::load(cli.config.as_deref())?)?, cli.threads),
    };
    let mut manifest = Manifest::new(&resolved, threads)?;
    let result = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("--threads {n}: {e}")))?
            .install(|| execute(&resolved, &cli.out)),
        None => execute(&resolved, &cli.out),
    };
    match result {
        Ok(outcome) => {
            manifest.outputs = outcome.outputs;
            manifest.status = outcome.status;
            manifest.summary = outcome.summary;
            manifest.write(&cli.out)?;
            if resolved.command() == "gen-data" {
                print_json(&manifest)?;
            }
            Ok(if manifest.status == Status::Diverged { EXIT_DIVERGED } else { 0 })
        }
        Err(e) if e.exit_code() == EXIT_DIVERGED => {
            manifest.status = Status::Diverged;
            manifest.summary = serde_json::json!({ "error": e.to_string() });
            manifest.write(&cli.out)?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
