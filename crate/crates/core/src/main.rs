use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use miso_outage::config::RunConfig;
use miso_outage::rate::RatePoint;
use miso_outage::run::{frontier_dump, run_point, run_region, simulate};
use miso_outage::{Error, Result};

/// Outage rate regions of the two-user MISO interference channel.
#[derive(Parser)]
#[command(name = "miso-outage", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file and print it back in normalized form.
    Validate { config: PathBuf },
    /// Case probabilities, memberships and bias interval at one rate point.
    Point { config: PathBuf, r1: f64, r2: f64 },
    /// Trace the configured region; writes CSV boundaries and a manifest.
    Region {
        config: PathBuf,
        out_dir: PathBuf,
        /// Worker threads (default: all cores). Results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Power frontiers of one realization of the sample stream as CSV.
    Frontier {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Simulate the case policy with a constant coin bias.
    Simulate {
        config: PathBuf,
        r1: f64,
        r2: f64,
        #[arg(long)]
        bias: f64,
        #[arg(long, default_value_t = 0)]
        coin_seed: u64,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let c = RunConfig::from_path(&config)?;
            emit(&format!("{}\n", c.to_json()))?;
        }
        Command::Point { config, r1, r2 } => {
            let c = RunConfig::from_path(&config)?;
            print_json(&run_point(&c, RatePoint::new(r1, r2)?)?)?;
        }
        Command::Region { config, out_dir, workers } => {
            let c = RunConfig::from_path(&config)?;
            let run = run_region(&c, &out_dir, workers)?;
            for b in &run.boundaries {
                for w in &b.warnings {
                    eprintln!("warning [{}]: {w}", b.metadata.scenario);
                }
            }
            let listing: String = run.files.iter().map(|f| format!("{}\n", f.display())).collect();
            emit(&listing)?;
            eprintln!("wall time: {:.3} s", run.wall_time.as_secs_f64());
        }
        Command::Frontier { config, sample, points } => {
            let c = RunConfig::from_path(&config)?;
            emit(&frontier_dump(&c, sample, points)?)?;
        }
        Command::Simulate { config, r1, r2, bias, coin_seed } => {
            let c = RunConfig::from_path(&config)?;
            print_json(&simulate(&c, RatePoint::new(r1, r2)?, bias, coin_seed)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
