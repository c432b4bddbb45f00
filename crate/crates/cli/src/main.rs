//! `gsr`: measurement generation, reconstruction, denoising, sweeps and
//! metrics for group-sparse compressed sensing.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsr_core::Error;

use config::Config;

#[derive(Parser)]
#[command(name = "gsr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an image with a seeded operator and write a GSRM1 file.
    Measure(Common),
    /// Reconstruct an image from a GSRM1 file.
    Recover(Common),
    /// Denoise an image with one grouped low-rank shrinkage pass.
    Denoise(Common),
    /// Run a grid of reconstructions and write a summary CSV.
    Sweep(Common),
    /// PSNR of `--input` against `--ground-truth`.
    Metrics(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Concurrent sweep cells (0 uses every core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Any other configuration key as `--key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> gsr_core::Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        for (key, path) in [
            ("ground_truth", &self.ground_truth),
            ("output", &self.output),
            ("trace", &self.trace),
        ] {
            if let Some(p) = path {
                cfg.set(key, &p.to_string_lossy())?;
            }
        }
        if let Some(j) = self.jobs {
            cfg.set("jobs", &j.to_string())?;
        }
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Domain(_) | Error::Uncovered { .. } => 4,
        Error::Config(_)
        | Error::Contract(_)
        | Error::Dimension { .. }
        | Error::InsufficientCandidates { .. }
        | Error::OutOfBounds { .. } => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&Common, fn(&Config) -> gsr_core::Result<()>) = match &cli.command {
        Command::Measure(a) => (a, commands::measure),
        Command::Recover(a) => (a, commands::recover_cmd),
        Command::Denoise(a) => (a, commands::denoise),
        Command::Sweep(a) => (a, commands::sweep),
        Command::Metrics(a) => (a, commands::metrics),
    };
    match args.resolve().and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gsr: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
