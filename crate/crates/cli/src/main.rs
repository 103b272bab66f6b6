use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inrlab_core::lab::commands::{run_command, run_expt, Command};
use inrlab_core::lab::experiments::{Summary, EXPERIMENT_NAMES};
use inrlab_core::Error;

/// Implicit neural representation lab.
#[derive(Parser, Debug)]
#[command(name = "inrlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON config document.
    #[arg(long)]
    config: PathBuf,
    /// Run directory to create or reuse.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed named in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Fit a model to a signal or image.
    Train(RunArgs),
    /// DFT of a model's output on a grid.
    Spectrum(RunArgs),
    /// Enumerate a harmonic support set.
    Support(RunArgs),
    /// Bessel-series expansion of a two-layer SIREN.
    BesselExpand(RunArgs),
    /// Empirical NTK spectrum and eigenfunction images.
    Ntk(RunArgs),
    /// Energy concentration of a task collection.
    Energy(RunArgs),
    /// MAML or Reptile meta-training.
    Meta(RunArgs),
    /// Run a named experiment.
    Expt {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENT_NAMES))]
        name: String,
        /// JSON experiment config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn read_config(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(PathBuf, Summary), Error> {
    let (cmd, args) = match cli.command {
        Sub::Train(a) => (Command::Train, a),
        Sub::Spectrum(a) => (Command::Spectrum, a),
        Sub::Support(a) => (Command::Support, a),
        Sub::BesselExpand(a) => (Command::BesselExpand, a),
        Sub::Ntk(a) => (Command::Ntk, a),
        Sub::Energy(a) => (Command::Energy, a),
        Sub::Meta(a) => (Command::Meta, a),
        Sub::Expt { name, config, out, seed } => {
            let text = config.as_deref().map(read_config).transpose()?;
            let origin = config.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            return run_expt(&name, text.as_deref().map(|t| (t, origin.as_str())), &out, seed);
        }
    };
    let text = read_config(&args.config)?;
    run_command(cmd, &text, &args.config.display().to_string(), &args.out, args.seed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((dir, summary)) => {
            for (name, value) in &summary.metrics {
                println!("{name} = {value}");
            }
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
