use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use envauth::cli;
use envauth::distance::DEFAULT_MARGIN;
use envauth::features::DEFAULT_ENTROPY_BINS;
use envauth::graph::DEFAULT_BETA_MIN;

/// Fingerprint authentication with environmental-effect estimation.
#[derive(Debug, Parser)]
#[command(name = "envauth", version)]
struct Args {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract one feature row per signal file into fingerprints.csv.
    Extract {
        /// Template recording for the cross-correlation feature.
        #[arg(long)]
        template: PathBuf,
        #[arg(long, default_value = "object")]
        object_id: String,
        #[arg(long, default_value_t = 0)]
        window: u32,
        #[arg(long, default_value_t = DEFAULT_ENTROPY_BINS)]
        bins: usize,
        #[arg(required = true)]
        signals: Vec<PathBuf>,
    },
    /// Select references, build the graph and calibrate thresholds.
    Train {
        fingerprints: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BETA_MIN)]
        beta_min: f64,
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: f64,
    },
    /// Score fingerprints against a trained state directory.
    Auth {
        #[arg(long)]
        state: PathBuf,
        fingerprints: PathBuf,
    },
    /// Run a synthetic scenario.
    Simulate,
    /// Accuracy of both pipelines over a threshold grid.
    Sweep {
        /// Comma-separated thresholds; defaults to the config grid.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
    },
    /// Mean legitimate distance per source-noise class and transfer weight.
    TransferEval,
}

fn run(args: Args) -> envauth::Result<()> {
    let config = args.config.as_deref();
    let out = &args.out;
    match args.command {
        Command::Extract {
            template,
            object_id,
            window,
            bins,
            signals,
        } => cli::extract(&signals, &template, out, &object_id, window, bins).map(drop),
        Command::Train {
            fingerprints,
            beta_min,
            margin,
        } => cli::train(&fingerprints, out, beta_min, margin).map(drop),
        Command::Auth {
            state,
            fingerprints,
        } => cli::auth(&state, &fingerprints, out).map(drop),
        Command::Simulate => cli::simulate(config, args.seed, out).map(drop),
        Command::Sweep { taus } => cli::sweep(config, args.seed, taus, out).map(drop),
        Command::TransferEval => cli::transfer_eval(config, args.seed, out).map(drop),
    }
}

fn main() -> ExitCode {
    let result = run(Args::parse());
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}
