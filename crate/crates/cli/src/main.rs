use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skg_cli::{pipeline, threads_from_env, ExperimentConfig, Layout, Log, Stage, StageError};

#[derive(Parser)]
#[command(name = "skg", version, about = "Secret-key generation experiments on simulated CSI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate AP, STA and EVE captures.
    Simulate,
    /// Scattering features and the correlation table.
    Scatter,
    /// t-SNE embeddings of every cluster-set pair.
    Embed,
    /// Run the key agreement on every pair.
    Keygen,
    /// BER and KGR tables.
    Evaluate,
    /// Randomness tests on the generated keys.
    Nist,
    /// Every stage in order.
    All,
}

fn run(cli: &Cli) -> Result<(), StageError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate().map_err(|e| StageError::new(Stage::Config, e))?;
    if let Some(n) = threads_from_env() {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| StageError::new(Stage::Config, e))?;
    }
    let layout = Layout::new(&cfg.output_dir);
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg, &layout, log),
        Command::Scatter => pipeline::cmd_scatter(&cfg, &layout, log).map(drop),
        Command::Embed => pipeline::cmd_embed(&cfg, &layout, log).map(drop),
        Command::Keygen => pipeline::cmd_keygen(&cfg, &layout, log),
        Command::Evaluate => pipeline::cmd_evaluate(&cfg, &layout, log).map(drop),
        Command::Nist => pipeline::cmd_nist(&cfg, &layout, log).map(drop),
        Command::All => {
            let summary = pipeline::cmd_all(&cfg, &layout, log)?;
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
