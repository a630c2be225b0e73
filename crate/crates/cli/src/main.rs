use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use rgbdm_cli::error::Result;
use rgbdm_cli::{stages, CliError, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "rgbdm", version, about = "Simulate, estimate, segment and render per-vertex reflectance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (`key = value` lines); defaults apply without it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed, overriding `rng_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a scan and write observations, scene, trajectory and ground truth.
    Simulate,
    /// Estimate per-vertex colour and reflectance tables.
    Estimate,
    /// Segment vertices into material groups and merge their tables.
    Segment,
    /// Render one sphere per material group and re-render the scene.
    Render,
    /// Compare the segmentation against the ground truth.
    Evaluate,
    /// Run every stage in order.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.noise.rng_seed = seed;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    let config = load_config(cli)?;
    match cli.command {
        Command::Simulate => stages::simulate(&config).map(drop),
        Command::Estimate => stages::estimate(&config).map(drop),
        Command::Segment => stages::segment(&config).map(drop),
        Command::Render => stages::render(&config).map(drop),
        Command::Evaluate => stages::evaluate_stage(&config).map(|r| print!("{}", r.to_text())),
        Command::Pipeline => stages::pipeline(&config).map(|r| print!("{}", r.to_text())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
