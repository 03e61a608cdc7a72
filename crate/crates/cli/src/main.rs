use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, ValueEnum};
use log::error;
use mg2vec::error::Error;
use mg2vec::pipeline::{self, PipelineConfig, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Simulate,
    BuildGraph,
    TrainStructural,
    Pretrain,
    Embed,
    Train,
    Evaluate,
    Cluster,
    /// Every stage in order.
    All,
}

impl StageArg {
    fn stages(self) -> Vec<Stage> {
        match self {
            StageArg::Simulate => vec![Stage::Simulate],
            StageArg::BuildGraph => vec![Stage::BuildGraph],
            StageArg::TrainStructural => vec![Stage::TrainStructural],
            StageArg::Pretrain => vec![Stage::Pretrain],
            StageArg::Embed => vec![Stage::Embed],
            StageArg::Train => vec![Stage::Train],
            StageArg::Evaluate => vec![Stage::Evaluate],
            StageArg::Cluster => vec![Stage::Cluster],
            StageArg::All => Stage::ALL.to_vec(),
        }
    }
}

/// Learn k-mer representations from metagenome reads and use them to
/// classify and cluster reads.
#[derive(Debug, Parser)]
#[command(name = "mg2vec", version)]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    stage: StageArg,
    /// TOML configuration file.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a shipped scenario configuration instead of a file.
    #[arg(long, value_parser = ["targeted-constrained", "targeted-unconstrained", "generalized-seen", "generalized-unseen"])]
    preset: Option<String>,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn defaults_help() -> String {
    let mut text = String::from("Configuration defaults (every key is optional except paths.artifacts):\n\n");
    text.push_str(&PipelineConfig::default().to_toml_string());
    text
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = match (&cli.config, &cli.preset) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(name)) => {
            let text = pipeline::preset(name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
            PipelineConfig::from_toml_str(text)?
        }
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.paths.artifacts = Some(out);
    }
    for outcome in pipeline::run_stages(&config, &cli.stage.stages())? {
        log::info!("{} finished, manifest {}", outcome.stage, outcome.manifest.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let matches = Cli::command().after_long_help(defaults_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
