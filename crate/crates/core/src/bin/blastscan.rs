use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use blastscan::fixture::{write_overfit_fixture, write_toy_fixture};
use blastscan::pipeline::{run_stage, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "blastscan", version, about = "Blood-smear Normal vs. Cancer classification pipeline")]
struct Cli {
    /// Override the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest both datasets, check counts, merge classes and split.
    Prepare(ConfigArg),
    /// Segment every prepared image with the HSV threshold.
    Segment(ConfigArg),
    /// Fine-tune the configured backend on the segmented training split.
    Train(ConfigArg),
    /// Score a trained model on the evaluation split.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        /// Model directory; defaults to the one written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write curves, confusion renders and the comparison table.
    Report(ConfigArg),
    /// Run all five stages in order.
    RunAll(ConfigArg),
    /// Write a synthetic dataset tree and matching config.
    MakeFixture {
        #[arg(long, value_enum, default_value_t = FixtureKind::Toy)]
        kind: FixtureKind,
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(clap::Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Toy,
    Overfit,
}

fn load_config(cli: &Cli, path: &Path) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = if dir.is_absolute() {
            dir.clone()
        } else {
            std::env::current_dir().context("reading the working directory")?.join(dir)
        };
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let (stages, config, model): (&[Stage], &ConfigArg, Option<&Path>) = match &cli.command {
        Command::Prepare(c) => (&[Stage::Prepare], c, None),
        Command::Segment(c) => (&[Stage::Segment], c, None),
        Command::Train(c) => (&[Stage::Train], c, None),
        Command::Evaluate { config, model } => (&[Stage::Evaluate], config, model.as_deref()),
        Command::Report(c) => (&[Stage::Report], c, None),
        Command::RunAll(c) => (&Stage::ALL, c, None),
        Command::MakeFixture { kind, dir } => {
            let seed = cli.seed.unwrap_or(0);
            let paths = match kind {
                FixtureKind::Toy => write_toy_fixture(dir, seed)?,
                FixtureKind::Overfit => write_overfit_fixture(dir, seed)?,
            };
            println!("{}", paths.config.display());
            return Ok(());
        }
    };
    let cfg = load_config(cli, &config.config)?;
    for &stage in stages {
        let outcome = run_stage(stage, &cfg, model).with_context(|| format!("{stage} failed"))?;
        for path in &outcome.artifacts {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
