use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use vqa_service::api::{self, AppState};
use vqa_service::pipeline::{self, GenerateOptions, IngestSource};
use vqa_service::run::{Overrides, RunDir};
use vqa_service::ServiceError;

#[derive(Parser)]
#[command(name = "vqa-pipeline", version, about = "Build a leveled VQA dataset from captioned images")]
struct Cli {
    /// Run directory holding config, samples, reports and exports.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// TOML configuration, frozen into the run on first use.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the offline mock generator and judges.
    #[arg(long, global = true)]
    mock: bool,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load images and texts into the run's corpus.
    Ingest {
        /// JSONL manifest of images.
        #[arg(long, required_unless_present = "synthetic")]
        images: Option<PathBuf>,
        /// JSONL caption/conversation files.
        #[arg(long)]
        texts: Vec<PathBuf>,
        /// JSON label dictionary for canonicalization.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Generate a seeded synthetic corpus of N images instead.
        #[arg(long, conflicts_with = "images")]
        synthetic: Option<usize>,
    },
    /// Generate question/answer samples; resumes a partial run.
    Generate {
        #[arg(long)]
        target: Option<usize>,
        /// Stop after this many slots.
        #[arg(long)]
        max_slots: Option<usize>,
        /// Use the mock generator.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score samples with the judge ensemble and vote.
    Qc,
    /// Merge sparse categories and undersample.
    Balance,
    /// Split by image and write the dataset.
    Export,
    /// Score predictions against exported answers.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        split: Option<String>,
    },
    /// Serve the review API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Print run statistics.
    Stats,
}

fn print<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn existing(root: &std::path::Path) -> Result<RunDir, ServiceError> {
    if !RunDir::exists(root) {
        return Err(ServiceError::Input(format!("no run at {}", root.display())));
    }
    RunDir::open(root)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        config: cli.config.clone(),
        seed: cli.seed,
        mock: cli.mock,
        parallelism: cli.parallelism,
    };
    match cli.command {
        Command::Ingest {
            images,
            texts,
            labels,
            synthetic,
        } => {
            let mut run = overrides.resolve(&cli.run_dir)?;
            let text_refs: Vec<&std::path::Path> = texts.iter().map(PathBuf::as_path).collect();
            let source = match (synthetic, &images) {
                (Some(n), _) => IngestSource::Synthetic(n),
                (None, Some(images)) => IngestSource::Files {
                    images,
                    texts: &text_refs,
                    labels: labels.as_deref(),
                },
                (None, None) => unreachable!("clap requires one source"),
            };
            print(&pipeline::ingest(&mut run, source)?)
        }
        Command::Generate {
            target,
            max_slots,
            dry_run,
        } => {
            let mut run = overrides.resolve(&cli.run_dir)?;
            let opts = GenerateOptions {
                target,
                max_slots,
                dry_run,
            };
            print(&pipeline::generate(&mut run, &opts)?)
        }
        Command::Qc => print(&pipeline::qc(&mut overrides.resolve(&cli.run_dir)?)?),
        Command::Balance => print(&pipeline::balance(&mut overrides.resolve(&cli.run_dir)?)?),
        Command::Export => print(&pipeline::export(&mut overrides.resolve(&cli.run_dir)?)?),
        Command::Evaluate { predictions, split } => {
            existing(&cli.run_dir)?;
            let run = overrides.resolve(&cli.run_dir)?;
            print(&pipeline::evaluate(&run, &predictions, split.as_deref())?)
        }
        Command::Serve { addr } => {
            existing(&cli.run_dir)?;
            let state = AppState::open(overrides.resolve(&cli.run_dir)?)?;
            tokio::runtime::Runtime::new()?.block_on(api::serve(&addr, state))
        }
        Command::Stats => {
            existing(&cli.run_dir)?;
            print(&pipeline::stats(&overrides.resolve(&cli.run_dir)?)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let envelope = match e.downcast_ref::<ServiceError>() {
                Some(se) => se.envelope(),
                None => vqa_service::ErrorEnvelope {
                    code: "internal".into(),
                    message: format!("{e:#}"),
                },
            };
            eprintln!("{}", serde_json::to_string(&envelope).expect("envelope serializes"));
            ExitCode::FAILURE
        }
    }
}
