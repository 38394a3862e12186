use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use xcm::models::{Architecture, ModelSpec};
use xcm::reporting::TieMethod;
use xcm::training::GridSpec;
use xcm::workflow::{self, ExplainOptions, GridOptions, SynthOptions, TrainOptions};

/// Explainable convolutional networks for multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "xcm", version)]
struct Cli {
    /// Seed for data generation, initialization and batch order.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic two-class dataset with ground-truth regions.
    Synth {
        #[arg(long, default_value_t = 10)]
        n_per_class: usize,
        #[arg(long, default_value_t = 100)]
        length: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, default_value_t = 0.2)]
        window_pct: f64,
    },
    /// Evaluate a checkpoint on a test file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Grad-CAM maps and masks for one sample.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: usize,
        /// Class to explain, or `auto` for the predicted class.
        #[arg(long, default_value = "auto")]
        class: String,
        #[arg(long, default_value_t = xcm::explain::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Regions CSV written by `synth`; enables IoU.
        #[arg(long)]
        regions: Option<PathBuf>,
    },
    /// Cross-validated search over batch size and window size.
    Gridsearch {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 8, 32])]
        batch_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6, 0.8, 1.0])]
        window_pcts: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Average ranks and wins/ties from a results table.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = Ties::Min)]
        ties: Ties,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, default_value = "xcm")]
    arch: Architecture,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = ModelSpec::DEFAULT_FILTERS)]
    filters: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ties {
    Min,
    Average,
}

fn parse_class(s: &str) -> Result<Option<usize>> {
    if s == "auto" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .with_context(|| format!("--class must be `auto` or a class index, got {s:?}"))
}

fn run(cli: Cli) -> Result<PathBuf> {
    let (seed, out) = (cli.seed, cli.out.as_path());
    let manifest = match cli.command {
        Command::Synth {
            n_per_class,
            length,
            noise,
        } => workflow::synth(
            &SynthOptions {
                n_per_class,
                length,
                noise,
            },
            seed,
            out,
        )?,
        Command::Train {
            model,
            train,
            batch,
            window_pct,
        } => {
            let options = TrainOptions {
                architecture: model.arch,
                batch_size: batch,
                window_pct,
                epochs: model.epochs,
                filters: model.filters,
            };
            workflow::train_model(&options, &train, seed, out)?
        }
        Command::Eval { checkpoint, test } => workflow::eval_model(&checkpoint, &test, seed, out)?,
        Command::Explain {
            checkpoint,
            data,
            index,
            class,
            threshold,
            regions,
        } => {
            let options = ExplainOptions {
                index,
                class: parse_class(&class)?,
                threshold,
                regions,
            };
            workflow::explain_sample(&checkpoint, &data, &options, seed, out)?
        }
        Command::Gridsearch {
            model,
            train,
            batch_sizes,
            window_pcts,
            folds,
        } => {
            let options = GridOptions {
                architecture: model.arch,
                grid: GridSpec {
                    batch_sizes,
                    window_pcts,
                    k_folds: folds,
                },
                epochs: model.epochs,
                filters: model.filters,
            };
            workflow::gridsearch(&options, &train, seed, out)?
        }
        Command::Report { results, ties } => {
            let ties = match ties {
                Ties::Min => TieMethod::Min,
                Ties::Average => TieMethod::Average,
            };
            workflow::report(&results, ties, seed, out)?
        }
    };
    Ok(manifest)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.out.as_os_str().is_empty() {
        bail!("--out must not be empty");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build()?;
    let manifest = pool.install(|| run(cli))?;
    let text = std::fs::read_to_string(&manifest)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    println!("{}", manifest.display());
    if let Some(metrics) = value.get("metrics") {
        println!("{}", serde_json::to_string_pretty(metrics)?);
    }
    Ok(())
}
