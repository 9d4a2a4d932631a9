use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use narrlens::pipeline::{Pipeline, PipelineConfig};

/// Exit status when the run completed but some articles failed.
const PARTIAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "narrlens", version, about = "Two-level narrative classification and evidence-grounded explanations")]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, default_value = "narrlens.toml")]
    config: PathBuf,
    /// Overrides the training seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Deterministic embedder and offline chat backend; never touches the network.
    #[arg(long, global = true)]
    offline: bool,
    /// Repeat for more log output (info, debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one classifier per domain on the annotated corpus.
    Train,
    /// Predict narratives and sub-narratives for a directory of articles.
    Classify {
        /// Article directory; defaults to `paths.articles`.
        #[arg(long)]
        articles: Option<PathBuf>,
        /// Predictions file; defaults to `<outputs>/predictions.tsv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a justification of at most 80 words for each article's dominant narrative.
    Explain {
        /// Lines of `<filename>\t<dominant narrative>[\t<sub-narratives>]`.
        #[arg(long)]
        input: PathBuf,
        /// Article directory; defaults to `paths.articles`.
        #[arg(long)]
        articles: Option<PathBuf>,
        /// Explanations file; defaults to `<outputs>/explanations.tsv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions (and optionally explanations) against references.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, requires = "references")]
        explanations: Option<PathBuf>,
        #[arg(long, requires = "explanations")]
        references: Option<PathBuf>,
        /// Report directory; defaults to `paths.outputs`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config =
        PipelineConfig::load(&cli.config).with_context(|| format!("loading config {}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        config.training.seed = seed;
    }
    config.offline |= cli.offline;
    let outputs = config.paths.outputs.clone();
    let default_articles = config.paths.articles.clone();
    let mut pipeline = Pipeline::new(config)?;

    let partial = |failed: usize, total: usize, sidecar: &std::path::Path| {
        if failed == 0 {
            ExitCode::SUCCESS
        } else {
            eprintln!("{failed} of {total} articles failed; see {}", sidecar.display());
            ExitCode::from(PARTIAL_FAILURE)
        }
    };

    match cli.command {
        Command::Train => {
            let summary = pipeline.run_train()?;
            for d in &summary.domains {
                match &d.model_path {
                    Some(path) => println!(
                        "{}: trained on {} articles ({} train / {} val), model {}",
                        d.domain,
                        d.articles,
                        d.n_train,
                        d.n_val,
                        path.display()
                    ),
                    None => println!("{}: skipped, no annotated articles", d.domain),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { articles, output } => {
            let articles = articles.unwrap_or(default_articles);
            let output = output.unwrap_or_else(|| outputs.join("predictions.tsv"));
            let outcome = pipeline.run_classify(&articles, &output)?;
            let total = outcome.classifications.len() + outcome.failures.len();
            println!("wrote {} predictions to {}", outcome.classifications.len(), output.display());
            Ok(partial(outcome.failures.len(), total, &outcome.errors_file))
        }
        Command::Explain {
            input,
            articles,
            output,
        } => {
            let articles = articles.unwrap_or(default_articles);
            let output = output.unwrap_or_else(|| outputs.join("explanations.tsv"));
            let outcome = pipeline.run_explain(&input, &articles, &output)?;
            let done = outcome.records.len() - outcome.failures.len();
            println!("wrote {done} explanations to {}", output.display());
            Ok(partial(outcome.failures.len(), outcome.records.len(), &outcome.errors_file))
        }
        Command::Evaluate {
            predictions,
            gold,
            explanations,
            references,
            out_dir,
        } => {
            let out_dir = out_dir.unwrap_or(outputs);
            let generation = explanations.as_deref().zip(references.as_deref());
            let outcome = pipeline.run_evaluate(&predictions, &gold, generation, &out_dir)?;
            print!("{}", outcome.classification.to_console());
            if let Some(report) = &outcome.generation {
                println!();
                print!("{}", report.to_tsv());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
