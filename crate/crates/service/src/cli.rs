use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use quickcue_core::eval::{aggregate_annotations, evaluate_classifier, AnnotationScore};
use quickcue_core::{render_document, Mode};

use crate::config::ServiceConfig;
use crate::documents::{
    classify_document, digest_document, parse_gold, parse_predictions, parse_review_set,
};

#[derive(Debug, Parser)]
#[command(name = "quickcue", version, about = "Aspect-sentiment review digests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every review of a review set into aspect-sentiment pairs.
    Classify(PipelineArgs),
    /// Build the five-aspect digest of a review set.
    Digest {
        #[command(flatten)]
        args: PipelineArgs,
        /// Reference date for the review age filter (default: today, UTC).
        #[arg(long)]
        today: Option<NaiveDate>,
    },
    /// Score predicted pairs against gold annotations.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
    /// Average human summary ratings per example, then across examples.
    ScoreSummaries {
        #[arg(long)]
        scores: PathBuf,
    },
    /// Run the REST service until interrupted.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Review set JSON file.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Overrides the configured gateway mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Mock,
    Live,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mock => Mode::Mock,
            ModeArg::Live => Mode::Live,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_output(path: Option<&Path>, doc: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, doc).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

fn load_config(args: &PipelineArgs) -> anyhow::Result<ServiceConfig> {
    let mut cfg = ServiceConfig::resolve(args.config.as_deref())?;
    if let Some(mode) = args.mode {
        cfg.gateway.mode = mode.into();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn load_reviews(path: &Path) -> anyhow::Result<quickcue_core::RestaurantReviewSet> {
    let raw = read(path)?;
    parse_review_set(raw.as_bytes()).with_context(|| format!("in {}", path.display()))
}

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Classify(args) => {
            let cfg = load_config(&args)?;
            let set = load_reviews(&args.input)?;
            let pipeline = cfg.build_pipeline()?;
            let doc = classify_document(&pipeline, &set).await?;
            write_output(args.output.as_deref(), &doc)
        }
        Command::Digest { args, today } => {
            let cfg = load_config(&args)?;
            let set = load_reviews(&args.input)?;
            let pipeline = cfg.build_pipeline()?;
            let now = Utc::now();
            let doc =
                digest_document(&pipeline, &set, today.unwrap_or(now.date_naive()), now).await?;
            write_output(args.output.as_deref(), &doc)
        }
        Command::Eval { gold, pred, format } => {
            let gold_set =
                parse_gold(&read(&gold)?).with_context(|| format!("in {}", gold.display()))?;
            let predictions = parse_predictions(&read(&pred)?)
                .with_context(|| format!("in {}", pred.display()))?;
            let report = evaluate_classifier(&gold_set, &predictions)?;
            match format {
                ReportFormat::Text => print!("{report}"),
                ReportFormat::Json => print!("{}", render_document(&report)),
            }
            Ok(())
        }
        Command::ScoreSummaries { scores } => {
            let raw = read(&scores)?;
            let parsed: Vec<AnnotationScore> =
                serde_json::from_str(&raw).with_context(|| format!("in {}", scores.display()))?;
            print!("{}", render_document(&aggregate_annotations(&parsed)?));
            Ok(())
        }
        Command::Serve { config } => {
            let cfg = ServiceConfig::resolve(config.as_deref())?;
            crate::server::serve(&cfg).await
        }
    }
}

/// The error chain on one line.
pub fn one_line(err: &anyhow::Error) -> String {
    format!("{err:#}").replace(['\n', '\r'], " ")
}
