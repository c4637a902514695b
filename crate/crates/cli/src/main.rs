//! `mindtrace`: ingest, embed, project, classify, track and model
//! statements from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mindtrace::ErrorKind;

mod behave_cmd;
mod corpus_cmd;
mod demo;
mod output;
mod settings;
mod track_cmd;

#[derive(Parser)]
#[command(name = "mindtrace", version, about = "Statement analytics pipeline")]
struct Cli {
    /// Random seed recorded in every manifest
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log more (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate quotes, persons and votes into a clean corpus
    Ingest(corpus_cmd::IngestArgs),
    /// Attach external vectors and embed the rest with the hashing embedder
    Embed(corpus_cmd::EmbedArgs),
    /// Fit or apply a PCA/LDA projection
    #[command(subcommand)]
    Project(corpus_cmd::ProjectCmd),
    /// Statement classification
    #[command(subcommand)]
    Classify(corpus_cmd::ClassifyCmd),
    /// Mind-state tracking
    #[command(subcommand)]
    Track(track_cmd::TrackCmd),
    /// Correlate Brexit attitude with voting behaviour
    Correlate(corpus_cmd::CorrelateArgs),
    /// Behaviour models: Bayesian networks and factor analysis
    #[command(subcommand)]
    Behave(behave_cmd::BehaveCmd),
    /// Plot data for scatter plots and region maps
    #[command(subcommand)]
    Export(ExportCmd),
    /// Write a synthetic demo data set
    Demo(demo::DemoArgs),
}

#[derive(Subcommand)]
enum ExportCmd {
    /// Projected quotes with jitter, grouped by label
    Scatter(corpus_cmd::ScatterArgs),
    /// Linear-region classifier evaluated on a grid
    Regions(track_cmd::RegionsArgs),
}

/// Options shared by every subcommand after resolution.
pub struct Common {
    pub seed: u64,
    pub out: PathBuf,
}

fn run(cli: Cli) -> mindtrace::Result<()> {
    let mut settings = settings::Settings::new(cli.config.as_deref())?;
    let seed = settings.value("seed", cli.seed, 0u64)?;
    let out_flag = cli.out.map(|p| p.display().to_string());
    let out = PathBuf::from(match out_flag {
        Some(o) => o,
        None => settings.value::<String>("out", None, "out".into())?,
    });
    // the output location does not change results, so it stays out of the hash
    let common = Common { seed, out };
    match cli.command {
        Command::Ingest(a) => corpus_cmd::ingest(a, &mut settings, &common),
        Command::Embed(a) => corpus_cmd::embed(a, &mut settings, &common),
        Command::Project(c) => corpus_cmd::project(c, &mut settings, &common),
        Command::Classify(c) => corpus_cmd::classify(c, &mut settings, &common),
        Command::Track(c) => track_cmd::run(c, &mut settings, &common),
        Command::Correlate(a) => corpus_cmd::correlate(a, &mut settings, &common),
        Command::Behave(c) => behave_cmd::run(c, &mut settings, &common),
        Command::Export(ExportCmd::Scatter(a)) => corpus_cmd::scatter(a, &mut settings, &common),
        Command::Export(ExportCmd::Regions(a)) => track_cmd::regions(a, &mut settings, &common),
        Command::Demo(a) => demo::run(a, &mut settings, &common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Validation => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
