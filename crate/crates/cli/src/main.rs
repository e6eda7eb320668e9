//! `scam-radar`: generate synthetic markets, detect scam tokens and report their impact.
//!
//! Exit status is 0 on success, 1 for unreadable or inconsistent data and 2 for
//! bad flags, configuration values or infeasible generator settings.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::LabelSource;
use config::{ConfigError, FileConfig, Overrides};

#[derive(Parser)]
#[command(name = "scam-radar", version, about = "Scam token and rug-pull detection over AMM logs")]
struct Cli {
    /// TOML file with defaults for seed, paths, classifier and thresholds.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed. Falls back to the config file, then SCAM_RADAR_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Tuning {
    /// Number of trees in the forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Maximum tree depth.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Share of an LP position that must be burned to count as a drain.
    #[arg(long)]
    drain_fraction: Option<f64>,
    /// Smallest name/symbol group that confirms flagged tokens.
    #[arg(long)]
    min_group: Option<usize>,
    /// Fewest identical fee transfers that mark an advance-fee token.
    #[arg(long)]
    min_occurrences: Option<usize>,
}

impl Tuning {
    fn overrides(&self) -> Overrides {
        Overrides {
            trees: self.trees,
            max_depth: self.max_depth,
            drain_fraction: self.drain_fraction,
            min_group: self.min_group,
            min_occurrences: self.min_occurrences,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic market with planted scam campaigns.
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Campaign counts, e.g. `rugpull=5,collusion=3`.
        #[arg(long)]
        campaigns: Option<String>,
        /// Mean number of victims per campaign.
        #[arg(long)]
        victims: Option<f64>,
        /// Number of benign tokens.
        #[arg(long)]
        benign: Option<usize>,
        /// Start from the small preset instead of the default market.
        #[arg(long)]
        small: bool,
    },
    /// Load a data directory and replay every pool through the AMM engine.
    IngestCheck {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Extract per-token features to CSV.
    Features {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the forest on seed labels and save it as JSON.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Stratified k-fold cross-validation.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u16).range(2..))]
        folds: u16,
        /// Which labels define the classes.
        #[arg(long, value_enum, default_value_t = LabelSource::Auto)]
        labels: LabelSource,
        /// Also evaluate the logistic regression baseline.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Run the full pipeline and write labels and reports to a directory.
    Detect {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Recompute impact and market reports from an existing label file.
    Report {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Label CSV; defaults to labels_out.csv in the output directory.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        drain_fraction: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = config::resolve_seed(cli.seed, &file)?;
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(config::config_err("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("cannot start worker threads")?;
    pool.install(|| dispatch(cli.command, &file, seed))
}

fn dispatch(command: Command, file: &FileConfig, seed: u64) -> Result<()> {
    let data = |flag: Option<PathBuf>| config::resolve_path(flag, &file.data, "data");
    let out = |flag: Option<PathBuf>| config::resolve_path(flag, &file.out, "out");
    match command {
        Command::Generate {
            out: o,
            campaigns,
            victims,
            benign,
            small,
        } => commands::generate(commands::GenerateArgs {
            out: out(o)?,
            seed,
            small,
            campaigns,
            victims,
            benign,
        }),
        Command::IngestCheck { data: d } => commands::ingest_check(&data(d)?),
        Command::Features { data: d, out: o } => commands::features(&data(d)?, &out(o)?),
        Command::Train {
            data: d,
            out: o,
            tuning,
        } => {
            let cfg = config::detect_config(file, &tuning.overrides(), seed)?;
            commands::train(&data(d)?, &out(o)?, &cfg)
        }
        Command::Eval {
            data: d,
            out: o,
            folds,
            labels,
            baseline,
            tuning,
        } => {
            let cfg = config::detect_config(file, &tuning.overrides(), seed)?;
            commands::eval(&data(d)?, &out(o)?, folds as usize, labels, baseline, &cfg)
        }
        Command::Detect {
            data: d,
            out: o,
            tuning,
        } => {
            let cfg = config::detect_config(file, &tuning.overrides(), seed)?;
            commands::detect(&data(d)?, &out(o)?, &cfg)
        }
        Command::Report {
            data: d,
            labels,
            out: o,
            drain_fraction,
        } => {
            let overrides = Overrides {
                drain_fraction,
                ..Overrides::default()
            };
            let cfg = config::detect_config(file, &overrides, seed)?;
            let out = out(o)?;
            let labels = labels.unwrap_or_else(|| commands::default_labels_path(&out));
            commands::report(&data(d)?, &labels, &out, &cfg)
        }
    }
}

/// Joins the error chain, skipping causes whose text the previous message already contains.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !prev.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        prev = text;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
