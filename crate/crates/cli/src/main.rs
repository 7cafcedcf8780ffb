//! `trajmodes`: reproducible transportation-mode experiments on GPS
//! trajectories.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use trajmodes::evaluation::CvStrategy;
use trajmodes::kinematics::Channel;
use trajmodes::preprocess::NoisePolicy;
use trajmodes::selection::SelectionMethod;

use crate::config::ExperimentConfig;

/// A bad flag, config value or input path. Exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "trajmodes", version, about = "Transportation mode prediction from GPS trajectories")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for splits, forests and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CvArgs {
    /// random or user_grouped.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<CvStrategy>,
    /// Number of folds.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a GeoLife directory tree into the canonical point table.
    Ingest {
        /// GeoLife root; defaults to data.raw, then $TRAJMODES_DATA.
        root: Option<PathBuf>,
    },
    /// Segment the canonical table and compute trajectory features.
    Extract {
        canonical: Option<PathBuf>,
        /// raw, dabiri, endo or a JSON mapping file.
        #[arg(long)]
        scheme: Option<String>,
        /// Comma-separated point-feature channels.
        #[arg(long, value_delimiter = ',', value_parser = parse_channel)]
        channels: Option<Vec<Channel>>,
        /// off or speed-cap.
        #[arg(long)]
        noise: Option<String>,
        /// Speed cap in m/s for the speed-cap policy.
        #[arg(long)]
        max_speed: Option<f64>,
    },
    /// Run feature selection and write the accuracy curve.
    Select {
        dataset: Option<PathBuf>,
        /// wrapper or importance.
        #[arg(long, value_parser = parse_method)]
        method: Option<SelectionMethod>,
        /// Wrapper search depth.
        #[arg(long)]
        max_k: Option<usize>,
        /// Size of the saved subset; defaults to the best k.
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        no_svg: bool,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Cross-validate the configured classifier.
    Evaluate {
        dataset: Option<PathBuf>,
        /// Feature subset file written by `select`.
        #[arg(long)]
        subset: Option<PathBuf>,
        /// Baseline accuracy for a one-sample signed-rank test.
        #[arg(long)]
        baseline: Option<f64>,
        /// Report name; defaults to the CV strategy.
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Paired signed-rank tests between evaluation reports.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
    /// Write a synthetic canonical table.
    Synth {
        /// separated or confounded.
        #[arg(long, default_value = "separated")]
        preset: String,
        /// TOML generator specification; overrides the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<CvStrategy, String> {
    s.parse().map_err(|e: trajmodes::Error| e.to_string())
}

fn parse_channel(s: &str) -> Result<Channel, String> {
    s.parse().map_err(|e: trajmodes::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<SelectionMethod, String> {
    s.parse().map_err(|e: trajmodes::Error| e.to_string())
}

impl CvArgs {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.strategy {
            config.cv.strategy = s;
        }
        if let Some(k) = self.folds {
            config.cv.folds = k;
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.cv.seed = s;
    }
    if let Some(o) = &cli.out {
        config.out = o.clone();
    }
    match &cli.command {
        Command::Extract {
            scheme,
            channels,
            noise,
            max_speed,
            ..
        } => {
            if let Some(s) = scheme {
                config.label_scheme = s.clone();
            }
            if let Some(c) = channels {
                config.channels = c.clone();
            }
            match (noise, max_speed) {
                (Some(n), cap) => config.noise = NoisePolicy::parse(n, *cap)?,
                (None, Some(cap)) => config.noise = NoisePolicy::SpeedCap { max_mps: *cap },
                (None, None) => {}
            }
        }
        Command::Select {
            method,
            max_k,
            no_svg,
            cv,
            ..
        } => {
            if let Some(m) = method {
                config.selection.method = *m;
            }
            if max_k.is_some() {
                config.selection.max_k = *max_k;
            }
            if *no_svg {
                config.selection.svg = false;
            }
            cv.apply(&mut config);
        }
        Command::Evaluate {
            subset, baseline, cv, ..
        } => {
            if subset.is_some() {
                config.feature_subset = subset.clone();
            }
            if baseline.is_some() {
                config.baseline = *baseline;
            }
            cv.apply(&mut config);
        }
        Command::Ingest { .. } | Command::Compare { .. } | Command::Synth { .. } => {}
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { root } => commands::ingest(&config, root),
        Command::Extract { canonical, .. } => commands::extract(&config, canonical),
        Command::Select { dataset, top_k, .. } => commands::select_features(&config, dataset, top_k),
        Command::Evaluate { dataset, name, .. } => commands::evaluate(&config, dataset, name),
        Command::Compare { reports } => commands::compare(&config, &reports),
        Command::Synth { preset, spec } => commands::synth(&config, &preset, spec, cli.seed),
    }
}

/// Usage and configuration problems exit with 2, everything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    use trajmodes::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::MissingDirectory(_)
                | E::EmptyInput(_)
                | E::UnknownScheme(_)
                | E::UnknownPolicy(_)
                | E::InvalidArgument(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.threads {
        Some(0) => Err(UsageError("--threads must be at least 1".into()).into()),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(e.into()),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
