//! Command-line surface: argument definitions, exit codes and dispatch.
//!
//! Every command is a pure function of its configuration, seed and input
//! files, so reruns produce byte-identical artifacts.

pub mod commands;
pub mod config;
pub mod csv;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::snapshot::SnapshotError;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_VERSION: u8 = 4;
pub const EXIT_CORRUPT: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        let code = match e {
            SnapshotError::Io(_) => EXIT_IO,
            SnapshotError::VersionMismatch { .. } => EXIT_VERSION,
            SnapshotError::Corrupt(_) => EXIT_CORRUPT,
            SnapshotError::Model(_) => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "mvt",
    version,
    about = "Multivariate bandit layout optimization"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Overrides the root seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs every configured algorithm on every repetition.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reruns the experiment for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Trains the first joint-model algorithm, then studies hill climbing
    /// on the trained means over the `[study]` grid.
    HillclimbStudy {
        #[arg(long)]
        config: PathBuf,
    },
    /// Likelihood ratio test between nested models on an observation log.
    Lrt {
        #[arg(long)]
        data: PathBuf,
        /// Takes the template from an experiment file.
        #[arg(long, required_unless_present = "widgets")]
        config: Option<PathBuf>,
        /// Content counts per widget, when no config is given.
        #[arg(long, value_delimiter = ',', conflicts_with = "config")]
        widgets: Option<Vec<usize>>,
        /// Values per context dimension, when no config is given.
        #[arg(long, value_delimiter = ',', conflicts_with = "config")]
        context: Option<Vec<usize>>,
        #[arg(long, default_value = "MVT1")]
        restricted: String,
        #[arg(long, default_value = "MVT2")]
        full: String,
        #[arg(long, default_value_t = crate::analysis::DEFAULT_LRT_PASSES)]
        passes: usize,
    },
    /// Saves or inspects posterior snapshots.
    Snapshot {
        #[command(subcommand)]
        action: SnapshotAction,
    },
    /// One Thompson selection against a snapshot.
    Select {
        #[arg(long)]
        snapshot: PathBuf,
        /// One-based context values, comma-separated.
        #[arg(long, value_delimiter = ',')]
        context: Option<Vec<usize>>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SnapshotAction {
    /// Trains the first configured algorithm on repetition 1 and saves it.
    Save {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Validates a snapshot and prints its contents.
    Load { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParameter {
    Alpha2,
    #[value(name = "N")]
    N,
    Alphac,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha2 => "alpha2",
            SweepParameter::N => "N",
            SweepParameter::Alphac => "alphac",
        }
    }
}

/// Runs a parsed command and returns its standard output.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { config } => commands::simulate(config, g),
        Command::Sweep {
            config,
            parameter,
            values,
        } => commands::sweep(config, *parameter, values, g),
        Command::HillclimbStudy { config } => commands::hillclimb_study(config, g),
        Command::Lrt {
            data,
            config,
            widgets,
            context,
            restricted,
            full,
            passes,
        } => {
            let spec = match (config, widgets) {
                (Some(path), _) => config::load(path)?.sim.spec,
                (None, Some(w)) => crate::features::TemplateSpec::new(
                    w.clone(),
                    context.clone().unwrap_or_default(),
                )
                .map_err(|e| CliError::config(format!("--widgets/--context: {e}")))?,
                (None, None) => return Err(CliError::config("lrt needs --config or --widgets")),
            };
            commands::lrt(data, &spec, restricted, full, *passes, g)
        }
        Command::Snapshot { action } => match action {
            SnapshotAction::Save { config, output } => commands::snapshot_save(config, output, g),
            SnapshotAction::Load { path } => commands::snapshot_load(path),
        },
        Command::Select { snapshot, context } => {
            commands::select(snapshot, context.as_deref(), g.seed.unwrap_or(0))
        }
    }
}
