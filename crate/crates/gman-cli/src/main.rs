//! `gman` command line: synthesize datasets, train, predict, explain,
//! evaluate, and run the gradient-check suite.
//!
//! Exit codes: 0 success, 2 usage (clap), 3 validation failure, 4 training
//! divergence, 1 anything else. Every failure prints a single
//! machine-parseable line `gman: error[<category>]: <message>` to stderr.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalMetric, SynthTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Validation,
    Divergence,
    Runtime,
}

impl Category {
    fn code(self) -> u8 {
        match self {
            Category::Validation => 3,
            Category::Divergence => 4,
            Category::Runtime => 1,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Category::Validation => "validation",
            Category::Divergence => "divergence",
            Category::Runtime => "runtime",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            category: Category::Validation,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            category: Category::Runtime,
            message: message.into(),
        }
    }
}

impl From<gman_core::Error> for CliError {
    fn from(e: gman_core::Error) -> Self {
        use gman_core::Error as E;
        let category = match &e {
            E::InvalidSpec(_)
            | E::InvalidData(_)
            | E::InvalidPartition(_)
            | E::ShapeMismatch { .. }
            | E::Dataset(_)
            | E::Checkpoint(_)
            | E::MetricUndefined(_)
            | E::UnknownChannel { .. }
            | E::Routing { .. }
            | E::AttributionIneligible { .. }
            | E::UseGraphContribution { .. } => Category::Validation,
            E::NonFinite { .. } | E::Training(_) | E::Io(_) | E::Json(_) => Category::Runtime,
        };
        Self {
            category,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gman",
    version,
    about = "Graph mixing additive networks over sets of sparse trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (JSONL with a meta header).
    Synth {
        /// Which task to generate.
        #[arg(value_enum)]
        task: SynthTask,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        /// Sample count (sparse-traj only; the gadget tasks are 4 points).
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label-irrelevant channels beyond the two signal channels.
        #[arg(long, default_value_t = 1)]
        extra_channels: usize,
        #[arg(long, default_value_t = 2)]
        min_nodes: usize,
        #[arg(long, default_value_t = 6)]
        max_nodes: usize,
        /// Timestamps are drawn uniformly from [0, t-max).
        #[arg(long, default_value_t = 48.0)]
        t_max: f64,
        /// Half-width of per-node measurement noise.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        /// Probability an extra channel is absent from a sample.
        #[arg(long, default_value_t = 0.3)]
        missing_rate: f64,
    },
    /// Train a model; writes checkpoint.json and train_log.jsonl.
    Train {
        /// Training dataset (JSONL).
        #[arg(long)]
        data: PathBuf,
        /// Partition spec (JSON with feature_subsets and graph_subsets).
        #[arg(long)]
        partition: PathBuf,
        /// Training configuration (JSON; missing fields use defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a dataset with a checkpoint; one JSON record per sample.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the contribution report for one sample.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// set_id of the sample to explain.
        #[arg(long)]
        sample: String,
        /// Report path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a static SVG bar chart of the contributions.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Include the source-side contribution view.
        #[arg(long)]
        sources: bool,
    },
    /// Evaluate a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "auroc")]
        metric: EvalMetric,
        /// Emit machine-readable JSON instead of prose.
        #[arg(long)]
        json: bool,
    },
    /// Run the end-to-end finite-difference gradient suite.
    Gradcheck {
        /// Number of seeded toy models to check.
        #[arg(long, default_value_t = 20)]
        cases: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            task,
            out,
            samples,
            seed,
            extra_channels,
            min_nodes,
            max_nodes,
            t_max,
            noise,
            missing_rate,
        } => commands::cmd_synth(
            task,
            &out,
            samples,
            seed,
            extra_channels,
            min_nodes,
            max_nodes,
            t_max,
            noise,
            missing_rate,
        ),
        Command::Train {
            data,
            partition,
            config,
            out,
            seed,
        } => commands::cmd_train(&data, &partition, config.as_deref(), &out, seed),
        Command::Predict {
            checkpoint,
            data,
            out,
        } => commands::cmd_predict(&checkpoint, &data, out.as_deref()),
        Command::Explain {
            checkpoint,
            data,
            sample,
            out,
            svg,
            sources,
        } => commands::cmd_explain(
            &checkpoint,
            &data,
            &sample,
            out.as_deref(),
            svg.as_deref(),
            sources,
        ),
        Command::Eval {
            checkpoint,
            data,
            metric,
            json,
        } => commands::cmd_eval(&checkpoint, &data, metric, json),
        Command::Gradcheck { cases, seed, json } => commands::cmd_gradcheck(cases, seed, json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gman: error[{}]: {}", e.category.label(), e.message);
            ExitCode::from(e.category.code())
        }
    }
}
