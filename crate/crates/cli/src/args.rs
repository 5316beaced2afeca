use std::path::PathBuf;

use branchnet::features::{StrategyKind, TargetKind};
use branchnet::Loss;
use clap::{Args, Parser, Subcommand};

use crate::config::Preset;

#[derive(Debug, Parser)]
#[command(name = "branchnet", version, about = "Majority-branch regression and hidden-feature detection")]
pub struct Cli {
    /// Seed for data generation and network initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Experiment config JSON; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Scaled-down presets for a desktop machine.
    #[arg(long, global = true)]
    pub desk: bool,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset.
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
    /// Train a network on a mixture or a panel.
    Train(TrainArgs),
    /// Run the three-network hidden-feature protocol on a labeled panel.
    Detect(DetectArgs),
    /// Correlation matrix and heatmap of a panel design.
    Correlate(CorrelateArgs),
    /// Train the same network with several losses on one mixture.
    CompareLosses(CompareArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Two-branch 1D mixture, written as train.csv and test.csv.
    #[command(name = "1d")]
    OneD(MixtureArgs),
    /// Two-branch 2D mixture, written as train.csv and test.csv.
    #[command(name = "2d")]
    TwoD(MixtureArgs),
    /// Synthetic district panel, written as districts.csv and series.csv.
    Panel(PanelGenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MixtureArgs {
    /// Probability that a sample comes from branch 1 [default: 0.7].
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Standard deviation of the target noise.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PanelGenArgs {
    /// Relative increase of the final case count of B districts.
    #[arg(long, default_value_t = 0.5)]
    pub effect: f64,
    #[arg(long, default_value_t = 40)]
    pub districts: usize,
    #[arg(long, default_value_t = 80)]
    pub days: usize,
    /// Share of districts labeled B.
    #[arg(long, default_value_t = 0.25)]
    pub label_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PanelArgs {
    #[arg(long)]
    pub districts: Option<PathBuf>,
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<StrategyKind>,
    #[arg(long, value_parser = parse_target)]
    pub target: Option<TargetKind>,
    /// Drop Berlin, Hamburg and Munich.
    #[arg(long)]
    pub exclude_large_cities: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Directory with train.csv and test.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Mixture fraction when the data is generated on the fly [default: 0.7].
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Epochs per learning-rate step.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub accuracy_band: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Directory with train.csv; generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Mixture fraction when the data is generated [default: 0.5].
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Comma-separated losses: mse, mae, logcosh, huber or huber:<delta>.
    #[arg(long, value_delimiter = ',', value_parser = parse_loss, default_value = "mse,mae,logcosh")]
    pub losses: Vec<Loss>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

pub fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse::<StrategyKind>().map_err(|e| e.to_string())
}

pub fn parse_target(s: &str) -> Result<TargetKind, String> {
    match s {
        "cases" => Ok(TargetKind::Cases),
        "deaths" => Ok(TargetKind::Deaths),
        "active" => Ok(TargetKind::Active),
        _ => Err(format!("unknown target `{s}`, expected cases, deaths or active")),
    }
}

pub fn parse_loss(s: &str) -> Result<Loss, String> {
    match s {
        "mse" => Ok(Loss::Mse),
        "mae" => Ok(Loss::Mae),
        "logcosh" => Ok(Loss::LogCosh),
        "huber" => Ok(Loss::Huber { delta: 1.0 }),
        _ => match s.strip_prefix("huber:").map(str::parse::<f64>) {
            Some(Ok(delta)) => Loss::huber(delta).map_err(|e| e.to_string()),
            _ => Err(format!("unknown loss `{s}`, expected mse, mae, logcosh, huber or huber:<delta>")),
        },
    }
}
