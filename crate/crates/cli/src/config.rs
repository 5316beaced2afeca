//! Presets and the JSON experiment config.
//!
//! Settings resolve in three layers: the named preset, then the fields of a
//! `--config` file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use branchnet::branchclass::ProtocolConfig;
use branchnet::features::{FeatureStrategy, StrategyKind};
use branchnet::setvalued::MixtureConfig;
use branchnet::{Activation, Loss, NetworkConfig};
use serde::{Deserialize, Serialize};

/// Weight init spread used by every preset.
pub const PRESET_INIT_STDDEV: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[serde(rename = "paper-1d")]
    Paper1d,
    #[serde(rename = "paper-2d")]
    Paper2d,
    PaperTimeseries,
    PaperAccumulated,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Paper1d,
        Preset::Paper2d,
        Preset::PaperTimeseries,
        Preset::PaperAccumulated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper1d => "paper-1d",
            Preset::Paper2d => "paper-2d",
            Preset::PaperTimeseries => "paper-timeseries",
            Preset::PaperAccumulated => "paper-accumulated",
        }
    }

    pub fn uses_panel(self) -> bool {
        matches!(self, Preset::PaperTimeseries | Preset::PaperAccumulated)
    }

    /// The preset's network for `input_dim` inputs and `output_dim` outputs.
    ///
    /// `desk` shrinks the time-series network to 5 layers of 30.
    pub fn network(self, input_dim: usize, output_dim: usize, desk: bool, seed: u64) -> NetworkConfig {
        let elu = Activation::default_elu();
        let mut cfg = match self {
            Preset::Paper1d | Preset::Paper2d => {
                let mut c = NetworkConfig::regression(input_dim, &[50; 4], elu, output_dim);
                c.batch_size = 32;
                c.epochs = 100;
                c.learn_rate_schedule = vec![1e-3, 1e-4];
                c
            }
            Preset::PaperTimeseries => {
                let hidden: &[usize] = if desk { &[30; 5] } else { &[50; 15] };
                let mut c = NetworkConfig::regression(input_dim, hidden, elu, output_dim);
                c.batch_size = 100;
                c.epochs = 15;
                c.learn_rate_schedule = vec![1e-3, 1e-4, 1e-5];
                c
            }
            Preset::PaperAccumulated => {
                let mut c = NetworkConfig::regression(input_dim, &[100; 5], elu, output_dim);
                c.batch_size = 8;
                c.epochs = 25;
                c
            }
        };
        cfg.loss = Loss::LogCosh;
        cfg.init_stddev = PRESET_INIT_STDDEV;
        cfg.seed = seed;
        cfg
    }

    pub fn mixture(self, fraction_first: f64, desk: bool, seed: u64) -> Option<MixtureConfig> {
        match self {
            Preset::Paper1d => Some(MixtureConfig::paper_1d(fraction_first, seed)),
            Preset::Paper2d => Some(MixtureConfig::paper_2d(fraction_first, seed, desk)),
            _ => None,
        }
    }

    pub fn strategy(self) -> Option<FeatureStrategy> {
        match self {
            Preset::PaperTimeseries => Some(FeatureStrategy::new(StrategyKind::RelativeProportions)),
            Preset::PaperAccumulated => Some(FeatureStrategy::new(StrategyKind::AccumulatedAgeGroups)),
            _ => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!("unknown preset `{s}`, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelPaths {
    pub districts: PathBuf,
    pub series: PathBuf,
}

/// Everything an experiment needs, as read from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureConfig>,
    /// Directory holding `train.csv` and `test.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel: Option<PanelPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<FeatureStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads and validates a config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.data.as_mut() {
            rebase(d);
        }
        if let Some(p) = cfg.panel.as_mut() {
            rebase(&mut p.districts);
            rebase(&mut p.series);
        }
        if let Some(o) = cfg.out.as_mut() {
            rebase(o);
        }
        cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = &self.network {
            n.validate()?;
        }
        if let Some(m) = &self.mixture {
            m.validate()?;
        }
        if let Some(s) = &self.strategy {
            s.validate()?;
        }
        if let Some(p) = &self.protocol {
            p.validate()?;
        }
        if let Some(d) = &self.data {
            for f in ["train.csv", "test.csv"] {
                if !d.join(f).is_file() {
                    bail!("data directory {} has no {f}", d.display());
                }
            }
        }
        if let Some(p) = &self.panel {
            for f in [&p.districts, &p.series] {
                if !f.is_file() {
                    bail!("panel file {} does not exist", f.display());
                }
            }
        }
        if let Some(o) = &self.out {
            if o.exists() && !o.is_dir() {
                bail!("output path {} is not a directory", o.display());
            }
        }
        Ok(())
    }
}
