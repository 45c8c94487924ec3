//! Joint training of the primary/auxiliary pair and the inference protocol.

mod infer;
mod losses;
mod train;

pub use infer::{accuracy, evaluate, evaluate_with, infer, inference_offsets};
pub use losses::{
    objective, supervised_losses, total_loss, unsupervised_losses, LabeledSample, Objective,
    UnlabeledSample, UnsupervisedOutcome,
};
pub use train::{
    train, train_with, DecisionRecord, EpochRecord, MetricsLog, SubsetSnapshot, TrainData, TrainOutcome,
};

use std::fmt;
use std::str::FromStr;

use crate::augment::{AugmentationSpec, TemporalViewSpec};
use crate::error::{Error, Result};
use crate::netcore::{build_net, OptimizerConfig, ParamStore, ScalableNetConfig};
use crate::pseudolabel::SchemeId;

/// One network: architecture plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ScalableNetConfig,
    pub params: ParamStore,
}

impl Network {
    pub fn build(config: ScalableNetConfig, seed: u64) -> Result<Self> {
        let params = build_net(&config, seed)?;
        Ok(Network { config, params })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetPair {
    pub primary: Network,
    pub auxiliary: Network,
}

impl NetPair {
    pub fn new(primary: Network, auxiliary: Network) -> Result<Self> {
        if primary.config.num_classes != auxiliary.config.num_classes {
            return Err(Error::config(format!(
                "primary has {} classes, auxiliary {}",
                primary.config.num_classes, auxiliary.config.num_classes
            )));
        }
        Ok(NetPair { primary, auxiliary })
    }

    /// Both nets initialized from one seed, on distinct streams.
    pub fn build(primary: ScalableNetConfig, auxiliary: ScalableNetConfig, seed: u64) -> Result<Self> {
        NetPair::new(
            Network::build(primary, seed.wrapping_mul(2))?,
            Network::build(auxiliary, seed.wrapping_mul(2).wrapping_add(1))?,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Both nets, cross pseudo-labeling under the configured scheme.
    Cmpl,
    /// Primary only, self pseudo-labeling.
    FixMatch,
    /// Both nets, labeled data only.
    Supervised,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Cmpl => "cmpl",
            TrainMode::FixMatch => "fixmatch",
            TrainMode::Supervised => "supervised",
        }
    }

    pub fn trains_auxiliary(self) -> bool {
        self != TrainMode::FixMatch
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cmpl" => Ok(TrainMode::Cmpl),
            "fixmatch" => Ok(TrainMode::FixMatch),
            "supervised" => Ok(TrainMode::Supervised),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Depth and width of one network; the input shape comes from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct NetShape {
    pub depth_blocks: usize,
    pub width_factor: f64,
    pub base_channels: usize,
}

impl NetShape {
    pub fn to_config(&self, num_classes: usize, input_frames: usize, spatial_dim: usize) -> ScalableNetConfig {
        ScalableNetConfig {
            depth_blocks: self.depth_blocks,
            width_factor: self.width_factor,
            base_channels: self.base_channels,
            num_classes,
            input_frames,
            spatial_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: TrainMode,
    pub scheme: SchemeId,
    pub tau: f64,
    pub lambda: f64,
    /// B_l
    pub labeled_batch: usize,
    /// B_u / B_l
    pub batch_ratio: usize,
    pub epochs: usize,
    /// `total_steps` is filled in by `train`.
    pub optimizer: OptimizerConfig,
    pub temporal: TemporalViewSpec,
    pub primary: NetShape,
    pub auxiliary: NetShape,
    pub standard: AugmentationSpec,
    pub weak: AugmentationSpec,
    pub strong: AugmentationSpec,
    /// Build the strong view from the same clip as the weak view.
    pub shared_clip: bool,
    pub num_clips: usize,
    /// Epochs between subset snapshots; 0 disables them.
    pub snapshot_interval: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: TrainMode::Cmpl,
            scheme: SchemeId::Cross,
            tau: 0.9,
            lambda: 5.0,
            labeled_batch: 2,
            batch_ratio: 5,
            epochs: 50,
            optimizer: OptimizerConfig::default(),
            temporal: TemporalViewSpec::default(),
            primary: NetShape { depth_blocks: 2, width_factor: 1.0, base_channels: 32 },
            auxiliary: NetShape { depth_blocks: 2, width_factor: 0.25, base_channels: 32 },
            standard: AugmentationSpec::standard(),
            weak: AugmentationSpec::weak(),
            strong: AugmentationSpec::strong(),
            shared_clip: true,
            num_clips: 3,
            snapshot_interval: 10,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// B_u
    pub fn unlabeled_batch(&self) -> usize {
        self.labeled_batch * self.batch_ratio
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.labeled_batch == 0 || self.batch_ratio == 0 {
            return Err(Error::config("labeled_batch and batch_ratio must be positive"));
        }
        if self.num_clips == 0 {
            return Err(Error::config("num_clips must be at least 1"));
        }
        if self.mode == TrainMode::FixMatch && self.scheme != SchemeId::FixMatchSingle {
            return Err(Error::config("fixmatch mode requires the fixmatch scheme"));
        }
        if self.mode == TrainMode::Cmpl && self.scheme == SchemeId::FixMatchSingle {
            return Err(Error::config("the fixmatch scheme runs in fixmatch mode"));
        }
        self.standard.validate()?;
        self.weak.validate()?;
        self.strong.validate()?;
        let probe = OptimizerConfig { total_steps: 1, ..self.optimizer.clone() };
        probe.validate()
    }

    pub fn primary_config(&self, num_classes: usize, spatial_dim: usize) -> ScalableNetConfig {
        self.primary.to_config(num_classes, self.temporal.primary_frames, spatial_dim)
    }

    pub fn auxiliary_config(&self, num_classes: usize, spatial_dim: usize) -> ScalableNetConfig {
        self.auxiliary.to_config(num_classes, self.temporal.aux_frames, spatial_dim)
    }
}
