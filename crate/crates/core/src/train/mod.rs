//! Optimisation and the two-stage training protocol: a frame encoder trained
//! on the multitask loss, then a Bi-LSTM over whitened encoder features.

pub mod checkpoint;
pub mod pipeline;
pub mod scheduler;
pub mod sgd;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use pipeline::{
    extract_features, run_pipeline, train_stage1, train_stage2, EpochRecord, History, Stage, TrainData, TrainState,
};
pub use scheduler::{PlateauScheduler, SchedulerConfig};
pub use sgd::{clip_grad_norm, grad_norm, sgd_step, SgdConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{VideoAnnotation, N_PHASES, N_TOOLS};
use crate::error::{Error, Result};
use crate::losses::{JointActivation, MultitaskWeights};
use crate::stats::{
    build_cooccurrence, compute_class_weights, ClassFrequencies, ClassWeights, CooccurrenceModel, WhiteningMode,
    DEFAULT_EPSILON, DEFAULT_WHITENING_LAMBDA, STRICT_EPSILON,
};

/// Global gradient-norm clip. Unobserved tool/phase cells put 1e8 entries
/// into the joint-loss penalty, and unclipped first steps wreck the encoder.
pub const DEFAULT_MAX_GRAD_NORM: f64 = 10.0;

/// Which tasks and stages a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Ablation {
    /// Stage 1, tool loss only.
    #[serde(rename = "BL1")]
    Bl1,
    /// BL1 followed by a tool-only Bi-LSTM.
    #[serde(rename = "BL2")]
    Bl2,
    /// Stage 1, phase loss only.
    #[serde(rename = "BL3")]
    Bl3,
    /// BL3 followed by a phase-only Bi-LSTM.
    #[serde(rename = "BL4")]
    Bl4,
    /// Stage 1 with all three losses.
    #[serde(rename = "BL5")]
    Bl5,
    /// BL5 followed by a multitask Bi-LSTM.
    #[default]
    #[serde(rename = "proposed")]
    Proposed,
}

impl Ablation {
    pub const ALL: [Ablation; 6] =
        [Ablation::Bl1, Ablation::Bl2, Ablation::Bl3, Ablation::Bl4, Ablation::Bl5, Ablation::Proposed];

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Bl1 => "BL1",
            Ablation::Bl2 => "BL2",
            Ablation::Bl3 => "BL3",
            Ablation::Bl4 => "BL4",
            Ablation::Bl5 => "BL5",
            Ablation::Proposed => "proposed",
        }
    }

    pub fn trains_phase(&self) -> bool {
        !matches!(self, Ablation::Bl1 | Ablation::Bl2)
    }

    pub fn trains_tool(&self) -> bool {
        !matches!(self, Ablation::Bl3 | Ablation::Bl4)
    }

    pub fn has_stage2(&self) -> bool {
        matches!(self, Ablation::Bl2 | Ablation::Bl4 | Ablation::Proposed)
    }

    /// Loss weights with the disabled terms zeroed. The same mask applies to
    /// both stages.
    pub fn mask(&self, base: MultitaskWeights) -> MultitaskWeights {
        match self {
            Ablation::Bl1 | Ablation::Bl2 => MultitaskWeights { alpha1: 0.0, alpha2: base.alpha2, alpha3: 0.0 },
            Ablation::Bl3 | Ablation::Bl4 => MultitaskWeights { alpha1: base.alpha1, alpha2: 0.0, alpha3: 0.0 },
            Ablation::Bl5 | Ablation::Proposed => base,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation `{s}` (BL1..BL5 or proposed)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_hidden: usize,
    pub feature_dim: usize,
    pub lstm_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { encoder_hidden: 128, feature_dim: 128, lstm_hidden: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhiteningConfig {
    pub mode: WhiteningMode,
    pub lambda: f64,
}

impl Default for WhiteningConfig {
    fn default() -> Self {
        Self { mode: WhiteningMode::Zca, lambda: DEFAULT_WHITENING_LAMBDA }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch_frames: usize,
    pub sgd: SgdConfig,
    pub scheduler: SchedulerConfig,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_frames: 100,
            sgd: SgdConfig::stage1_default(),
            scheduler: SchedulerConfig::stage1_default(),
        }
    }
}

/// Stage 2 always uses a batch of one video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub scheduler: SchedulerConfig,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self { epochs: 1000, sgd: SgdConfig::stage2_default(), scheduler: SchedulerConfig::stage2_default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ablation: Ablation,
    pub alphas: MultitaskWeights,
    pub joint_loss_swap_activations: bool,
    pub epsilon: f64,
    /// Overrides `epsilon` with f64 machine epsilon.
    pub strict_epsilon: bool,
    pub whitening: WhiteningConfig,
    pub model: ModelConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    /// Global gradient-norm clip applied before every step; `null` disables it.
    pub max_grad_norm: Option<f64>,
    /// Checkpoint every this many epochs of either stage; 0 keeps only the
    /// final checkpoint.
    pub checkpoint_every: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ablation: Ablation::Proposed,
            alphas: MultitaskWeights::default(),
            joint_loss_swap_activations: false,
            epsilon: DEFAULT_EPSILON,
            strict_epsilon: false,
            whitening: WhiteningConfig::default(),
            model: ModelConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            max_grad_norm: Some(DEFAULT_MAX_GRAD_NORM),
            checkpoint_every: 0,
        }
    }
}

impl PipelineConfig {
    /// Shortened schedule used by the desk-scale synthetic runs.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.stage1.epochs = 50;
        c.stage2.epochs = 100;
        c
    }

    pub fn resolved_epsilon(&self) -> f64 {
        if self.strict_epsilon {
            STRICT_EPSILON
        } else {
            self.epsilon
        }
    }

    pub fn activation(&self) -> JointActivation {
        JointActivation::from_swap(self.joint_loss_swap_activations)
    }

    pub fn stage_alphas(&self) -> MultitaskWeights {
        self.ablation.mask(self.alphas)
    }

    /// Errors carry the offending field path.
    pub fn validate(&self) -> Result<()> {
        let cfg = |path: &str, e: Error| Error::config(format!("pipeline.{path}"), e.to_string());
        self.alphas.validate().map_err(|e| cfg("alphas", e))?;
        self.stage_alphas().validate().map_err(|e| cfg("alphas", e))?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("pipeline.epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.whitening.lambda >= 0.0 && self.whitening.lambda.is_finite()) {
            return Err(Error::config("pipeline.whitening.lambda", "must be non-negative"));
        }
        let m = self.model;
        for (name, v) in
            [("encoder_hidden", m.encoder_hidden), ("feature_dim", m.feature_dim), ("lstm_hidden", m.lstm_hidden)]
        {
            if v == 0 {
                return Err(Error::config(format!("pipeline.model.{name}"), "must be positive"));
            }
        }
        if self.stage1.epochs == 0 {
            return Err(Error::config("pipeline.stage1.epochs", "must be positive"));
        }
        if self.stage1.batch_frames == 0 {
            return Err(Error::config("pipeline.stage1.batch_frames", "must be positive"));
        }
        if self.ablation.has_stage2() && self.stage2.epochs == 0 {
            return Err(Error::config("pipeline.stage2.epochs", "must be positive"));
        }
        self.stage1.sgd.validate().map_err(|e| cfg("stage1.sgd", e))?;
        self.stage2.sgd.validate().map_err(|e| cfg("stage2.sgd", e))?;
        self.stage1.scheduler.validate().map_err(|e| cfg("stage1.scheduler", e))?;
        self.stage2.scheduler.validate().map_err(|e| cfg("stage2.scheduler", e))?;
        if let Some(g) = self.max_grad_norm {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config("pipeline.max_grad_norm", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Class weights and co-occurrence statistics from the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    pub phase_weights: ClassWeights,
    pub tool_weights: ClassWeights,
    pub cooccurrence: CooccurrenceModel,
}

impl TrainingStats {
    pub fn from_videos(videos: &[&VideoAnnotation], epsilon: f64) -> Result<Self> {
        let labels = || videos.iter().flat_map(|v| v.labels().iter());
        let phase_weights = compute_class_weights(&ClassFrequencies::phases(labels())?)?;
        let tool_weights = compute_class_weights(&ClassFrequencies::tools(labels())?)?;
        let cooccurrence = build_cooccurrence(labels(), epsilon)?;
        debug_assert_eq!((phase_weights.len(), tool_weights.len()), (N_PHASES, N_TOOLS));
        Ok(Self { phase_weights, tool_weights, cooccurrence })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_masks() {
        let base = MultitaskWeights::new(1.0, 2.0, 3.0).unwrap();
        assert_eq!(Ablation::Bl1.mask(base), MultitaskWeights { alpha1: 0.0, alpha2: 2.0, alpha3: 0.0 });
        assert_eq!(Ablation::Bl2.mask(base), Ablation::Bl1.mask(base));
        assert_eq!(Ablation::Bl3.mask(base), MultitaskWeights { alpha1: 1.0, alpha2: 0.0, alpha3: 0.0 });
        assert_eq!(Ablation::Bl4.mask(base), Ablation::Bl3.mask(base));
        assert_eq!(Ablation::Bl5.mask(base), base);
        assert_eq!(Ablation::Proposed.mask(base), base);
        let stage2: Vec<_> = Ablation::ALL.iter().filter(|a| a.has_stage2()).map(|a| a.name()).collect();
        assert_eq!(stage2, ["BL2", "BL4", "proposed"]);
    }

    #[test]
    fn ablation_parse_and_serde() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert_eq!("bl3".parse::<Ablation>().unwrap(), Ablation::Bl3);
        assert!("BL6".parse::<Ablation>().is_err());
    }

    #[test]
    fn default_config_carries_published_hyperparameters() {
        let c = PipelineConfig::default();
        assert_eq!((c.stage1.epochs, c.stage2.epochs, c.stage1.batch_frames), (200, 1000, 100));
        assert_eq!((c.stage1.sgd.lr, c.stage2.sgd.lr), (1e-4, 1e-2));
        assert_eq!((c.stage1.sgd.momentum, c.stage1.sgd.weight_decay), (0.9, 5e-4));
        assert_eq!((c.stage1.scheduler.factor, c.stage2.scheduler.factor), (0.9, 0.5));
        assert_eq!(c.stage1.scheduler.patience, 5);
        c.validate().unwrap();
    }

    #[test]
    fn validation_names_fields() {
        let mut c = PipelineConfig::default();
        c.stage1.sgd.momentum = 1.5;
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("pipeline.stage1.sgd"), "{e}");
        let mut c = PipelineConfig { ablation: Ablation::Bl3, ..Default::default() };
        c.alphas.alpha1 = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
    }
}
