//! Experiment configuration and the text form of network specs.
//!
//! ```toml
//! mode = "frame"          # or "tagging"
//! seed = 7
//! manifest = "data/manifest.toml"
//! folds = [0]
//!
//! [features]
//! sample_rate = 16000
//!
//! [[network.layers]]
//! type = "conv"
//! maps = 16
//! kernel = [5, 5]
//! pool = 5
//!
//! [[network.layers]]
//! type = "gru"
//! units = 16
//!
//! [train]
//! max_epochs = 40
//! ```
//!
//! The sigmoid output layer is appended with one unit per manifest class.

use std::path::{Path, PathBuf};

use sed_forge_core::features::FeatureConfig;
use sed_forge_core::nn::{Activation, LayerSpec, NetworkSpec};
use sed_forge_core::synth::{BankConfig, SynthConfig};
use sed_forge_core::train::{AdamConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, FormatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Frame-level detection.
    Frame,
    /// Chunk-level tagging through temporal max pooling.
    Tagging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationConfig {
    Sigmoid,
    Relu,
    Linear,
}

impl From<ActivationConfig> for Activation {
    fn from(a: ActivationConfig) -> Self {
        match a {
            ActivationConfig::Sigmoid => Activation::Sigmoid,
            ActivationConfig::Relu => Activation::Relu,
            ActivationConfig::Linear => Activation::Linear,
        }
    }
}

impl From<Activation> for ActivationConfig {
    fn from(a: Activation) -> Self {
        match a {
            Activation::Sigmoid => ActivationConfig::Sigmoid,
            Activation::Relu => ActivationConfig::Relu,
            Activation::Linear => ActivationConfig::Linear,
        }
    }
}

fn zero() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerConfig {
    Conv {
        maps: usize,
        kernel: [usize; 2],
        pool: usize,
    },
    Gru {
        units: usize,
        #[serde(default = "zero")]
        recurrent_dropout: f64,
    },
    Dense {
        units: usize,
        activation: ActivationConfig,
    },
    BatchNorm,
    Dropout {
        rate: f64,
    },
    TemporalMaxPool,
}

impl From<&LayerConfig> for LayerSpec {
    fn from(l: &LayerConfig) -> Self {
        match *l {
            LayerConfig::Conv { maps, kernel, pool } => LayerSpec::Conv {
                maps,
                kernel: (kernel[0], kernel[1]),
                freq_pool: pool,
            },
            LayerConfig::Gru {
                units,
                recurrent_dropout,
            } => LayerSpec::Recurrent {
                units,
                recurrent_dropout,
            },
            LayerConfig::Dense { units, activation } => LayerSpec::Dense {
                units,
                activation: activation.into(),
            },
            LayerConfig::BatchNorm => LayerSpec::BatchNorm,
            LayerConfig::Dropout { rate } => LayerSpec::Dropout { rate },
            LayerConfig::TemporalMaxPool => LayerSpec::TemporalMaxPool,
        }
    }
}

impl From<&LayerSpec> for LayerConfig {
    fn from(l: &LayerSpec) -> Self {
        match *l {
            LayerSpec::Conv {
                maps,
                kernel,
                freq_pool,
            } => LayerConfig::Conv {
                maps,
                kernel: [kernel.0, kernel.1],
                pool: freq_pool,
            },
            LayerSpec::Recurrent {
                units,
                recurrent_dropout,
            } => LayerConfig::Gru {
                units,
                recurrent_dropout,
            },
            LayerSpec::Dense { units, activation } => LayerConfig::Dense {
                units,
                activation: activation.into(),
            },
            LayerSpec::BatchNorm => LayerConfig::BatchNorm,
            LayerSpec::Dropout { rate } => LayerConfig::Dropout { rate },
            LayerSpec::TemporalMaxPool => LayerConfig::TemporalMaxPool,
        }
    }
}

/// Complete network spec as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub input_bands: usize,
    pub classes: usize,
    pub seed: u64,
    pub layers: Vec<LayerConfig>,
}

impl From<&NetworkSpec> for SpecConfig {
    fn from(s: &NetworkSpec) -> Self {
        Self {
            input_bands: s.input_bands,
            classes: s.classes,
            seed: s.seed,
            layers: s.layers.iter().map(LayerConfig::from).collect(),
        }
    }
}

impl From<&SpecConfig> for NetworkSpec {
    fn from(s: &SpecConfig) -> Self {
        NetworkSpec {
            input_bands: s.input_bands,
            classes: s.classes,
            seed: s.seed,
            layers: s.layers.iter().map(LayerSpec::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub sample_rate: u32,
    pub frame_seconds: f64,
    pub overlap: f64,
    pub bands: usize,
}

impl Default for FeatureSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self {
            sample_rate: f.sample_rate,
            frame_seconds: f.frame_seconds,
            overlap: f.overlap,
            bands: f.bands,
        }
    }
}

impl From<FeatureSection> for FeatureConfig {
    fn from(f: FeatureSection) -> Self {
        FeatureConfig {
            sample_rate: f.sample_rate,
            frame_seconds: f.frame_seconds,
            overlap: f.overlap,
            bands: f.bands,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Hidden layers; the output layer is added from the class list.
    pub layers: Vec<LayerConfig>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let mut layers = Vec::new();
        for pool in [5, 4, 2] {
            layers.push(LayerConfig::Conv {
                maps: 96,
                kernel: [5, 5],
                pool,
            });
            layers.push(LayerConfig::Dropout { rate: 0.25 });
        }
        layers.push(LayerConfig::Gru {
            units: 96,
            recurrent_dropout: 0.25,
        });
        layers.push(LayerConfig::Dropout { rate: 0.25 });
        Self { layers }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub sequence_length: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            sequence_length: t.sequence_length,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            learning_rate: t.adam.learning_rate,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub classes_instances: usize,
    pub instance_min_seconds: f64,
    pub instance_max_seconds: f64,
    pub mixtures: usize,
    pub mixture_seconds: f64,
    pub events_per_mixture: usize,
    pub min_cut_seconds: f64,
    pub max_cut_seconds: f64,
    pub max_polyphony: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
}

impl Default for SynthSection {
    fn default() -> Self {
        let b = BankConfig::default();
        let s = SynthConfig::default();
        Self {
            classes_instances: b.instances_per_class,
            instance_min_seconds: b.min_seconds,
            instance_max_seconds: b.max_seconds,
            mixtures: 20,
            mixture_seconds: s.mixture_seconds,
            events_per_mixture: s.events_per_mixture,
            min_cut_seconds: s.min_cut_seconds,
            max_cut_seconds: s.max_cut_seconds,
            max_polyphony: s.max_polyphony,
            split: [s.split.0, s.split.1, s.split.2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    /// Chunk length for tagging mode.
    pub chunk_seconds: f64,
    /// Write PNG event rolls next to the predictions.
    pub plots: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            chunk_seconds: 4.0,
            plots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Folds to run; empty means every fold in the manifest.
    pub folds: Vec<u32>,
    pub features: FeatureSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub synth: SynthSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Frame,
            seed: 0,
            manifest: None,
            out_dir: None,
            folds: Vec::new(),
            features: FeatureSection::default(),
            network: NetworkSection::default(),
            train: TrainSection::default(),
            synth: SynthSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are resolved against the file's directory.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Mode/spec consistency and value ranges that do not depend on the data.
    pub fn validate(&self, path: &Path) -> Result<()> {
        let mut errs = Vec::new();
        let pools = self
            .network
            .layers
            .iter()
            .filter(|l| matches!(l, LayerConfig::TemporalMaxPool))
            .count();
        match (self.mode, pools) {
            (Mode::Frame, 0) | (Mode::Tagging, 1) => {}
            (Mode::Frame, _) => errs.push("frame mode cannot use temporal_max_pool".to_string()),
            (Mode::Tagging, _) => {
                errs.push("tagging mode needs exactly one temporal_max_pool layer".to_string())
            }
        }
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            errs.push(format!("eval.threshold {} outside (0, 1)", self.eval.threshold));
        }
        if !(self.eval.chunk_seconds > 0.0) {
            errs.push("eval.chunk_seconds must be positive".into());
        }
        if let Err(e) = self.train_config().validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(FormatError::Invalid {
                path: path.to_path_buf(),
                reason: errs.join("; "),
            })
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        self.features.into()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            sequence_length: t.sequence_length,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            adam: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            threshold: self.eval.threshold,
            seed: self.seed,
        }
    }

    /// Full spec for `classes` outputs, with the sigmoid output layer appended.
    pub fn network_spec(&self, classes: usize) -> sed_forge_core::Result<NetworkSpec> {
        let mut layers: Vec<LayerSpec> = self.network.layers.iter().map(LayerSpec::from).collect();
        layers.push(LayerSpec::Dense {
            units: classes,
            activation: Activation::Sigmoid,
        });
        let spec = NetworkSpec {
            input_bands: self.features.bands,
            classes,
            layers,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bank_config(&self) -> BankConfig {
        BankConfig {
            sample_rate: self.features.sample_rate,
            instances_per_class: self.synth.classes_instances,
            min_seconds: self.synth.instance_min_seconds,
            max_seconds: self.synth.instance_max_seconds,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            mixtures: s.mixtures,
            mixture_seconds: s.mixture_seconds,
            events_per_mixture: s.events_per_mixture,
            min_cut_seconds: s.min_cut_seconds,
            max_cut_seconds: s.max_cut_seconds,
            max_polyphony: s.max_polyphony,
            split: (s.split[0], s.split[1], s.split[2]),
            seed: self.seed,
        }
    }
}
