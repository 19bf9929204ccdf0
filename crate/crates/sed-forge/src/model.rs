//! Model files and training checkpoints.

use std::path::Path;

use sed_forge_core::features::{FeatureConfig, NormStats};
use sed_forge_core::nn::{NamedTensor, Network, NetworkSpec};
use sed_forge_core::train::{AdamConfig, EpochRecord, OptimizerState, TrainConfig, TrainLog, Trainer};
use serde::{Deserialize, Serialize};

use crate::cache::norm_stats_id;
use crate::config::{FeatureSection, SpecConfig};
use crate::container::{Blob, Container};
use crate::error::{FormatError, Result};

pub const MODEL_MAGIC: &str = "SEDFORGE-MODEL";
pub const MODEL_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &str = "SEDFORGE-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Rounds statistics to the precision they are stored with, so a model
/// normalizes exactly as it did during training.
pub fn storable_stats(stats: &NormStats) -> NormStats {
    let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect();
    NormStats {
        mean: q(&stats.mean),
        std: q(&stats.std),
    }
}

/// Trained network with everything needed to run it on raw audio.
#[derive(Debug, Clone)]
pub struct Model {
    pub network: Network<f32>,
    pub classes: Vec<String>,
    pub features: FeatureConfig,
    /// Window length in frames; the chunk length for tagging models.
    pub sequence_length: usize,
    pub norm: NormStats,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    classes: Vec<String>,
    sequence_length: usize,
    stats_id: String,
    features: FeatureSection,
    spec: SpecConfig,
}

fn tensor_blobs(prefix: &str, net: &Network<f32>) -> Vec<Blob> {
    net.named_tensors()
        .into_iter()
        .map(|t| Blob {
            name: format!("{prefix}{}", t.name),
            dims: t.shape,
            data: t.data,
        })
        .collect()
}

fn network_from_blobs(spec: &NetworkSpec, c: &Container, prefix: &str) -> sed_forge_core::Result<Network<f32>> {
    let mut net = Network::new(spec)?;
    let tensors: Vec<NamedTensor<f32>> = c
        .blobs
        .iter()
        .filter_map(|b| {
            b.name.strip_prefix(prefix).map(|n| NamedTensor {
                name: n.to_string(),
                shape: b.dims.clone(),
                data: b.data.clone(),
                trainable: true,
            })
        })
        .collect();
    net.load_named_tensors(&tensors)?;
    Ok(net)
}

fn parse_meta<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| FormatError::Corrupt {
        path: path.to_path_buf(),
        reason: format!("metadata: {e}"),
    })
}

fn corrupt(path: &Path, reason: impl Into<String>) -> FormatError {
    FormatError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

impl Model {
    pub fn stats_id(&self) -> String {
        norm_stats_id(&self.norm)
    }

    pub fn to_container(&self) -> Container {
        let f = self.features;
        let meta = ModelMeta {
            classes: self.classes.clone(),
            sequence_length: self.sequence_length,
            stats_id: self.stats_id(),
            features: FeatureSection {
                sample_rate: f.sample_rate,
                frame_seconds: f.frame_seconds,
                overlap: f.overlap,
                bands: f.bands,
            },
            spec: SpecConfig::from(self.network.spec()),
        };
        let mut blobs = tensor_blobs("", &self.network);
        let bands = self.norm.bands();
        for (name, v) in [("norm.mean", &self.norm.mean), ("norm.std", &self.norm.std)] {
            blobs.push(Blob {
                name: name.into(),
                dims: vec![bands],
                data: v.iter().map(|&x| x as f32).collect(),
            });
        }
        Container {
            metadata: toml::to_string(&meta).expect("model metadata serializes"),
            blobs,
        }
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let meta: ModelMeta = parse_meta(&c.metadata, path)?;
        let spec = NetworkSpec::from(&meta.spec);
        if meta.classes.len() != spec.classes {
            return Err(corrupt(path, "class list does not match the network outputs"));
        }
        let network = network_from_blobs(&spec, c, "")?;
        let stat = |name: &str| -> Result<Vec<f64>> {
            let b = c.blob(name).ok_or_else(|| corrupt(path, format!("missing blob '{name}'")))?;
            if b.data.len() != spec.input_bands {
                return Err(corrupt(path, format!("'{name}' has {} values", b.data.len())));
            }
            Ok(b.data.iter().map(|&x| x as f64).collect())
        };
        let norm = NormStats {
            mean: stat("norm.mean")?,
            std: stat("norm.std")?,
        };
        if norm_stats_id(&norm) != meta.stats_id {
            return Err(corrupt(path, "normalization statistics do not match their identity"));
        }
        Ok(Self {
            network,
            classes: meta.classes,
            features: meta.features.into(),
            sequence_length: meta.sequence_length,
            norm,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path, MODEL_MAGIC, MODEL_VERSION)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read(path, MODEL_MAGIC, MODEL_VERSION)?;
        Self::from_container(&c, path)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpochMeta {
    epoch: usize,
    train_loss: f64,
    validation_f1: f64,
    improved: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    spec: SpecConfig,
    sequence_length: usize,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    threshold: f64,
    seed: u64,
    epoch: usize,
    best_f1: Option<f64>,
    stale: usize,
    adam_step: u64,
    best_epoch: Option<usize>,
    stopped_early: bool,
    log: Vec<EpochMeta>,
}

/// Writes the full resumable trainer state.
pub fn save_checkpoint(path: &Path, t: &Trainer) -> Result<()> {
    let c = &t.config;
    let meta = CheckpointMeta {
        spec: SpecConfig::from(t.network.spec()),
        sequence_length: c.sequence_length,
        batch_size: c.batch_size,
        max_epochs: c.max_epochs,
        patience: c.patience,
        learning_rate: c.adam.learning_rate,
        beta1: c.adam.beta1,
        beta2: c.adam.beta2,
        epsilon: c.adam.epsilon,
        threshold: c.threshold,
        seed: c.seed,
        epoch: t.epoch,
        best_f1: t.best_f1,
        stale: t.stale,
        adam_step: t.optimizer.step,
        best_epoch: t.log.best_epoch,
        stopped_early: t.log.stopped_early,
        log: t
            .log
            .epochs
            .iter()
            .map(|r| EpochMeta {
                epoch: r.epoch,
                train_loss: r.train_loss,
                validation_f1: r.validation_f1,
                improved: r.improved,
            })
            .collect(),
    };
    let mut blobs = tensor_blobs("net.", &t.network);
    blobs.extend(tensor_blobs("best.", &t.best_network));
    for (kind, moments) in [("m", &t.optimizer.m), ("v", &t.optimizer.v)] {
        for (i, v) in moments.iter().enumerate() {
            blobs.push(Blob {
                name: format!("adam.{kind}.{i}"),
                dims: vec![v.len()],
                data: v.clone(),
            });
        }
    }
    let text = toml::to_string(&meta).expect("checkpoint metadata serializes");
    Container {
        metadata: text,
        blobs,
    }
    .write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let c = Container::read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let meta: CheckpointMeta = parse_meta(&c.metadata, path)?;
    let spec = NetworkSpec::from(&meta.spec);
    let network = network_from_blobs(&spec, &c, "net.")?;
    let best_network = network_from_blobs(&spec, &c, "best.")?;
    let config = TrainConfig {
        sequence_length: meta.sequence_length,
        batch_size: meta.batch_size,
        max_epochs: meta.max_epochs,
        patience: meta.patience,
        adam: AdamConfig {
            learning_rate: meta.learning_rate,
            beta1: meta.beta1,
            beta2: meta.beta2,
            epsilon: meta.epsilon,
        },
        threshold: meta.threshold,
        seed: meta.seed,
    };
    let mut trainer = Trainer::new(network, config)?;
    let sizes: Vec<usize> = trainer.optimizer.m.iter().map(Vec::len).collect();
    let mut state = OptimizerState::new(&sizes);
    state.step = meta.adam_step;
    for (kind, moments) in [("m", &mut state.m), ("v", &mut state.v)] {
        for (i, slot) in moments.iter_mut().enumerate() {
            let b = c
                .blob(&format!("adam.{kind}.{i}"))
                .filter(|b| b.data.len() == slot.len())
                .ok_or_else(|| corrupt(path, format!("missing or mis-sized optimizer moment {kind}.{i}")))?;
            slot.copy_from_slice(&b.data);
        }
    }
    trainer.optimizer = state;
    trainer.best_network = best_network;
    trainer.epoch = meta.epoch;
    trainer.best_f1 = meta.best_f1;
    trainer.stale = meta.stale;
    trainer.log = TrainLog {
        epochs: meta
            .log
            .iter()
            .map(|r| EpochRecord {
                epoch: r.epoch,
                train_loss: r.train_loss,
                validation_f1: r.validation_f1,
                improved: r.improved,
            })
            .collect(),
        best_epoch: meta.best_epoch,
        stopped_early: meta.stopped_early,
    };
    Ok(trainer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use sed_forge_core::Tensor;

    fn model() -> Model {
        let mut cfg = ExperimentConfig::default();
        cfg.features.bands = 8;
        cfg.network.layers = vec![
            crate::config::LayerConfig::Conv {
                maps: 2,
                kernel: [3, 3],
                pool: 4,
            },
            crate::config::LayerConfig::Gru {
                units: 3,
                recurrent_dropout: 0.0,
            },
        ];
        let spec = cfg.network_spec(2).unwrap();
        Model {
            network: Network::new(&spec).unwrap(),
            classes: vec!["a".into(), "b".into()],
            features: FeatureConfig {
                bands: 8,
                ..cfg.feature_config()
            },
            sequence_length: 16,
            norm: storable_stats(&NormStats {
                mean: (0..8).map(|i| i as f64 * 0.1).collect(),
                std: vec![1.3; 8],
            }),
        }
    }

    #[test]
    fn save_load_forward_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.sfm");
        let m = model();
        m.save(&p).unwrap();
        let back = Model::load(&p).unwrap();
        assert_eq!(back.network, m.network);
        assert_eq!(back.norm, m.norm);
        assert_eq!(back.classes, m.classes);
        assert_eq!(back.features, m.features);
        let x = Tensor::from_vec(&[1, 8, 5], (0..40).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
        assert_eq!(back.network.predict(&x).unwrap(), m.network.predict(&x).unwrap());
        let again = dir.path().join("m2.sfm");
        back.save(&again).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn truncated_model_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.sfm");
        model().save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        for n in [0, 5, bytes.len() / 2, bytes.len() - 1] {
            std::fs::write(&p, &bytes[..n]).unwrap();
            assert!(Model::load(&p).is_err());
        }
    }

    #[test]
    fn checkpoint_wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.sfm");
        model().save(&p).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(FormatError::BadMagic { .. })));
    }
}
