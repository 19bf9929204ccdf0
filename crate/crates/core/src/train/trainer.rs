use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamConfig, OptimizerState};
use crate::detect::forward_windows;
use crate::features::{split_sequences, FeatureMatrix, SequenceWindow, WindowMode};
use crate::metrics::{f1_from_stats, SegmentStats};
use crate::nn::Network;
use crate::rng;
use crate::synth::EventRoll;
use crate::{Error, Result, Tensor};

/// Normalized features of one recording with its frame targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub features: FeatureMatrix,
    pub targets: EventRoll,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Context window length in frames.
    pub sequence_length: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    /// Threshold used by the validation F1.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sequence_length: 128,
            batch_size: 32,
            max_epochs: 1000,
            patience: 100,
            adam: AdamConfig::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if self.sequence_length == 0 {
            errs.push("sequence_length must be at least 1".into());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            errs.push("patience must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            errs.push(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if !(self.adam.learning_rate > 0.0) {
            errs.push("learning rate must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_f1: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainLog {
    /// One tab-separated line per epoch, then the outcome.
    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_f1\tevent\n");
        for r in &self.epochs {
            s += &format!(
                "{}\t{:.6}\t{:.6}\t{}\n",
                r.epoch,
                r.train_loss,
                r.validation_f1,
                if r.improved { "best" } else { "-" }
            );
        }
        match self.best_epoch {
            Some(b) => s += &format!("# best_epoch {b}\n"),
            None => s += "# best_epoch none\n",
        }
        if self.stopped_early {
            s += "# stopped early\n";
        }
        s
    }
}

/// Resumable training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub network: Network<f32>,
    pub optimizer: OptimizerState<f32>,
    pub config: TrainConfig,
    /// Next epoch to run.
    pub epoch: usize,
    pub best_network: Network<f32>,
    pub best_f1: Option<f64>,
    /// Epochs since the last improvement.
    pub stale: usize,
    pub log: TrainLog,
}

impl Trainer {
    pub fn new(network: Network<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let sizes: Vec<usize> = network.parameters().iter().map(|p| p.1.len()).collect();
        Ok(Self {
            best_network: network.snapshot(),
            optimizer: OptimizerState::new(&sizes),
            network,
            config,
            epoch: 0,
            best_f1: None,
            stale: 0,
            log: TrainLog::default(),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.max_epochs || self.log.stopped_early
    }

    /// One pass over shuffled training windows followed by validation.
    /// On error the network and optimizer are left as they were before the epoch.
    pub fn run_epoch(
        &mut self,
        train: &[Recording],
        validation: &[Recording],
    ) -> Result<EpochRecord> {
        check_splits(&self.network, train, validation)?;
        let backup = (self.network.snapshot(), self.optimizer.clone());
        match self.epoch_inner(train, validation) {
            Ok(r) => Ok(r),
            Err(e) => {
                self.network = backup.0;
                self.optimizer = backup.1;
                Err(e)
            }
        }
    }

    fn epoch_inner(
        &mut self,
        train: &[Recording],
        validation: &[Recording],
    ) -> Result<EpochRecord> {
        let cfg = &self.config;
        let epoch = self.epoch;
        let mut windows: Vec<SequenceWindow> = Vec::new();
        for rec in train {
            windows.extend(split_sequences(
                &rec.features,
                &rec.targets,
                cfg.sequence_length,
                WindowMode::Train { epoch },
            )?);
        }
        windows.shuffle(&mut rng::stream(cfg.seed, &[0x7a1, epoch as u64, 0]));
        let mut dropout_rng = rng::stream(cfg.seed, &[0x7a1, epoch as u64, 1]);
        let bands = self.network.spec().input_bands;
        let classes = self.network.spec().classes;
        let tagging = self.network.spec().is_tagging();
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in windows.chunks(cfg.batch_size) {
            let (x, y, mask) = assemble(batch, bands, classes, tagging)?;
            self.network.forward_train(&x, &mut dropout_rng)?;
            let (grads, loss) = self.network.backward(&y, &mask)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
            }
            adam_step(
                &mut self.network.parameters_mut(),
                &grads.tensors,
                &mut self.optimizer,
                &cfg.adam,
            )?;
            loss_sum += loss as f64;
            batches += 1;
        }
        let validation_f1 = validation_f1(
            &self.network,
            validation,
            cfg.sequence_length,
            cfg.threshold,
        )?;
        let improved = self.best_f1.is_none_or(|b| validation_f1 > b);
        if improved {
            self.best_f1 = Some(validation_f1);
            self.best_network = self.network.snapshot();
            self.log.best_epoch = Some(epoch);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            validation_f1,
            improved,
        };
        self.log.epochs.push(record);
        self.epoch += 1;
        if self.stale >= self.config.patience {
            self.log.stopped_early = true;
        }
        Ok(record)
    }

    /// Best-validation weights and the log.
    pub fn finish(self) -> (Network<f32>, TrainLog) {
        (self.best_network, self.log)
    }
}

fn check_splits(net: &Network<f32>, train: &[Recording], validation: &[Recording]) -> Result<()> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyInput(
            "training and validation splits must both be non-empty".into(),
        ));
    }
    let spec = net.spec();
    for rec in train.iter().chain(validation) {
        if rec.features.bands != spec.input_bands || rec.targets.num_classes() != spec.classes {
            return Err(Error::Shape(format!(
                "recording with {} bands / {} classes for a model with {} / {}",
                rec.features.bands,
                rec.targets.num_classes(),
                spec.input_bands,
                spec.classes
            )));
        }
    }
    Ok(())
}

/// Batch tensors: features `[B, F, L]`, targets `[B, K, L]` (or `[B, K, 1]`
/// with chunk labels when tagging) and the per-frame mask.
fn assemble(
    batch: &[SequenceWindow],
    bands: usize,
    classes: usize,
    tagging: bool,
) -> Result<(Tensor<f32>, Tensor<f32>, Vec<u8>)> {
    let length = batch[0].length;
    let b = batch.len();
    let mut x = Vec::with_capacity(b * bands * length);
    let mut y = Vec::new();
    let mut mask = Vec::new();
    for w in batch {
        x.extend_from_slice(&w.features);
        if tagging {
            for k in 0..classes {
                y.push(chunk_label(w, k) as f32);
            }
            mask.push(1);
        } else {
            y.extend(w.targets.iter().map(|&v| v as f32));
            mask.extend(w.mask());
        }
    }
    let out = if tagging { 1 } else { length };
    Ok((
        Tensor::from_vec(&[b, bands, length], x)?,
        Tensor::from_vec(&[b, classes, out], y)?,
        mask,
    ))
}

fn chunk_label(w: &SequenceWindow, k: usize) -> u8 {
    w.targets[k * w.length..k * w.length + w.valid]
        .iter()
        .any(|&v| v != 0) as u8
}

/// Micro F1 over validation frames (or chunks for tagging models) at `threshold`.
pub fn validation_f1(
    net: &Network<f32>,
    recordings: &[Recording],
    length: usize,
    threshold: f64,
) -> Result<f64> {
    let bands = net.spec().input_bands;
    let classes = net.spec().classes;
    let tagging = net.spec().is_tagging();
    let mut stats = SegmentStats::default();
    for rec in recordings {
        let windows = split_sequences(&rec.features, &rec.targets, length, WindowMode::Eval)?;
        let outs = forward_windows(net, &windows, bands)?;
        for (w, out) in windows.iter().zip(&outs) {
            if tagging {
                let r: Vec<u8> = (0..classes).map(|k| chunk_label(w, k)).collect();
                let p: Vec<u8> = out.iter().map(|&v| (v as f64 >= threshold) as u8).collect();
                stats += SegmentStats::from_segment(&r, &p);
            } else {
                for t in 0..w.valid {
                    let r: Vec<u8> = (0..classes).map(|k| w.targets[k * length + t]).collect();
                    let p: Vec<u8> = (0..classes)
                        .map(|k| (out[k * length + t] as f64 >= threshold) as u8)
                        .collect();
                    stats += SegmentStats::from_segment(&r, &p);
                }
            }
        }
    }
    Ok(f1_from_stats(&stats).f1)
}

/// Trains until early stopping or `max_epochs`, returning the best-validation weights.
pub fn train(
    network: Network<f32>,
    train: &[Recording],
    validation: &[Recording],
    config: &TrainConfig,
) -> Result<(Network<f32>, TrainLog)> {
    let mut trainer = Trainer::new(network, config.clone())?;
    check_splits(&trainer.network, train, validation)?;
    while !trainer.is_finished() {
        trainer.run_epoch(train, validation)?;
    }
    Ok(trainer.finish())
}
