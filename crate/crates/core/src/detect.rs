//! Windowed prediction, threshold binarization and event reconstruction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::features::{split_sequences, FeatureMatrix, SequenceWindow, WindowMode};
use crate::nn::Network;
use crate::synth::{EventAnnotation, EventRoll};
use crate::{Error, Result, Tensor};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Windows per inference batch. Outputs do not depend on this value.
const PREDICT_BATCH: usize = 16;

/// Class-major `K x T` event activity probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityProbabilities {
    pub classes: Vec<String>,
    pub frames: usize,
    pub hop_seconds: f64,
    pub values: Vec<f32>,
}

impl ActivityProbabilities {
    pub fn get(&self, class: usize, frame: usize) -> f32 {
        self.values[class * self.frames + frame]
    }

    pub fn row(&self, class: usize) -> &[f32] {
        &self.values[class * self.frames..(class + 1) * self.frames]
    }
}

/// Inference outputs for a list of windows: `K x L` each, or `K x 1` in tagging mode.
pub(crate) fn forward_windows(
    net: &Network<f32>,
    windows: &[SequenceWindow],
    bands: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(PREDICT_BATCH) {
        let length = chunk[0].length;
        let mut x = Vec::with_capacity(chunk.len() * bands * length);
        for w in chunk {
            x.extend_from_slice(&w.features);
        }
        let y = net.predict(&Tensor::from_vec(&[chunk.len(), bands, length], x)?)?;
        let per = y.len() / chunk.len();
        out.extend(y.data().chunks(per).map(|c| c.to_vec()));
    }
    Ok(out)
}

fn check_bands(net: &Network<f32>, features: &FeatureMatrix, classes: &[String]) -> Result<()> {
    let spec = net.spec();
    if features.bands != spec.input_bands {
        return Err(Error::Shape(format!(
            "model expects {} bands, features have {}",
            spec.input_bands, features.bands
        )));
    }
    if classes.len() != spec.classes {
        return Err(Error::Shape(format!(
            "model predicts {} classes, {} names given",
            spec.classes,
            classes.len()
        )));
    }
    Ok(())
}

fn eval_windows(
    features: &FeatureMatrix,
    classes: usize,
    length: usize,
) -> Result<Vec<SequenceWindow>> {
    let dummy = EventRoll::zeros(
        (0..classes).map(|_| String::new()).collect(),
        features.frames,
        features.hop_seconds,
    );
    split_sequences(features, &dummy, length, WindowMode::Eval)
}

/// Frame-level probabilities for a whole recording of normalized features.
/// Windows are `sequence_length` frames without overlap; the recurrent state
/// restarts in every window and padded tail frames are dropped.
pub fn predict(
    net: &Network<f32>,
    features: &FeatureMatrix,
    classes: &[String],
    sequence_length: usize,
) -> Result<ActivityProbabilities> {
    check_bands(net, features, classes)?;
    if net.spec().is_tagging() {
        return Err(Error::Config(
            "tagging models produce chunk scores; use predict_chunks".into(),
        ));
    }
    let k = classes.len();
    let windows = eval_windows(features, k, sequence_length)?;
    let outs = forward_windows(net, &windows, features.bands)?;
    let mut values = vec![0.0f32; k * features.frames];
    for (w, y) in windows.iter().zip(&outs) {
        for c in 0..k {
            values[c * features.frames + w.start..c * features.frames + w.start + w.valid]
                .copy_from_slice(&y[c * w.length..c * w.length + w.valid]);
        }
    }
    Ok(ActivityProbabilities {
        classes: classes.to_vec(),
        frames: features.frames,
        hop_seconds: features.hop_seconds,
        values,
    })
}

/// One score vector per `chunk_frames`-long chunk, for tagging models.
pub fn predict_chunks(
    net: &Network<f32>,
    features: &FeatureMatrix,
    classes: &[String],
    chunk_frames: usize,
) -> Result<Vec<Vec<f32>>> {
    check_bands(net, features, classes)?;
    if !net.spec().is_tagging() {
        return Err(Error::Config(
            "frame-level models do not produce chunk scores".into(),
        ));
    }
    let windows = eval_windows(features, classes.len(), chunk_frames)?;
    forward_windows(net, &windows, features.bands)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Active iff `p >= threshold`.
pub fn binarize(probs: &ActivityProbabilities, threshold: f64) -> Result<EventRoll> {
    check_threshold(threshold)?;
    let activity = probs
        .values
        .iter()
        .map(|&p| (p as f64 >= threshold) as u8)
        .collect();
    EventRoll::from_activity(
        probs.classes.clone(),
        probs.frames,
        probs.hop_seconds,
        activity,
    )
}

/// Binarizes chunk scores.
pub fn binarize_chunks(scores: &[Vec<f32>], threshold: f64) -> Result<Vec<Vec<u8>>> {
    check_threshold(threshold)?;
    Ok(scores
        .iter()
        .map(|r| r.iter().map(|&p| (p as f64 >= threshold) as u8).collect())
        .collect())
}

/// Each maximal run of active frames becomes one event from the run's first
/// frame time to the time of the frame after it. Events are ordered by
/// onset, then class.
pub fn roll_to_events(roll: &EventRoll) -> Vec<EventAnnotation> {
    let hop = roll.hop_seconds();
    let mut events = Vec::new();
    for (k, name) in roll.classes().iter().enumerate() {
        let row = roll.row(k);
        let mut t = 0;
        while t < row.len() {
            if row[t] == 0 {
                t += 1;
                continue;
            }
            let start = t;
            while t < row.len() && row[t] != 0 {
                t += 1;
            }
            events.push((
                start,
                k,
                EventAnnotation::new(name.clone(), start as f64 * hop, t as f64 * hop)
                    .expect("non-empty run"),
            ));
        }
    }
    events.sort_by_key(|e| (e.0, e.1));
    events.into_iter().map(|e| e.2).collect()
}

/// Binary roll and its event list.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub roll: EventRoll,
    pub events: Vec<EventAnnotation>,
}

pub fn detect(probs: &ActivityProbabilities, threshold: f64) -> Result<DetectionResult> {
    let roll = binarize(probs, threshold)?;
    let events = roll_to_events(&roll);
    Ok(DetectionResult { roll, events })
}
