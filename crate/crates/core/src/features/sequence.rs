use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::FeatureMatrix;
use crate::synth::EventRoll;
use crate::{Error, Result};

/// Start-offset increment between training epochs.
///
/// Not a factor of typical sequence lengths, so successive epochs see
/// different sub-sequences.
pub const OFFSET_STRIDE: usize = 73;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    /// Epoch-dependent start offset.
    Train { epoch: usize },
    /// Tiles from frame 0 with no overlap.
    Eval,
}

/// One context window: features `F x L` and targets `K x L`, both
/// band/class-major. Frames `valid..L` are zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub start: usize,
    pub length: usize,
    pub valid: usize,
    pub features: Vec<f32>,
    pub targets: Vec<u8>,
}

impl SequenceWindow {
    /// Per-frame loss mask: 1 for real frames, 0 for padding.
    pub fn mask(&self) -> Vec<u8> {
        (0..self.length).map(|t| (t < self.valid) as u8).collect()
    }
}

/// Splits a recording into fixed-length windows with frame-aligned targets.
pub fn split_sequences(
    features: &FeatureMatrix,
    targets: &EventRoll,
    length: usize,
    mode: WindowMode,
) -> Result<Vec<SequenceWindow>> {
    if length == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    if features.frames == 0 {
        return Err(Error::EmptyInput("no frames to split".into()));
    }
    if features.frames != targets.frames() {
        return Err(Error::Shape(format!(
            "features have {} frames, targets {}",
            features.frames,
            targets.frames()
        )));
    }
    let total = features.frames;
    let offset = match mode {
        WindowMode::Train { epoch } => (epoch * OFFSET_STRIDE) % length % total,
        WindowMode::Eval => 0,
    };
    let (bands, classes) = (features.bands, targets.num_classes());
    let mut windows = Vec::new();
    let mut start = offset;
    while start < total {
        let valid = length.min(total - start);
        let mut x = vec![0.0f32; bands * length];
        for b in 0..bands {
            x[b * length..b * length + valid]
                .copy_from_slice(&features.band(b)[start..start + valid]);
        }
        let mut y = vec![0u8; classes * length];
        for k in 0..classes {
            y[k * length..k * length + valid]
                .copy_from_slice(&targets.row(k)[start..start + valid]);
        }
        windows.push(SequenceWindow {
            start,
            length,
            valid,
            features: x,
            targets: y,
        });
        start += length;
    }
    Ok(windows)
}
