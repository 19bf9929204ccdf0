//! Log-mel feature extraction and context-window splitting.

mod audio;
pub mod fft;
mod mel;
mod norm;
mod sequence;
mod stft;

pub use audio::AudioClip;
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use norm::{compute_norm_stats, NormAccumulator, NormStats, STD_FLOOR};
pub use sequence::{split_sequences, SequenceWindow, WindowMode, OFFSET_STRIDE};
pub use stft::{hamming, stft_magnitude, stft_power, Framing, Spectrogram};

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Floor added to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// `bands x frames` log-mel energies, row-major (band-major).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub bands: usize,
    pub frames: usize,
    pub hop_seconds: f64,
    pub normalized: bool,
    pub values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(bands: usize, frames: usize, hop_seconds: f64, values: Vec<f32>) -> Result<Self> {
        if bands == 0 || frames == 0 {
            return Err(Error::EmptyInput(format!(
                "feature matrix {bands}x{frames}"
            )));
        }
        if values.len() != bands * frames {
            return Err(Error::Shape(format!(
                "{} values for a {bands}x{frames} feature matrix",
                values.len()
            )));
        }
        Ok(Self {
            bands,
            frames,
            hop_seconds,
            normalized: false,
            values,
        })
    }

    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.frames + frame]
    }

    pub fn band(&self, band: usize) -> &[f32] {
        &self.values[band * self.frames..(band + 1) * self.frames]
    }

    /// Frames `start..end` as a new matrix.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames {
            return Err(Error::Shape(format!(
                "frame range {start}..{end} outside 0..{}",
                self.frames
            )));
        }
        let len = end - start;
        let mut values = Vec::with_capacity(self.bands * len);
        for b in 0..self.bands {
            values.extend_from_slice(&self.band(b)[start..end]);
        }
        Ok(Self {
            bands: self.bands,
            frames: len,
            hop_seconds: self.hop_seconds,
            normalized: self.normalized,
            values,
        })
    }

    /// Concatenates along time.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyInput("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.bands != first.bands) {
            return Err(Error::Shape("band counts differ".into()));
        }
        let frames = parts.iter().map(|p| p.frames).sum();
        let mut values = Vec::with_capacity(first.bands * frames);
        for b in 0..first.bands {
            for p in parts {
                values.extend_from_slice(p.band(b));
            }
        }
        Ok(Self {
            bands: first.bands,
            frames,
            hop_seconds: first.hop_seconds,
            normalized: first.normalized,
            values,
        })
    }
}

/// `log(bank x |STFT|^2 + LOG_FLOOR)`.
pub fn log_mel(
    clip: &AudioClip,
    bank: &MelFilterbank,
    frame_seconds: f64,
    overlap_fraction: f64,
) -> Result<FeatureMatrix> {
    let spec = stft_power(clip, frame_seconds, overlap_fraction)?;
    if spec.bins != bank.num_bins {
        return Err(Error::Config(format!(
            "filterbank expects {} bins, STFT produced {}",
            bank.num_bins, spec.bins
        )));
    }
    let energies = bank.apply(&spec.values, spec.frames);
    let values = energies
        .iter()
        .map(|&e| libm::log(e + LOG_FLOOR) as f32)
        .collect();
    FeatureMatrix::new(bank.num_bands, spec.frames, spec.hop_seconds, values)
}

/// Analysis settings shared by extraction and the model file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_seconds: f64,
    pub overlap: f64,
    pub bands: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44100,
            frame_seconds: 0.040,
            overlap: 0.5,
            bands: 40,
        }
    }
}

impl FeatureConfig {
    pub fn framing(&self) -> Result<Framing> {
        Framing::new(self.sample_rate, self.frame_seconds, self.overlap)
    }

    pub fn hop_seconds(&self) -> Result<f64> {
        Ok(self.framing()?.hop_seconds(self.sample_rate))
    }

    pub fn filterbank(&self) -> Result<MelFilterbank> {
        MelFilterbank::new(self.bands, self.sample_rate, self.framing()?.frame_length)
    }

    /// Resamples to the configured rate if needed, then extracts log-mel features.
    pub fn extract(&self, clip: &AudioClip, bank: &MelFilterbank) -> Result<FeatureMatrix> {
        if clip.sample_rate != self.sample_rate {
            let clip = clip.resample_linear(self.sample_rate)?;
            return log_mel(&clip, bank, self.frame_seconds, self.overlap);
        }
        log_mel(clip, bank, self.frame_seconds, self.overlap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn chirp_clip(amplitude: f32) -> AudioClip {
        let sr = 8000;
        let samples = (0..sr)
            .map(|i| {
                let t = i as f64 / sr as f64;
                amplitude * libm::sin(2.0 * core::f64::consts::PI * (300.0 + 900.0 * t) * t) as f32
            })
            .collect();
        AudioClip::new(samples, sr).unwrap()
    }

    #[test]
    fn silence_hits_the_log_floor_exactly() {
        let clip = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
        let bank = MelFilterbank::new(20, 8000, 320).unwrap();
        let fm = log_mel(&clip, &bank, 0.04, 0.5).unwrap();
        let floor = libm::log(LOG_FLOOR) as f32;
        assert!(fm.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn one_second_gives_49_frames() {
        let clip = AudioClip::new(vec![0.0; 44100], 44100).unwrap();
        let bank = MelFilterbank::new(40, 44100, 1764).unwrap();
        let fm = log_mel(&clip, &bank, 0.04, 0.5).unwrap();
        // (44100 - 1764) / 882 + 1 whole frames, no padding.
        assert_eq!(fm.frames, 49);
        assert_eq!(fm.bands, 40);
    }

    #[test]
    fn doubling_amplitude_adds_log4() {
        let bank = MelFilterbank::new(20, 8000, 320).unwrap();
        let a = log_mel(&chirp_clip(0.2), &bank, 0.04, 0.5).unwrap();
        let b = log_mel(&chirp_clip(0.4), &bank, 0.04, 0.5).unwrap();
        let floor = libm::log(LOG_FLOOR);
        let mut checked = 0;
        for (x, y) in a.values.iter().zip(&b.values) {
            // Only entries well above the floor scale exactly.
            if (*x as f64) > floor + 10.0 {
                assert!(((y - x) as f64 - libm::log(4.0)).abs() < 1e-3, "{x} -> {y}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn scaling_up_never_decreases_values() {
        let bank = MelFilterbank::new(20, 8000, 320).unwrap();
        let a = log_mel(&chirp_clip(0.1), &bank, 0.04, 0.5).unwrap();
        let b = log_mel(&chirp_clip(0.35), &bank, 0.04, 0.5).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| y >= x));
    }

    #[test]
    fn extraction_is_deterministic() {
        let bank = MelFilterbank::new(20, 8000, 320).unwrap();
        let a = log_mel(&chirp_clip(0.3), &bank, 0.04, 0.5).unwrap();
        let b = log_mel(&chirp_clip(0.3), &bank, 0.04, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extract_resamples_mismatched_rate() {
        let cfg = FeatureConfig {
            sample_rate: 8000,
            frame_seconds: 0.04,
            overlap: 0.5,
            bands: 20,
        };
        let bank = cfg.filterbank().unwrap();
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let fm = cfg.extract(&clip, &bank).unwrap();
        assert_eq!(fm.frames, 49);
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let fm = FeatureMatrix::new(2, 5, 0.02, (0..10).map(|v| v as f32).collect()).unwrap();
        let a = fm.slice_frames(0, 2).unwrap();
        let b = fm.slice_frames(2, 5).unwrap();
        assert_eq!(FeatureMatrix::concat(&[a, b]).unwrap(), fm);
    }
}
