use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use super::fft::Fft;
use super::AudioClip;
use crate::{Error, Result};

/// Frame and hop lengths in samples for a given analysis setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Framing {
    pub frame_length: usize,
    pub hop: usize,
}

impl Framing {
    pub fn new(sample_rate: u32, frame_seconds: f64, overlap_fraction: f64) -> Result<Self> {
        if !(frame_seconds > 0.0) {
            return Err(Error::Config(format!(
                "frame length {frame_seconds} s must be positive"
            )));
        }
        if !(0.0..1.0).contains(&overlap_fraction) {
            return Err(Error::Config(format!(
                "overlap {overlap_fraction} outside [0, 1)"
            )));
        }
        let frame_length = libm::round(frame_seconds * sample_rate as f64) as usize;
        if frame_length < 2 {
            return Err(Error::Config(format!(
                "frame of {frame_seconds} s at {sample_rate} Hz is shorter than two samples"
            )));
        }
        let hop = (libm::round(frame_length as f64 * (1.0 - overlap_fraction)) as usize).max(1);
        Ok(Self { frame_length, hop })
    }

    /// Number of whole frames in `samples` samples; the trailing partial frame is dropped.
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.frame_length {
            0
        } else {
            1 + (samples - self.frame_length) / self.hop
        }
    }

    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    pub fn hop_seconds(&self, sample_rate: u32) -> f64 {
        self.hop as f64 / sample_rate as f64
    }

    pub fn frame_seconds(&self, sample_rate: u32) -> f64 {
        self.frame_length as f64 / sample_rate as f64
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * libm::cos(2.0 * PI * i as f64 / (n - 1) as f64))
        .collect()
}

/// Non-negative spectrogram, `bins x frames` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    pub hop_seconds: f64,
    pub values: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }
}

fn analyse(clip: &AudioClip, framing: Framing, power: bool) -> Result<Spectrogram> {
    let frames = framing.frame_count(clip.samples.len());
    if frames == 0 {
        return Err(Error::EmptyInput(format!(
            "clip of {} samples is shorter than one frame of {}",
            clip.samples.len(),
            framing.frame_length
        )));
    }
    let n = framing.frame_length;
    let bins = framing.bins();
    let window = hamming(n);
    let fft = Fft::new(n);
    let mut values = vec![0.0; bins * frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..frames {
        let start = t * framing.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(clip.samples[start + i] as f64 * window[i], 0.0);
        }
        fft.forward(&mut buf);
        for k in 0..bins {
            let e = buf[k].norm_sqr();
            values[k * frames + t] = if power { e } else { libm::sqrt(e) };
        }
    }
    Ok(Spectrogram {
        bins,
        frames,
        hop_seconds: framing.hop_seconds(clip.sample_rate),
        values,
    })
}

/// Magnitude STFT with a Hamming window, no edge padding.
pub fn stft_magnitude(
    clip: &AudioClip,
    frame_seconds: f64,
    overlap_fraction: f64,
) -> Result<Spectrogram> {
    let framing = Framing::new(clip.sample_rate, frame_seconds, overlap_fraction)?;
    analyse(clip, framing, false)
}

/// Squared-magnitude STFT, the input to the mel filterbank.
pub fn stft_power(
    clip: &AudioClip,
    frame_seconds: f64,
    overlap_fraction: f64,
) -> Result<Spectrogram> {
    let framing = Framing::new(clip.sample_rate, frame_seconds, overlap_fraction)?;
    analyse(clip, framing, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forty_ms_half_overlap_hops_twenty_ms() {
        let f = Framing::new(44100, 0.040, 0.5).unwrap();
        assert_eq!(f.frame_length, 1764);
        assert_eq!(f.hop, 882);
        assert!((f.hop_seconds(44100) - 0.020).abs() < 1e-12);
        assert_eq!(f.bins(), 883);
    }

    #[test]
    fn silence_gives_zero_magnitudes() {
        let clip = AudioClip::new(vec![0.0; 4000], 8000).unwrap();
        let s = stft_magnitude(&clip, 0.04, 0.5).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centered_tone_peaks_at_its_bin() {
        let sr = 8000;
        let framing = Framing::new(sr, 0.04, 0.5).unwrap();
        let n = framing.frame_length;
        let bin = 37;
        let freq = bin as f64 * sr as f64 / n as f64;
        let samples = (0..sr as usize)
            .map(|i| (0.5 * libm::sin(2.0 * PI * freq * i as f64 / sr as f64)) as f32)
            .collect();
        let clip = AudioClip::new(samples, sr).unwrap();
        let s = stft_magnitude(&clip, 0.04, 0.5).unwrap();

        // Oracle: direct evaluation of the windowed DFT at every bin.
        let w = hamming(n);
        for t in 0..s.frames {
            let start = t * framing.hop;
            let mut best = (0, -1.0);
            for k in 0..s.bins {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..n {
                    let x = clip.samples[start + j] as f64 * w[j];
                    let ph = -2.0 * PI * (j * k) as f64 / n as f64;
                    re += x * libm::cos(ph);
                    im += x * libm::sin(ph);
                }
                let mag = libm::sqrt(re * re + im * im);
                assert!((mag - s.get(k, t)).abs() < 1e-6 * (1.0 + mag));
                if mag > best.1 {
                    best = (k, mag);
                }
            }
            assert_eq!(best.0, bin);
            let argmax = (0..s.bins)
                .max_by(|&a, &b| s.get(a, t).partial_cmp(&s.get(b, t)).unwrap())
                .unwrap();
            assert_eq!(argmax, bin);
        }
    }

    #[test]
    fn short_clip_is_empty_input() {
        let clip = AudioClip::new(vec![0.0; 100], 8000).unwrap();
        assert!(matches!(
            stft_magnitude(&clip, 0.04, 0.5),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn overlap_out_of_range_rejected() {
        let clip = AudioClip::new(vec![0.0; 1000], 8000).unwrap();
        assert!(stft_magnitude(&clip, 0.04, 1.0).is_err());
        assert!(stft_magnitude(&clip, 0.0, 0.5).is_err());
    }
}
