use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Hz to mel (HTK formula).
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub num_bands: usize,
    pub num_bins: usize,
    /// `num_bands x num_bins`, row-major.
    pub weights: Vec<f64>,
    /// `num_bands + 2` edge frequencies; band `b` spans `edges[b]..edges[b + 2]`
    /// and peaks at `edges[b + 1]`.
    pub edges_hz: Vec<f64>,
    pub sample_rate: u32,
    pub fft_size: usize,
}

impl MelFilterbank {
    /// `fft_size` is the STFT frame length in samples; `fft_size / 2 + 1` bins.
    pub fn new(num_bands: usize, sample_rate: u32, fft_size: usize) -> Result<Self> {
        if num_bands == 0 {
            return Err(Error::Config("at least one mel band is required".into()));
        }
        if fft_size < 2 || sample_rate == 0 {
            return Err(Error::Config(format!(
                "fft size {fft_size} and sample rate {sample_rate} must be at least 2 and positive"
            )));
        }
        let num_bins = fft_size / 2 + 1;
        if num_bands > num_bins {
            return Err(Error::Config(format!(
                "{num_bands} mel bands exceed the {num_bins} available bins"
            )));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let mut edges_hz: Vec<f64> = (0..num_bands + 2)
            .map(|i| mel_to_hz(top * i as f64 / (num_bands + 1) as f64))
            .collect();
        edges_hz[0] = 0.0;
        edges_hz[num_bands + 1] = nyquist;

        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = vec![0.0; num_bands * num_bins];
        for b in 0..num_bands {
            let (lo, mid, hi) = (edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]);
            let row = &mut weights[b * num_bins..(b + 1) * num_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let v = if f > lo && f < mid {
                    (f - lo) / (mid - lo)
                } else if f >= mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                *w = v.max(0.0);
            }
            // Bands narrower than a bin still get the bin nearest their peak.
            if row.iter().all(|&w| w == 0.0) {
                let k = (libm::round(mid / bin_hz) as usize).min(num_bins - 1);
                row[k] = 1.0;
            }
        }
        Ok(Self {
            num_bands,
            num_bins,
            weights,
            edges_hz,
            sample_rate,
            fft_size,
        })
    }

    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        self.weights[band * self.num_bins + bin]
    }

    pub fn center_hz(&self, band: usize) -> f64 {
        self.edges_hz[band + 1]
    }

    /// `bands x frames` = weights x spectrogram (`bins x frames`).
    pub fn apply(&self, spectrogram: &[f64], frames: usize) -> Vec<f64> {
        debug_assert_eq!(spectrogram.len(), self.num_bins * frames);
        let mut out = vec![0.0; self.num_bands * frames];
        for b in 0..self.num_bands {
            let dst = &mut out[b * frames..(b + 1) * frames];
            for k in 0..self.num_bins {
                let w = self.weights[b * self.num_bins + k];
                if w == 0.0 {
                    continue;
                }
                let src = &spectrogram[k * frames..(k + 1) * frames];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}
