//! Parametric event classes for self-contained experiments.
//!
//! Three families with disjoint spectral bands: a vibrato tone, a
//! repeating frequency sweep and band-limited noise. Each instance draws its
//! own duration, pitch, modulation and level from the seed.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use super::{EventClass, EventLibrary, EventSample};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Every generated instance is scaled to an RMS inside this range.
pub const RMS_RANGE: (f64, f64) = (0.05, 0.2);

/// Minimum sample rate that keeps all class bands below Nyquist.
pub const MIN_SAMPLE_RATE: u32 = 16000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    pub sample_rate: u32,
    pub instances_per_class: usize,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            sample_rate: MIN_SAMPLE_RATE,
            instances_per_class: 10,
            min_seconds: 4.0,
            max_seconds: 16.0,
        }
    }
}

const TONE_BAND: (f64, f64) = (500.0, 1000.0);
const CHIRP_BAND: (f64, f64) = (1500.0, 3000.0);
const NOISE_BAND: (f64, f64) = (4000.0, 7000.0);
const FADE_SECONDS: f64 = 0.02;

fn tone(rng: &mut Rng, n: usize, sr: f64) -> Vec<f64> {
    let f0 = rng.gen_range(560.0..940.0);
    let vib_rate = rng.gen_range(3.0..7.0);
    let trem_rate = rng.gen_range(1.0..4.0);
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + 0.01 * libm::sin(2.0 * PI * vib_rate * t));
            phase += 2.0 * PI * f / sr;
            (1.0 + 0.3 * libm::sin(2.0 * PI * trem_rate * t)) * libm::sin(phase)
        })
        .collect()
}

fn chirp(rng: &mut Rng, n: usize, sr: f64) -> Vec<f64> {
    let period = rng.gen_range(0.25..0.6);
    let lo = rng.gen_range(1600.0..2000.0);
    let hi = rng.gen_range(2500.0..2900.0);
    let upward = rng.gen_bool(0.5);
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let frac = t / period - libm::floor(t / period);
            let frac = if upward { frac } else { 1.0 - frac };
            phase += 2.0 * PI * (lo + (hi - lo) * frac) / sr;
            libm::sin(phase)
        })
        .collect()
}

fn noise(rng: &mut Rng, n: usize, sr: f64) -> Vec<f64> {
    let partials: Vec<(f64, f64)> = (0..48)
        .map(|_| (rng.gen_range(4200.0..6800.0), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let am_rate = rng.gen_range(0.5..2.0);
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let s: f64 = partials
                .iter()
                .map(|&(f, ph)| libm::sin(2.0 * PI * f * t + ph))
                .sum();
            (1.0 + 0.4 * libm::sin(2.0 * PI * am_rate * t)) * s
        })
        .collect()
}

/// Generates the builtin three-class event library.
pub fn builtin_event_bank(seed: u64, config: &BankConfig) -> Result<EventLibrary> {
    if config.sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::Config(format!(
            "builtin bank needs at least {MIN_SAMPLE_RATE} Hz, got {}",
            config.sample_rate
        )));
    }
    if config.instances_per_class == 0
        || !(config.min_seconds > 0.0)
        || config.max_seconds < config.min_seconds
    {
        return Err(Error::Config("invalid bank instance settings".into()));
    }
    type Generator = fn(&mut Rng, usize, f64) -> Vec<f64>;
    let families: [(&str, (f64, f64), Generator); 3] = [
        ("tone", TONE_BAND, tone),
        ("chirp", CHIRP_BAND, chirp),
        ("noise", NOISE_BAND, noise),
    ];
    let sr = config.sample_rate as f64;
    let classes = families
        .iter()
        .enumerate()
        .map(|(c, &(name, band, generate))| {
            let instances = (0..config.instances_per_class)
                .map(|i| {
                    let mut rng = rng::stream(seed, &[0xBA4C, c as u64, i as u64]);
                    let seconds = if config.max_seconds > config.min_seconds {
                        rng.gen_range(config.min_seconds..config.max_seconds)
                    } else {
                        config.min_seconds
                    };
                    let n = libm::round(seconds * sr) as usize;
                    let mut x = generate(&mut rng, n, sr);
                    let fade = ((FADE_SECONDS * sr) as usize).min(n / 2).max(1);
                    for j in 0..fade {
                        let g = j as f64 / fade as f64;
                        x[j] *= g;
                        x[n - 1 - j] *= g;
                    }
                    let rms = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>() / n as f64);
                    let target = rng.gen_range(RMS_RANGE.0..RMS_RANGE.1);
                    let scale = if rms > 0.0 { target / rms } else { 0.0 };
                    EventSample {
                        id: format!("{name}_{i:02}"),
                        samples: x.iter().map(|v| (v * scale) as f32).collect(),
                    }
                })
                .collect();
            EventClass {
                name: name.to_string(),
                band_hz: band,
                instances,
            }
        })
        .collect();
    Ok(EventLibrary {
        sample_rate: config.sample_rate,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{log_mel, AudioClip, MelFilterbank};

    fn small() -> BankConfig {
        BankConfig {
            instances_per_class: 10,
            min_seconds: 0.5,
            max_seconds: 1.0,
            ..BankConfig::default()
        }
    }

    #[test]
    fn every_class_peaks_inside_its_band() {
        let lib = builtin_event_bank(7, &small()).unwrap();
        assert_eq!(lib.classes.len(), 3);
        let bank = MelFilterbank::new(40, 16000, 640).unwrap();
        for class in &lib.classes {
            assert!(class.instances.len() >= 10);
            for inst in &class.instances {
                let clip = AudioClip::new(inst.samples.clone(), 16000).unwrap();
                let fm = log_mel(&clip, &bank, 0.04, 0.5).unwrap();
                let mean: Vec<f64> = (0..40)
                    .map(|b| fm.band(b).iter().map(|&v| v as f64).sum::<f64>() / fm.frames as f64)
                    .collect();
                let argmax = (0..40)
                    .max_by(|&a, &b| mean[a].partial_cmp(&mean[b]).unwrap())
                    .unwrap();
                let center = bank.center_hz(argmax);
                let (lo, hi) = class.band_hz;
                assert!(
                    center >= lo * 0.9 && center <= hi * 1.1,
                    "{}: peak band centered at {center} Hz outside {lo}-{hi}",
                    inst.id
                );
            }
        }
    }

    #[test]
    fn rms_is_within_declared_range() {
        let lib = builtin_event_bank(3, &small()).unwrap();
        for inst in lib.classes.iter().flat_map(|c| &c.instances) {
            let n = inst.samples.len() as f64;
            let rms = libm::sqrt(
                inst.samples
                    .iter()
                    .map(|&v| (v as f64).powi(2))
                    .sum::<f64>()
                    / n,
            );
            assert!(
                rms >= RMS_RANGE.0 - 1e-6 && rms <= RMS_RANGE.1 + 1e-6,
                "{} rms {rms}",
                inst.id
            );
        }
    }

    #[test]
    fn seeds_control_waveforms() {
        let a = builtin_event_bank(1, &small()).unwrap();
        let b = builtin_event_bank(1, &small()).unwrap();
        let c = builtin_event_bank(2, &small()).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.classes[0].instances[0].samples,
            c.classes[0].instances[0].samples
        );
    }

    #[test]
    fn low_rate_rejected() {
        let cfg = BankConfig {
            sample_rate: 8000,
            ..small()
        };
        assert!(builtin_event_bank(0, &cfg).is_err());
    }
}
