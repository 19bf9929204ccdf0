use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::features::AudioClip;
use crate::synth::EventAnnotation;
use crate::{Error, Result};

/// Peak the mixture is rescaled to when summation exceeds full scale.
pub const CLIP_PEAK: f32 = 0.9;

/// One isolated recording of an event class.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSample {
    pub id: String,
    pub samples: Vec<f32>,
}

/// All isolated samples of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct EventClass {
    pub name: String,
    /// Frequency range the class's energy is designed to occupy.
    pub band_hz: (f64, f64),
    pub instances: Vec<EventSample>,
}

/// Isolated event samples grouped by class, at one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLibrary {
    pub sample_rate: u32,
    pub classes: Vec<EventClass>,
}

impl EventLibrary {
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn sample(&self, id: SampleRef) -> Result<&EventSample> {
        self.classes
            .get(id.class)
            .and_then(|c| c.instances.get(id.instance))
            .ok_or_else(|| Error::Recipe(format!("no sample {}:{}", id.class, id.instance)))
    }
}

/// Index of a sample inside an [`EventLibrary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleRef {
    pub class: usize,
    pub instance: usize,
}

/// A cut of one sample placed into the mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedEvent {
    pub sample: SampleRef,
    pub cut_start: f64,
    pub cut_length: f64,
    pub placement: f64,
    pub gain: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRecipe {
    pub length_seconds: f64,
    pub events: Vec<PlacedEvent>,
    pub seed: u64,
}

fn to_samples(seconds: f64, sample_rate: u32) -> usize {
    libm::round(seconds * sample_rate as f64) as usize
}

/// Sums gain-scaled cuts at their placements. No background is added.
///
/// Annotation times are the sample-quantized placement boundaries, so the
/// returned ground truth matches the audio exactly.
pub fn synthesize_mixture(
    library: &EventLibrary,
    recipe: &MixtureRecipe,
) -> Result<(AudioClip, Vec<EventAnnotation>)> {
    let sr = library.sample_rate;
    let total = to_samples(recipe.length_seconds, sr);
    if total == 0 {
        return Err(Error::Recipe("mixture length is zero".into()));
    }
    let mut mix = vec![0.0f32; total];
    let mut annotations = Vec::with_capacity(recipe.events.len());
    for (i, ev) in recipe.events.iter().enumerate() {
        let sample = library.sample(ev.sample)?;
        let start = to_samples(ev.cut_start, sr);
        let len = to_samples(ev.cut_length, sr);
        let at = to_samples(ev.placement, sr);
        if len == 0 || ev.cut_start < 0.0 || start + len > sample.samples.len() {
            return Err(Error::Recipe(format!(
                "event {i}: cut {start}+{len} exceeds sample '{}' of {} samples",
                sample.id,
                sample.samples.len()
            )));
        }
        if ev.placement < 0.0 || at + len > total {
            return Err(Error::Recipe(format!(
                "event {i}: placement {at}+{len} exceeds mixture of {total} samples"
            )));
        }
        for (m, s) in mix[at..at + len]
            .iter_mut()
            .zip(&sample.samples[start..start + len])
        {
            *m += ev.gain * s;
        }
        annotations.push(EventAnnotation {
            class_name: library.classes[ev.sample.class].name.clone(),
            onset: at as f64 / sr as f64,
            offset: (at + len) as f64 / sr as f64,
            source_file: sample.id.clone(),
        });
    }
    let peak = mix.iter().fold(0.0f32, |p, v| p.max(v.abs()));
    if peak > 1.0 {
        let scale = CLIP_PEAK / peak;
        mix.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((AudioClip::new(mix, sr)?, annotations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn library() -> EventLibrary {
        let ramp = |n: usize, scale: f32| {
            (0..n)
                .map(|i| scale * (i as f32 + 1.0) / n as f32)
                .collect()
        };
        EventLibrary {
            sample_rate: 100,
            classes: vec![
                EventClass {
                    name: "a".to_string(),
                    band_hz: (0.0, 10.0),
                    instances: vec![EventSample {
                        id: "a0".to_string(),
                        samples: ramp(300, 0.3),
                    }],
                },
                EventClass {
                    name: "b".to_string(),
                    band_hz: (10.0, 20.0),
                    instances: vec![EventSample {
                        id: "b0".to_string(),
                        samples: ramp(200, -0.2),
                    }],
                },
            ],
        }
    }

    fn ev(class: usize, cut_start: f64, cut_length: f64, placement: f64) -> PlacedEvent {
        PlacedEvent {
            sample: SampleRef { class, instance: 0 },
            cut_start,
            cut_length,
            placement,
            gain: 1.0,
        }
    }

    #[test]
    fn single_event_is_identity() {
        let lib = library();
        let recipe = MixtureRecipe {
            length_seconds: 1.5,
            events: vec![ev(0, 0.5, 1.5, 0.0)],
            seed: 0,
        };
        let (clip, ann) = synthesize_mixture(&lib, &recipe).unwrap();
        assert_eq!(
            clip.samples,
            lib.classes[0].instances[0].samples[50..200].to_vec()
        );
        assert_eq!(ann.len(), 1);
        assert_eq!((ann[0].onset, ann[0].offset), (0.0, 1.5));
        assert_eq!(ann[0].source_file, "a0");
    }

    #[test]
    fn disjoint_events_are_sample_exact() {
        let lib = library();
        let recipe = MixtureRecipe {
            length_seconds: 3.0,
            events: vec![ev(0, 0.0, 1.0, 0.2), ev(1, 0.5, 1.0, 1.7)],
            seed: 0,
        };
        let (clip, ann) = synthesize_mixture(&lib, &recipe).unwrap();
        let a = &lib.classes[0].instances[0].samples;
        let b = &lib.classes[1].instances[0].samples;
        assert!(clip.samples[..20].iter().all(|&v| v == 0.0));
        assert_eq!(&clip.samples[20..120], &a[0..100]);
        assert!(clip.samples[120..170].iter().all(|&v| v == 0.0));
        assert_eq!(&clip.samples[170..270], &b[50..150]);
        assert!(clip.samples[270..].iter().all(|&v| v == 0.0));
        assert_eq!((ann[1].onset, ann[1].offset), (1.7, 2.7));
    }

    #[test]
    fn overlaps_add() {
        let lib = library();
        let recipe = MixtureRecipe {
            length_seconds: 2.0,
            events: vec![ev(0, 0.0, 1.0, 0.0), ev(1, 0.0, 1.0, 0.5)],
            seed: 0,
        };
        let (clip, _) = synthesize_mixture(&lib, &recipe).unwrap();
        let a = &lib.classes[0].instances[0].samples;
        let b = &lib.classes[1].instances[0].samples;
        for i in 50..100 {
            assert_eq!(clip.samples[i], a[i] + b[i - 50]);
        }
    }

    #[test]
    fn loud_sums_are_peak_normalized() {
        let lib = library();
        let mut e = ev(0, 0.0, 1.0, 0.0);
        e.gain = 10.0;
        let recipe = MixtureRecipe {
            length_seconds: 1.0,
            events: vec![e],
            seed: 0,
        };
        let (clip, _) = synthesize_mixture(&lib, &recipe).unwrap();
        let peak = clip.samples.iter().fold(0.0f32, |p, v| p.max(v.abs()));
        assert!((peak - CLIP_PEAK).abs() < 1e-6);
    }

    #[test]
    fn cut_beyond_sample_is_recipe_error() {
        let lib = library();
        let recipe = MixtureRecipe {
            length_seconds: 5.0,
            events: vec![ev(1, 1.5, 1.0, 0.0)],
            seed: 0,
        };
        assert!(matches!(
            synthesize_mixture(&lib, &recipe),
            Err(Error::Recipe(_))
        ));
        let recipe = MixtureRecipe {
            length_seconds: 1.0,
            events: vec![ev(0, 0.0, 1.0, 0.5)],
            seed: 0,
        };
        assert!(matches!(
            synthesize_mixture(&lib, &recipe),
            Err(Error::Recipe(_))
        ));
    }
}
