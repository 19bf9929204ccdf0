use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{EventLibrary, MixtureRecipe, PlacedEvent, SampleRef};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub mixtures: usize,
    pub mixture_seconds: f64,
    pub events_per_mixture: usize,
    pub min_cut_seconds: f64,
    pub max_cut_seconds: f64,
    pub max_polyphony: usize,
    /// Train, validation and test fractions.
    pub split: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mixtures: 100,
            mixture_seconds: 60.0,
            events_per_mixture: 8,
            min_cut_seconds: 3.0,
            max_cut_seconds: 15.0,
            max_polyphony: 2,
            split: (0.6, 0.2, 0.2),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedMixture {
    pub id: String,
    pub partition: Partition,
    pub recipe: MixtureRecipe,
}

/// Mixture plans plus the instance assignment used to build them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPlan {
    pub mixtures: Vec<PlannedMixture>,
    /// For each partition, the instances it may draw from.
    pub instances: [Vec<SampleRef>; 3],
}

impl DatasetPlan {
    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &PlannedMixture> {
        self.mixtures.iter().filter(move |m| m.partition == p)
    }
}

/// Splits `n` items by fractions, rounding and giving the remainder to the first part.
fn split_counts(n: usize, split: (f64, f64, f64)) -> [usize; 3] {
    let v = libm::round(n as f64 * split.1) as usize;
    let t = libm::round(n as f64 * split.2) as usize;
    let tr = n.saturating_sub(v + t);
    [tr, v, t]
}

fn max_overlap(intervals: &[(f64, f64)]) -> usize {
    let mut points: Vec<(f64, i32)> = intervals
        .iter()
        .flat_map(|&(a, b)| [(a, 1), (b, -1)])
        .collect();
    // Ends sort before starts at the same instant: touching is not overlapping.
    points.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
    let mut cur = 0i32;
    let mut best = 0i32;
    for (_, d) in points {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

/// Plans train/validation/test mixtures with instance-disjoint partitions.
///
/// Each mixture draws from its own derived RNG stream, so plans do not
/// depend on generation order.
pub fn generate_dataset(library: &EventLibrary, config: &SynthConfig) -> Result<DatasetPlan> {
    let (a, b, c) = config.split;
    if (a + b + c - 1.0).abs() > 1e-9 || a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::Config(format!(
            "split fractions {a}, {b}, {c} must be non-negative and sum to 1"
        )));
    }
    if config.max_polyphony == 0
        || config.min_cut_seconds <= 0.0
        || config.max_cut_seconds < config.min_cut_seconds
    {
        return Err(Error::Config("invalid polyphony or cut settings".into()));
    }
    if config.mixture_seconds < config.min_cut_seconds {
        return Err(Error::Config(
            "mixtures are shorter than the minimum cut".into(),
        ));
    }
    if library.classes.is_empty() {
        return Err(Error::Config("empty event library".into()));
    }
    let sr = library.sample_rate as f64;

    let mut instances: [Vec<SampleRef>; 3] = [vec![], vec![], vec![]];
    for (ci, class) in library.classes.iter().enumerate() {
        let usable: Vec<usize> = (0..class.instances.len())
            .filter(|&i| class.instances[i].samples.len() as f64 / sr >= config.min_cut_seconds)
            .collect();
        let counts = split_counts(usable.len(), config.split);
        if counts.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "class '{}' has {} usable instances, too few for disjoint partitions",
                class.name,
                usable.len()
            )));
        }
        let mut order = usable;
        order.shuffle(&mut rng::stream(config.seed, &[0x5917, ci as u64]));
        let mut it = order.into_iter();
        for (p, &n) in counts.iter().enumerate() {
            instances[p].extend(it.by_ref().take(n).map(|i| SampleRef {
                class: ci,
                instance: i,
            }));
        }
    }

    let mixture_counts = split_counts(config.mixtures, config.split);
    let mut mixtures = Vec::with_capacity(config.mixtures);
    for p in Partition::ALL {
        for i in 0..mixture_counts[p.index()] {
            let seed = rng::derive_seed(config.seed, &[0x3141, p.index() as u64, i as u64]);
            let mut rng = rng::stream(seed, &[]);
            let pool = &instances[p.index()];
            let mut events: Vec<PlacedEvent> = Vec::new();
            let mut spans: Vec<(f64, f64)> = Vec::new();
            let mut attempts = 0;
            while events.len() < config.events_per_mixture
                && attempts < 200 * config.events_per_mixture.max(1)
            {
                attempts += 1;
                let class = rng.gen_range(0..library.classes.len());
                let candidates: Vec<&SampleRef> =
                    pool.iter().filter(|r| r.class == class).collect();
                let sample = **candidates
                    .choose(&mut rng)
                    .expect("each class has instances in every partition");
                let sample_seconds = library.sample(sample)?.samples.len() as f64 / sr;
                let max_cut = config
                    .max_cut_seconds
                    .min(sample_seconds)
                    .min(config.mixture_seconds);
                let cut_length = if max_cut > config.min_cut_seconds {
                    rng.gen_range(config.min_cut_seconds..max_cut)
                } else {
                    config.min_cut_seconds
                };
                // Quantize to whole samples so synthesis and ground truth agree.
                let cut_length = libm::floor(cut_length * sr) / sr;
                let cut_start =
                    libm::floor(rng.gen_range(0.0..=(sample_seconds - cut_length)) * sr) / sr;
                let placement =
                    libm::floor(rng.gen_range(0.0..=(config.mixture_seconds - cut_length)) * sr)
                        / sr;
                spans.push((placement, placement + cut_length));
                if max_overlap(&spans) > config.max_polyphony {
                    spans.pop();
                    continue;
                }
                events.push(PlacedEvent {
                    sample,
                    cut_start,
                    cut_length,
                    placement,
                    gain: 1.0,
                });
            }
            mixtures.push(PlannedMixture {
                id: format!("{}_{i:03}", p.name()),
                partition: p,
                recipe: MixtureRecipe {
                    length_seconds: config.mixture_seconds,
                    events,
                    seed,
                },
            });
        }
    }
    Ok(DatasetPlan {
        mixtures,
        instances,
    })
}
