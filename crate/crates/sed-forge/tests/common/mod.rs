#![allow(dead_code)]

use std::path::Path;

use sed_forge::config::ExperimentConfig;
use sed_forge::manifest::{Entry, Manifest, Split};
use sed_forge::pipeline;

/// A network and dataset small enough for a few epochs in seconds.
pub const TINY: &str = r#"
seed = 3

[features]
sample_rate = 16000

[[network.layers]]
type = "conv"
maps = 3
kernel = [5, 5]
pool = 5

[[network.layers]]
type = "conv"
maps = 3
kernel = [3, 3]
pool = 8

[[network.layers]]
type = "gru"
units = 4

[train]
sequence_length = 64
batch_size = 4
max_epochs = 3
patience = 3

[synth]
mixtures = 8
mixture_seconds = 10.0
events_per_mixture = 6
"#;

pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY, Path::new("tiny.toml")).unwrap()
}

pub fn tiny_dataset(dir: &Path) -> Manifest {
    pipeline::synth(&tiny_config(), dir).unwrap()
}

/// Four folds over the same recordings: fold `f` tests on two of them,
/// validates on the next and trains on the rest.
pub fn rotated_folds(m: &Manifest) -> Manifest {
    let n = m.recordings.len();
    assert!(n >= 8, "need 8 recordings, have {n}");
    let mut recordings = Vec::new();
    for f in 0..4u32 {
        let fu = f as usize;
        for (i, e) in m.recordings.iter().enumerate() {
            let partition = if i / 2 == fu {
                Split::Test
            } else if i == (2 * fu + 2) % n {
                Split::Validation
            } else {
                Split::Train
            };
            recordings.push(Entry {
                id: format!("f{f}_{}", e.id),
                partition,
                fold: f,
                ..e.clone()
            });
        }
    }
    Manifest {
        classes: m.classes.clone(),
        recordings,
    }
}
