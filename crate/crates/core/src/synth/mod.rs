//! Annotations, target rolls and synthetic polyphonic mixtures.

mod bank;
mod dataset;
mod mixture;
mod roll;

pub use bank::{builtin_event_bank, BankConfig, MIN_SAMPLE_RATE, RMS_RANGE};
pub use dataset::{generate_dataset, DatasetPlan, Partition, PlannedMixture, SynthConfig};
pub use mixture::{
    synthesize_mixture, EventClass, EventLibrary, EventSample, MixtureRecipe, PlacedEvent,
    SampleRef, CLIP_PEAK,
};
pub use roll::{build_target_matrix, frame_span, EventAnnotation, EventRoll};
