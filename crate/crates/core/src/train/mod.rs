//! Loss, optimizer and the early-stopped training loop.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use loss::{bce_loss, PROB_CLAMP};
pub use trainer::{train, validation_f1, EpochRecord, Recording, TrainConfig, TrainLog, Trainer};
