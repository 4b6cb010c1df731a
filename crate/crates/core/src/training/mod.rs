//! Combined predictor, losses, optimizer and the online training loop.

mod checkpoint;
mod config;
mod losses;
mod model;
mod optim;
mod trainer;

pub use checkpoint::{save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Config, LossWeights, ModelOptions, Profile, TrainConfig};
pub use losses::{evaluate_losses, LossReport};
pub use model::{numerical_gradient, SdfModel, SdfPredictor};
pub use optim::{Adam, Moments};
pub use trainer::{run_online, FrameLog, StepReport, TrainState};
