//! Initialization, Adam with clipping, the epoch loop and random search.

mod config;
mod init;
mod optim;
mod search;
mod trainer;

pub use config::TrainConfig;
pub use init::init_params;
pub use optim::{adam_step, clip_gradients, AdamConfig, AdamState};
pub use search::{random_search, run_trial, SearchResult, SearchSpace, Trial};
pub use trainer::{
    train_model, train_step, EpochRecord, StopReason, TrainOptions, TrainOutcome, TrainReport,
};
