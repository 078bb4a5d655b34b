//! Fine-tuning: cross-entropy loss, AdamW with encoder and decoder
//! parameter groups, cosine annealing with warm restarts, gradient
//! accumulation, and the epoch loop with best-state selection.

mod checkpoint;
pub mod loss;
pub mod optim;
pub mod schedule;
mod trainer;

pub use loss::{cross_entropy, cross_entropy_grad, sample_loss, softmax};
pub use optim::{adamw_update, is_frozen, AdamW, AdamWConfig, GroupLrs, ParamGroup};
pub use schedule::{cosine_warm_restart_lr, WarmRestarts};
pub use trainer::{
    accumulated_gradients, batch_gradients, evaluate_war, fit, load_examples, predict, BestState, EpochRecord, Example,
    FitOutcome, TrainConfig, TrainLog, Trainer,
};
