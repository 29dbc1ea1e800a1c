//! Adversarial training: objectives, optimizer, loop and checkpoints.

mod checkpoint;
mod config;
mod log;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{
    check_config, decode_checkpoint, decode_raw, encode_checkpoint, load_checkpoint, load_checkpoint_for,
    save_checkpoint, RawCheckpoint, FORMAT_VERSION, MAGIC,
};
pub use config::TrainConfig;
pub use log::{StepRecord, TrainLog};
pub use loss::{d_loss, d_loss_from_scores, g_adv_from_scores, g_loss, g_loss_from_parts, l1_term};
pub use optim::{OptimState, RmsProp};
pub use trainer::{
    enhance_batch, train, train_step, update_discriminator, update_generator, Enhanced, TrainState, TrainingSet,
};
