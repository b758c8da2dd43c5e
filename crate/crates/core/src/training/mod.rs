//! Losses, optimization and the pretrain / fine-tune loops.

pub mod config;
pub mod loops;
pub mod loss;
pub mod optim;
pub mod record;

pub use config::TrainConfig;
pub use loops::{
    argmax_labels, finetune, mean_foreground_dice, predict_dataset, predict_labels, pretrain,
    proxy_loss, proxy_step, proxy_validation_set, segmentation_step, select_labeled,
    train_reconstruction, proxy_spec, FinetuneInit, FinetuneOutput, PretrainOutput, ReconstructionRun,
};
pub use loss::*;
pub use optim::*;
pub use record::{EpochRecord, RunRecord, StopReason};
