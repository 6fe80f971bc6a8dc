//! Staged training orchestration: base-backbone pretraining (stage 0),
//! control learning (stage 1), degradation adaptation (stage 2), and
//! history-context training (stage 3), plus the optimizer, checkpoint
//! container, and training log.

mod checkpoint;
mod optim;
mod stages;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use optim::{AdamW, AdamWConfig};
pub use stages::{
    load_train_state, prepare_samples, save_train_state, stage_objective, train_stage, LogRow,
    StageConfig, StageContext, TemporalTargets, TrainLog, TrainRngs, TrainSample, TrainState,
    PIPELINE_CHECKPOINT_KIND,
};
