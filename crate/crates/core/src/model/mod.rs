//! The seq2seq model, its affective components, training and checkpoints.

mod affective;
mod checkpoint;
mod config;
mod seq2seq;
mod train;
mod variant;

pub use affective::{
    affective_regularizer, effective_lambda, inference_goal, init_affective_goal, total_loss, training_goal,
    update_affective_state, v_scores, we_mixture, AffectiveGoal, AffectiveState, GoalOrigin, GoalSource, VocabVad,
};
pub use config::{ModelConfig, TrainConfig, CORNELL_MAX_LENGTH, DEFAULT_DROPOUT, DEFAULT_MU, OPEN_SUBTITLES_MAX_LENGTH};
pub use seq2seq::{Layout, PairLoss, Seq2Seq};
pub use variant::ModelVariant;
pub use checkpoint::{load_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use train::{evaluate_loss, fit, EpochReport, RunDir, Trainer};
