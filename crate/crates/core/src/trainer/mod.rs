//! Optimization, checkpoints and scoring.

mod adam;
mod checkpoint;
mod eval;
mod gradcheck;
mod metrics;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint, TrainingProvenance, FORMAT_VERSION, MAGIC};
pub use eval::{evaluate, EvalReport, LanguageReport, ModelRecognizer, OracleRecognizer, Recognizer, SplitReport, WerrEntry};
pub use gradcheck::{model_grad_check, GradAgreement};
pub use metrics::{edit_counts, wer, werr, ErrorCounts};
pub use train::{
    batch_gradient, default_stages, model_config_for, run_curriculum, train_stage, train_vanilla, utterance_gradient,
    Init, StageConfig, StageOutcome,
};
