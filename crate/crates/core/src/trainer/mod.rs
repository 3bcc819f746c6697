//! Masked reconstruction training.

mod curves;
mod loss;
mod masking;
mod optim;
mod train;

pub use curves::{CurveRow, TrainingCurves};
pub(crate) use loss::trailer_outputs;
pub use loss::{
    batch_accuracy, compute_loss, pair_accuracy, predict_graph, predict_probs, LossMode, Prediction,
};
pub use masking::{mask_sequence, MaskedSequence};
pub use optim::{optimizer_step, AdamW, AdamWConfig, LrSchedule, LrShape};
pub use train::{train, train_from, TrainConfig, TrainOutcome};
