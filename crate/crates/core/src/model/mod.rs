//! Small feed-forward classifiers trained on the generated datasets.

mod mlp;
mod train;

pub use mlp::{Activation, Dense, Mlp, ModelConfig};
pub use train::{
    accuracy, argmax, predict, select_correct, train, Classifier, Normalization, TrainConfig,
    TrainedModel, MODEL_FORMAT, MODEL_VERSION,
};
pub(crate) use train::write_atomic;
