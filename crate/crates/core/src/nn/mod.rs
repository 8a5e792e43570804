//! Feed-forward regression networks used as learned summary statistics.

mod mlp;
mod train;

pub use mlp::{backprop_gradient, data_loss, gather_rows, gradient_check, loss, CheckpointMeta, Gradient, MlpModel, MLP_KIND};
pub use train::{train, Examples, LrSchedule, TrainConfig, TrainReport};

use crate::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("a network needs at least one hidden layer")]
    NoHiddenLayer,
    #[error("layer sizes {0:?} contain an empty layer")]
    EmptyLayer(Vec<usize>),
    #[error("input has {got} entries, network expects {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameters contain non-finite values")]
    NonFinite,
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset has no {0} split")]
    MissingSplit(&'static str),
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): loss became {loss}")]
    Diverged { epoch: usize, learning_rate: f64, loss: f64 },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl PartialEq for NnError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}
