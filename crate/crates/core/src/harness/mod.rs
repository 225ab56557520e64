//! Small hand-differentiated models, synthetic tasks and the training loop.

mod model;
mod task;
mod train;

pub use model::{bias_name, weight_name, Activation, ForwardCache, MlpModel};
pub use task::{Batch, Dataset, TaskKind, TaskSpec, Targets};
pub use train::{init_model, train_run, RunRecord, TrainOutput, DIVERGENCE_LOSS};
