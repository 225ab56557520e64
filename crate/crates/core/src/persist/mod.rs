//! On-disk formats: checkpoints and the metrics stream.

mod checkpoint;
mod metrics;

pub use checkpoint::{Checkpoint, StoredBlock, StoredTensor, MAGIC};
pub use metrics::{read_metrics, MetricsWriter};
