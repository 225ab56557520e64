//! Run configuration, read from and written to TOML.
//!
//! Every field has a serde default except the task kind, the optimizer kind
//! and the schedules, so a minimal file stays short. [`RunConfig::to_toml`]
//! always writes the fully resolved form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Activation, TaskSpec};
use crate::optim::OptimizerSpec;
use crate::schedule::RankSchedule;

fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128]
}
fn default_activation() -> Activation {
    Activation::Tanh
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            activation: default_activation(),
        }
    }
}

fn default_batch() -> usize {
    64
}
fn default_every() -> usize {
    50
}
fn default_ks() -> Vec<usize> {
    vec![1, 16]
}
fn default_subspace_k() -> usize {
    crate::diagnostics::DEFAULT_SUBSPACE_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub total_steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Seeds weight initialization and batch sampling.
    #[serde(default)]
    pub seed: u64,
    /// Spectral diagnostics cadence in steps; 0 disables them.
    #[serde(default = "default_every")]
    pub diagnostics_every: usize,
    /// Ranks at which tail energy is reported.
    #[serde(default = "default_ks")]
    pub diagnostic_ks: Vec<usize>,
    #[serde(default = "default_subspace_k")]
    pub subspace_k: usize,
    /// Adds elapsed seconds to each record (makes streams nondeterministic).
    #[serde(default)]
    pub log_wall_time: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSpec,
    pub task: TaskSpec,
    pub optimizer: OptimizerSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        self.task.validate()?;
        self.optimizer.validate()?;
        if self.optimizer.lr.total_steps != self.total_steps {
            return Err(Error::Config(format!(
                "lr schedule covers {} steps but the run has {}",
                self.optimizer.lr.total_steps, self.total_steps
            )));
        }
        let rank_steps = match &self.optimizer.rank {
            RankSchedule::CosineHold { total_steps, .. } => Some(*total_steps),
            _ => None,
        };
        if rank_steps.is_some_and(|s| s != self.total_steps) {
            return Err(Error::Config("rank schedule must cover total_steps".into()));
        }
        Ok(())
    }
}
