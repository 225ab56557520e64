use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnostics::{report_block, SpectralReport};
use crate::error::{Error, Result};
use crate::optim::{apply_step, init_states, step_seed};

use super::model::MlpModel;
use super::task::Dataset;

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: usize,
    /// Minibatch loss before the update.
    pub loss: f64,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ranks: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<SpectralReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub svd_fallbacks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: MlpModel,
    pub dataset: Dataset,
    /// Loss over the full training split after the last step.
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
}

/// Seeds for weight init and batch sampling, derived from the run seed.
fn sub_seed(seed: u64, purpose: &str) -> u64 {
    step_seed(seed, purpose, 0)
}

pub fn init_model(cfg: &RunConfig) -> Result<MlpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "init"));
    MlpModel::init(
        cfg.task.input_dim,
        &cfg.model.hidden,
        cfg.task.output_dim,
        cfg.model.activation,
        &mut rng,
    )
}

/// Runs the full training loop, handing each record to `sink` as it is made.
pub fn train_run<F>(cfg: &RunConfig, mut sink: F) -> Result<TrainOutput>
where
    F: FnMut(&RunRecord) -> Result<()>,
{
    cfg.validate()?;
    let started = Instant::now();
    let dataset = cfg.task.generate()?;
    let mut model = init_model(cfg)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "batch"));
    let mut states = init_states(model.params());

    for t in 0..cfg.total_steps {
        let batch = dataset.train.sample(cfg.batch_size, &mut batch_rng);
        let (loss, grads) = model.loss_and_grad(&batch)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { step: t, loss });
        }
        let outcome = apply_step(model.params_mut(), &mut states, &grads, &cfg.optimizer, t)?;

        let last = t + 1 == cfg.total_steps;
        let mut blocks = Vec::new();
        if cfg.diagnostics_every > 0 && (t % cfg.diagnostics_every == 0 || last) {
            for p in model.params().iter().filter(|p| p.is_matrix_param) {
                if p.weight.is_zero() {
                    continue;
                }
                let update = outcome.directions.get(&p.name);
                blocks.push(report_block(&p.name, t, &p.weight, update, &cfg.diagnostic_ks, cfg.subspace_k)?);
            }
        }
        let record = RunRecord {
            step: t,
            loss,
            lr: outcome.lr,
            rank_fraction: outcome.rank_fraction,
            ranks: outcome.ranks,
            blocks,
            svd_fallbacks: outcome.fallbacks,
            wall_time_s: cfg.log_wall_time.then(|| started.elapsed().as_secs_f64()),
        };
        sink(&record)?;
    }

    let final_train_loss = model.loss(&dataset.train)?;
    if !final_train_loss.is_finite() || final_train_loss > DIVERGENCE_LOSS {
        return Err(Error::Diverged {
            step: cfg.total_steps,
            loss: final_train_loss,
        });
    }
    let final_eval_loss = model.loss(&dataset.eval)?;
    Ok(TrainOutput {
        model,
        dataset,
        final_train_loss,
        final_eval_loss,
    })
}
