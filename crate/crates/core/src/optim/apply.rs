use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lmo::SvdMode;
use crate::schedule::{rank_at_with, LrSchedule, RankDivisor, RankSchedule};

use super::rules::{adamw_step, muon_step, numuon_step, Update};
use super::{AdamParams, MomentumInit, OptimizerKind, OptimizerState, Orthogonalizer, ParamBlock, StepConfig};

fn default_beta() -> f64 {
    0.95
}
fn default_weight_decay() -> f64 {
    0.1
}
fn default_rho() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

/// Optimizer settings for a whole run, schedules included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub fw_style: bool,
    #[serde(default = "default_true")]
    pub rms_scaling: bool,
    #[serde(default)]
    pub momentum_init: MomentumInit,
    #[serde(default)]
    pub orthogonalizer: Orthogonalizer,
    #[serde(default)]
    pub svd_mode: SvdMode,
    #[serde(default)]
    pub adam: AdamParams,
    #[serde(default)]
    pub rank_divisor: RankDivisor,
    /// Seeds the randomized SVD; mixed with block name and step.
    #[serde(default)]
    pub seed: u64,
    pub lr: LrSchedule,
    pub rank: RankSchedule,
}

impl OptimizerSpec {
    /// Defaults for `kind` with the given schedules.
    pub fn new(kind: OptimizerKind, lr: LrSchedule, rank: RankSchedule) -> Self {
        Self {
            kind,
            beta: default_beta(),
            weight_decay: default_weight_decay(),
            rho: default_rho(),
            fw_style: false,
            rms_scaling: true,
            momentum_init: MomentumInit::Zeros,
            orthogonalizer: Orthogonalizer::default(),
            svd_mode: SvdMode::default(),
            adam: AdamParams::default(),
            rank_divisor: RankDivisor::Min,
            seed: 0,
            lr,
            rank,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        self.rank.validate()?;
        self.step_config(self.lr.base_lr, 0).validate()?;
        if let SvdMode::Krylov { block, iters } = self.svd_mode {
            if block == 0 || iters == 0 {
                return Err(Error::Config("krylov block and iters must be >= 1".into()));
            }
        }
        if let Orthogonalizer::NewtonSchulz { iters: 0, .. } = self.orthogonalizer {
            return Err(Error::Config("newton-schulz iters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn step_config(&self, lr: f64, seed: u64) -> StepConfig {
        StepConfig {
            lr,
            beta: self.beta,
            weight_decay: self.weight_decay,
            rho: self.rho,
            kind: self.kind,
            fw_style: self.fw_style,
            rms_scaling: self.rms_scaling,
            momentum_init: self.momentum_init,
            orthogonalizer: self.orthogonalizer,
            svd_mode: self.svd_mode,
            adam: self.adam,
            seed,
        }
    }
}

/// Summary of one [`apply_step`] call.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub lr: f64,
    /// Rank fraction used by NuMuon blocks.
    pub rank_fraction: Option<f64>,
    /// Rank applied to each NuMuon block.
    pub ranks: BTreeMap<String, usize>,
    /// Blocks whose randomized SVD fell back to an exact one.
    pub fallbacks: Vec<String>,
    /// Raw orthogonalized directions of matrix blocks.
    pub directions: BTreeMap<String, Matrix>,
}

/// Fresh zeroed states for every block.
pub fn init_states(blocks: &[ParamBlock]) -> BTreeMap<String, OptimizerState> {
    blocks
        .iter()
        .map(|b| (b.name.clone(), OptimizerState::for_block(b)))
        .collect()
}

/// Deterministic per-block, per-step seed.
pub fn step_seed(run_seed: u64, name: &str, t: usize) -> u64 {
    // FNV-1a keeps the name hash stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(run_seed ^ h) ^ t as u64)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Updates every block at step `t` with its configured rule.
///
/// Blocks are visited in name order. Non-matrix blocks always take AdamW.
pub fn apply_step(
    blocks: &mut [ParamBlock],
    states: &mut BTreeMap<String, OptimizerState>,
    grads: &BTreeMap<String, Matrix>,
    spec: &OptimizerSpec,
    t: usize,
) -> Result<StepOutcome> {
    let lr = spec.lr.lr_at(t)?;
    let rank_fraction = match spec.kind {
        OptimizerKind::Numuon => Some(spec.rank.rank_fraction_at(t)?),
        _ => None,
    };
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| blocks[a].name.cmp(&blocks[b].name));
    if let Some(w) = order.windows(2).find(|w| blocks[w[0]].name == blocks[w[1]].name) {
        return Err(Error::InvalidInput(format!("duplicate block name `{}`", blocks[w[0]].name)));
    }
    for &i in &order {
        if !grads.contains_key(&blocks[i].name) {
            return Err(Error::MissingGradient(blocks[i].name.clone()));
        }
    }

    let mut out = StepOutcome {
        lr,
        rank_fraction,
        ..StepOutcome::default()
    };
    for &i in &order {
        let block = &mut blocks[i];
        let grad = &grads[&block.name];
        let state = states
            .entry(block.name.clone())
            .or_insert_with(|| OptimizerState::for_block(block));
        let cfg = spec.step_config(lr, step_seed(spec.seed, &block.name, t));
        let update: Update = match (block.is_matrix_param, spec.kind) {
            (false, _) | (true, OptimizerKind::AdamW) => adamw_step(block, state, grad, &cfg)?,
            (true, OptimizerKind::Muon) => muon_step(block, state, grad, &cfg)?,
            (true, OptimizerKind::Numuon) => {
                let (d_out, d_in) = block.weight.shape();
                let fraction = rank_fraction.expect("set for numuon");
                let k = rank_at_with(fraction, d_in, d_out, spec.rank_divisor);
                out.ranks.insert(block.name.clone(), k);
                numuon_step(block, state, grad, k, &cfg)?
            }
        };
        if update.used_fallback {
            out.fallbacks.push(block.name.clone());
        }
        if let Some(d) = update.direction {
            out.directions.insert(block.name.clone(), d);
        }
    }
    Ok(out)
}
