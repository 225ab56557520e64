//! Step rules for AdamW, Muon and NuMuon over named parameter blocks.
//!
//! Matrix blocks follow the configured orthogonalized rule; vectors such as
//! biases always take AdamW. [`apply_step`] dispatches a whole model in
//! name-sorted order so results do not depend on caller ordering.

mod apply;
mod rules;

use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, NsCoefficients, DEFAULT_NS_ITERS};
use crate::lmo::SvdMode;

pub use apply::{apply_step, init_states, step_seed, OptimizerSpec, StepOutcome};
pub use rules::{
    adamw_step, fw_step, momentum_update, momentum_update_with, muon_step, numuon_step, Update,
};

/// A named trainable tensor. Vectors are stored as `n × 1` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub weight: Matrix,
    pub is_matrix_param: bool,
}

impl ParamBlock {
    pub fn matrix(name: impl Into<String>, weight: Matrix) -> Self {
        Self {
            name: name.into(),
            weight,
            is_matrix_param: true,
        }
    }

    pub fn vector(name: impl Into<String>, values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            name: name.into(),
            weight: Matrix::from_fn(n, 1, |i, _| values[i]),
            is_matrix_param: false,
        }
    }
}

/// Per-block optimizer memory.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Number of updates applied so far.
    pub step: usize,
    pub momentum: Matrix,
    pub adam_m: Option<Matrix>,
    pub adam_v: Option<Matrix>,
    /// Right singular vectors from the previous NuMuon step.
    pub warm_block: Option<Matrix>,
}

impl OptimizerState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            step: 0,
            momentum: Matrix::zeros(rows, cols),
            adam_m: None,
            adam_v: None,
            warm_block: None,
        }
    }

    pub fn for_block(block: &ParamBlock) -> Self {
        let (r, c) = block.weight.shape();
        Self::new(r, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[serde(rename = "adamw")]
    AdamW,
    Muon,
    Numuon,
}

/// How Muon computes the polar factor of the momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Orthogonalizer {
    NewtonSchulz { iters: usize, coeffs: NsCoefficients },
    Exact,
}

impl Default for Orthogonalizer {
    fn default() -> Self {
        Orthogonalizer::NewtonSchulz {
            iters: DEFAULT_NS_ITERS,
            coeffs: NsCoefficients::default(),
        }
    }
}

/// Initial value of the momentum buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumInit {
    /// `M_{-1} = 0`, so `M_0 = (1 − β)·G_0`.
    #[default]
    Zeros,
    /// `M_0 = G_0`.
    FirstGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Everything a single block update needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub lr: f64,
    pub beta: f64,
    pub weight_decay: f64,
    pub rho: f64,
    pub kind: OptimizerKind,
    /// Use `W ← (1 − γ)W + γ·Δ` instead of `W ← W + γ·Δ`.
    pub fw_style: bool,
    pub rms_scaling: bool,
    pub momentum_init: MomentumInit,
    pub orthogonalizer: Orthogonalizer,
    pub svd_mode: SvdMode,
    pub adam: AdamParams,
    /// Seed for the randomized SVD at this step.
    pub seed: u64,
}

impl StepConfig {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            lr,
            beta: 0.95,
            weight_decay: 0.1,
            rho: 1.0,
            kind,
            fw_style: false,
            rms_scaling: true,
            momentum_init: MomentumInit::Zeros,
            orthogonalizer: Orthogonalizer::default(),
            svd_mode: SvdMode::default(),
            adam: AdamParams::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Config("rho must be > 0".into()));
        }
        if self.fw_style && self.lr > 1.0 {
            return Err(Error::Config("fw_style needs lr <= 1".into()));
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps >= 0.0) {
            return Err(Error::Config("invalid adam parameters".into()));
        }
        Ok(())
    }
}
