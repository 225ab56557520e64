//! Post-training truncated-SVD compression.
//!
//! The rate is the fraction of parameters removed from the blocks the policy
//! selects; blocks outside the policy, vectors, and blocks too small to
//! benefit stay dense and are accounted separately.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{weight_name, TaskSpec, Targets};
use crate::linalg::{thin_svd, Matrix};
use crate::persist::{Checkpoint, StoredTensor};

/// `W ≈ Wu·Wvᵀ` with the singular values folded into `Wu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub wu: Matrix,
    pub wv: Matrix,
}

impl LowRankFactors {
    pub fn new(wu: Matrix, wv: Matrix) -> Result<Self> {
        if wu.cols() != wv.cols() {
            return Err(Error::shape((wu.rows(), wv.cols()), wu.shape()));
        }
        Ok(Self { wu, wv })
    }

    pub fn rank(&self) -> usize {
        self.wu.cols()
    }

    /// `(d_out, d_in)` of the represented matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.wu.rows(), self.wv.rows())
    }

    pub fn reconstruct(&self) -> Matrix {
        self.wu.matmul_t(&self.wv).expect("factor ranks agree")
    }

    pub fn stored_params(&self) -> usize {
        let (d_out, d_in) = self.shape();
        self.rank() * (d_out + d_in)
    }
}

/// Largest `k` with `k·(d_out + d_in) ≤ (1 − rate)·d_out·d_in`.
pub fn rate_to_rank(d_out: usize, d_in: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidInput(format!("rate must lie in (0, 1), got {rate}")));
    }
    let budget = (1.0 - rate) * (d_out * d_in) as f64;
    let per_rank = (d_out + d_in) as f64;
    let mut k = (budget / per_rank).floor() as usize;
    // Settle rounding at exact multiples against the budget itself.
    while k > 0 && k as f64 * per_rank > budget {
        k -= 1;
    }
    while (k + 1) as f64 * per_rank <= budget {
        k += 1;
    }
    if k == 0 {
        return Err(Error::BlockTooSmall {
            rows: d_out,
            cols: d_in,
            rate,
        });
    }
    Ok(k)
}

/// Best rank-`k` factors of `w` from its truncated SVD.
pub fn compress_block(w: &Matrix, k: usize) -> Result<LowRankFactors> {
    let q = w.min_dim();
    if k == 0 || k > q {
        return Err(Error::InvalidRank { k, max: q });
    }
    let top = thin_svd(w)?.truncate(k)?;
    let mut wu = top.u;
    for (j, &s) in top.s.iter().enumerate() {
        wu.scale_column(j, s);
    }
    LowRankFactors::new(wu, top.v)
}

/// Which matrix blocks are factored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionPolicy {
    /// Every matrix block except the output layer.
    #[default]
    Body,
    /// Every matrix block.
    All,
    /// Exactly these blocks.
    Blocks(Vec<String>),
}

impl CompressionPolicy {
    /// `body`, `all`, or a comma-separated list of block names.
    pub fn parse(s: &str) -> Self {
        match s {
            "body" => CompressionPolicy::Body,
            "all" => CompressionPolicy::All,
            names => CompressionPolicy::Blocks(names.split(',').map(|n| n.trim().to_string()).collect()),
        }
    }

    fn selects(&self, name: &str, head: Option<&str>) -> bool {
        match self {
            CompressionPolicy::Body => head != Some(name),
            CompressionPolicy::All => true,
            CompressionPolicy::Blocks(names) => names.iter().any(|n| n == name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    pub rate: f64,
    pub policy: CompressionPolicy,
    pub per_block_rank: BTreeMap<String, usize>,
    /// Selected blocks kept dense because no rank saves parameters.
    pub skipped_blocks: Vec<String>,
    /// Dense size of the factored blocks; the rate is taken against this.
    pub original_params: usize,
    /// Stored size of the factored blocks.
    pub factored_params: usize,
    /// Everything stored dense: skipped, unselected and vector blocks.
    pub dense_params: usize,
    pub total_params: usize,
}

/// Factors every block the policy selects at `rate`.
pub fn compress_model(
    ckpt: &Checkpoint,
    rate: f64,
    policy: &CompressionPolicy,
) -> Result<(Checkpoint, CompressionPlan)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidInput(format!("rate must lie in (0, 1), got {rate}")));
    }
    if let CompressionPolicy::Blocks(names) = policy {
        for n in names {
            if !ckpt.blocks.iter().any(|b| &b.name == n) {
                return Err(Error::InvalidInput(format!("no block named `{n}`")));
            }
        }
    }
    let head = ckpt.num_layers().map(|l| weight_name(l - 1));
    let mut out = ckpt.clone();
    let mut plan = CompressionPlan {
        rate,
        policy: policy.clone(),
        per_block_rank: BTreeMap::new(),
        skipped_blocks: Vec::new(),
        original_params: 0,
        factored_params: 0,
        dense_params: 0,
        total_params: 0,
    };
    for block in &mut out.blocks {
        let selected = block.is_matrix_param && policy.selects(&block.name, head.as_deref());
        let dense = match &block.tensor {
            StoredTensor::Dense(w) if selected => w,
            StoredTensor::Dense(w) => {
                plan.dense_params += w.rows() * w.cols();
                continue;
            }
            StoredTensor::Factored(_) => {
                return Err(Error::InvalidInput(format!("block `{}` is already factored", block.name)));
            }
        };
        let (d_out, d_in) = dense.shape();
        match rate_to_rank(d_out, d_in, rate) {
            Ok(k) => {
                let factors = compress_block(dense, k)?;
                plan.original_params += d_out * d_in;
                plan.factored_params += factors.stored_params();
                plan.per_block_rank.insert(block.name.clone(), k);
                block.tensor = StoredTensor::Factored(factors);
            }
            Err(Error::BlockTooSmall { .. }) => {
                plan.skipped_blocks.push(block.name.clone());
                plan.dense_params += d_out * d_in;
            }
            Err(e) => return Err(e),
        }
    }
    plan.total_params = plan.factored_params + plan.dense_params;
    out.meta.insert("compression_rate".into(), rate.to_string());
    Ok((out, plan))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    /// `exp(mean cross-entropy)`, classification only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    pub samples: usize,
}

/// Loss of a dense or compressed checkpoint on the task's held-out split.
pub fn eval_compressed(ckpt: &Checkpoint, task: &TaskSpec) -> Result<EvalMetrics> {
    let model = ckpt.to_model()?;
    if model.input_dim() != task.input_dim || model.output_dim() != task.output_dim {
        return Err(Error::InvalidInput(format!(
            "checkpoint maps {} -> {} but the task needs {} -> {}",
            model.input_dim(),
            model.output_dim(),
            task.input_dim,
            task.output_dim
        )));
    }
    let eval = task.generate()?.eval;
    let loss = model.loss(&eval)?;
    let perplexity = matches!(eval.y, Targets::Labels(_)).then(|| loss.exp());
    Ok(EvalMetrics {
        loss,
        perplexity,
        samples: eval.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::tail_energy_frob;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_examples() {
        assert_eq!(rate_to_rank(128, 128, 0.5).unwrap(), 32);
        assert_eq!(rate_to_rank(100, 100, 0.5).unwrap(), 25);
        assert_eq!(rate_to_rank(512, 2048, 0.2).unwrap(), 327);
        assert_eq!(rate_to_rank(128, 128, 0.8).unwrap(), 12);
        assert!(matches!(rate_to_rank(4, 4, 0.99), Err(Error::BlockTooSmall { .. })));
        assert!(rate_to_rank(4, 4, 1.0).is_err());
        assert!(rate_to_rank(4, 4, 0.0).is_err());
    }

    #[test]
    fn block_examples() {
        let d = Matrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        let f = compress_block(&d, 2).unwrap();
        assert!((f.reconstruct().sub(&d).unwrap().frobenius_norm_sq() - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Matrix::gaussian(9, 2, &mut rng).matmul_t(&Matrix::gaussian(7, 2, &mut rng)).unwrap();
        let f = compress_block(&w, 2).unwrap();
        assert!(f.reconstruct().sub(&w).unwrap().frobenius_norm() <= 1e-9 * w.frobenius_norm());
        assert_eq!(f.stored_params(), 2 * 16);

        let w = Matrix::gaussian(10, 6, &mut rng);
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let resid = compress_block(&w, k).unwrap().reconstruct().sub(&w).unwrap().frobenius_norm_sq();
            let tail = tail_energy_frob(&w, k).unwrap();
            assert!((resid - tail).abs() <= 1e-8 * tail.max(w.frobenius_norm_sq() * 1e-8));
            assert!(resid <= prev);
            prev = resid;
        }
        assert!(compress_block(&w, 7).is_err());
    }

    #[test]
    fn policies_parse() {
        assert_eq!(CompressionPolicy::parse("body"), CompressionPolicy::Body);
        assert_eq!(
            CompressionPolicy::parse("a, b"),
            CompressionPolicy::Blocks(vec!["a".into(), "b".into()])
        );
    }
}
