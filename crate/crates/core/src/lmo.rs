//! Linear minimization oracles over the spectral-norm ball and over its
//! intersection with a nuclear-norm ball.
//!
//! For a momentum matrix `M = U diag(σ) Vᵀ` every oracle here returns
//! `−U diag(s) Vᵀ`, with `s` solving `max Σ σᵢ sᵢ` over the feasible
//! singular-value profiles. The spectral ball alone gives `s = ρ·1`; adding a
//! nuclear budget `τ` turns the profile problem into a linear program over a
//! capped simplex whose optimum fills the largest coefficients first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_krylov_topk, thin_svd, KrylovParams, Matrix, SvdTriple};

/// Spectral cap `ρ` and optional nuclear budget `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBudget {
    rho: f64,
    tau: Option<f64>,
}

impl NormBudget {
    pub fn new(rho: f64, tau: Option<f64>) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!("spectral cap must be positive, got {rho}")));
        }
        if let Some(t) = tau {
            if !(t > 0.0) || t.is_nan() {
                return Err(Error::InvalidInput(format!("nuclear budget must be positive, got {t}")));
            }
        }
        Ok(Self { rho, tau })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `None` means the nuclear constraint is absent.
    pub fn tau(&self) -> Option<f64> {
        self.tau.filter(|t| t.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CappedSimplexSolution {
    pub s: Vec<f64>,
    /// Number of strictly positive entries of `s`.
    pub active_rank: usize,
    /// `Σ σᵢ sᵢ`.
    pub objective: f64,
    /// Fractional mass placed after the last full `ρ` entry (zero when the
    /// budget is a multiple of `ρ` or is slack).
    pub residual: f64,
}

/// Greedy solution of `max Σσᵢsᵢ  s.t. 0 ≤ sᵢ ≤ ρ, Σsᵢ ≤ τ` for sorted `σ`.
pub fn capped_simplex_lp(sigma: &[f64], budget: NormBudget) -> Result<CappedSimplexSolution> {
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput("sigma must be finite and nonnegative".into()));
    }
    if sigma.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("sigma must be sorted nonincreasing".into()));
    }
    let q = sigma.len();
    let rho = budget.rho();
    let mut s = vec![0.0; q];
    let mut residual = 0.0;
    match budget.tau() {
        None => s.fill(rho),
        Some(tau) => {
            let full = (tau / rho).floor();
            let full_count = if full >= q as f64 { q } else { full as usize };
            s[..full_count].fill(rho);
            if full_count < q {
                residual = (tau - full_count as f64 * rho).clamp(0.0, rho);
                s[full_count] = residual;
            }
        }
    }
    let objective = sigma.iter().zip(&s).map(|(a, b)| a * b).sum();
    let active_rank = s.iter().filter(|&&x| x > 0.0).count();
    Ok(CappedSimplexSolution {
        s,
        active_rank,
        objective,
        residual,
    })
}

/// `−ρ·U·Vᵀ`, the minimizer of `⟨M, X⟩` over `‖X‖₂ ≤ ρ`.
pub fn spectral_lmo(m: &Matrix, rho: f64) -> Result<Matrix> {
    if m.is_zero() {
        return Err(Error::ZeroInput);
    }
    let svd = thin_svd(m)?;
    // Null directions contribute nothing to ⟨M, X⟩; leaving them out makes
    // the answer unique (−ρ·uvᵀ for a rank-one M).
    let floor = svd.s[0] * f64::EPSILON * m.rows().max(m.cols()) as f64;
    let rank = svd.s.iter().filter(|&&s| s > floor).count();
    Ok(svd.truncate(rank)?.isometry().scale(-rho))
}

/// How the top-k singular subspace is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SvdMode {
    Exact,
    Krylov { block: usize, iters: usize },
}

impl Default for SvdMode {
    fn default() -> Self {
        SvdMode::Krylov { block: 8, iters: 2 }
    }
}

/// Top-`k` singular triplets of `m` by the requested route.
pub fn top_k_factors(
    m: &Matrix,
    k: usize,
    mode: SvdMode,
    seed: u64,
    warm_start: Option<&Matrix>,
) -> Result<SvdTriple> {
    let q = m.min_dim();
    if k == 0 || k > q {
        return Err(Error::InvalidRank { k, max: q });
    }
    match mode {
        SvdMode::Exact => thin_svd(m)?.truncate(k),
        SvdMode::Krylov { block, iters } => {
            let params = KrylovParams {
                block: block.max(k),
                iters,
                seed,
            };
            block_krylov_topk(m, k, params, warm_start)
        }
    }
}

/// `−ρ·U_k·V_kᵀ` from the top-`k` singular vectors of `m`.
pub fn numuon_lmo(m: &Matrix, rho: f64, k: usize, mode: SvdMode) -> Result<Matrix> {
    let q = m.min_dim();
    if k == 0 || k > q {
        return Err(Error::InvalidRank { k, max: q });
    }
    if m.is_zero() {
        return Err(Error::ZeroInput);
    }
    Ok(top_k_factors(m, k, mode, 0, None)?.isometry().scale(-rho))
}

/// Largest rank the nuclear budget can support, `min(q, ⌈τ/ρ⌉)`.
pub fn rank_for_budget(q: usize, budget: NormBudget) -> usize {
    match budget.tau() {
        None => q,
        Some(tau) => ((tau / budget.rho()).ceil() as usize).clamp(1, q),
    }
}

/// `√(d_out / d_in)`, matching per-entry update RMS across aspect ratios.
pub fn rms_scale(d_out: usize, d_in: usize) -> f64 {
    assert!(d_out > 0 && d_in > 0, "dimensions must be positive");
    (d_out as f64 / d_in as f64).sqrt()
}
