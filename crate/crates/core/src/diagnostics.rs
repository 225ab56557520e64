//! Spectral measurements on weights, gradients and updates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{thin_svd, Matrix};

/// Orthonormality tolerance for subspace bases.
const BASIS_TOL: f64 = 1e-8;

/// Default dimension of the subspaces compared by [`report_block`].
pub const DEFAULT_SUBSPACE_K: usize = 64;

fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    Ok(thin_svd(a)?.s)
}

fn nonzero_spectrum(a: &Matrix) -> Result<Vec<f64>> {
    if a.is_zero() {
        return Err(Error::ZeroInput);
    }
    singular_values(a)
}

fn check_k(k: usize, a: &Matrix) -> Result<()> {
    let q = a.min_dim();
    if k == 0 || k > q {
        return Err(Error::InvalidRank { k, max: q });
    }
    Ok(())
}

fn stable_rank_of(s: &[f64]) -> f64 {
    let frob_sq: f64 = s.iter().map(|x| x * x).sum();
    frob_sq / (s[0] * s[0])
}

/// `‖W‖_F² / σ₁(W)²`.
pub fn stable_rank(w: &Matrix) -> Result<f64> {
    Ok(stable_rank_of(&nonzero_spectrum(w)?))
}

/// Stable rank divided by `min(d_in, d_out)`.
pub fn normalized_stable_rank(w: &Matrix) -> Result<f64> {
    Ok(stable_rank(w)? / w.min_dim() as f64)
}

/// Mean normalized stable rank over `weights`; `None` when empty.
pub fn mean_normalized_stable_rank<'a>(weights: impl IntoIterator<Item = &'a Matrix>) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0;
    for w in weights {
        sum += normalized_stable_rank(w)?;
        n += 1;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Sum of the `k` largest singular values.
pub fn kyfan_norm(a: &Matrix, k: usize) -> Result<f64> {
    check_k(k, a)?;
    Ok(singular_values(a)?[..k].iter().sum())
}

pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?[0])
}

/// `Σ_{i>k} σᵢ²`, the squared Frobenius distance to the best rank-`k` fit.
pub fn tail_energy_frob(g: &Matrix, k: usize) -> Result<f64> {
    check_k(k, g)?;
    Ok(tail_from_spectrum(&singular_values(g)?, k))
}

fn tail_from_spectrum(s: &[f64], k: usize) -> f64 {
    s[k..].iter().map(|x| x * x).sum()
}

/// `σ₁²·(sr(G) − 1)`, which equals `tail_energy_frob(G, 1)`.
pub fn delta1_via_stable_rank(g: &Matrix) -> Result<f64> {
    let s = nonzero_spectrum(g)?;
    Ok(s[0] * s[0] * (stable_rank_of(&s) - 1.0))
}

fn check_orthonormal(u: &Matrix, label: &str) -> Result<()> {
    let gram = u.t_matmul(u)?;
    let err = gram.max_abs_diff(&Matrix::identity(u.cols()))?;
    if err > BASIS_TOL {
        return Err(Error::InvalidInput(format!(
            "{label} columns are not orthonormal (max deviation {err:.3e})"
        )));
    }
    Ok(())
}

/// Principal angles between the column spans of two `d × k` orthonormal
/// bases, in nondecreasing order.
pub fn principal_angles(u1: &Matrix, u2: &Matrix) -> Result<Vec<f64>> {
    if u1.shape() != u2.shape() {
        return Err(Error::shape(u1.shape(), u2.shape()));
    }
    check_orthonormal(u1, "first basis")?;
    check_orthonormal(u2, "second basis")?;
    let cosines = singular_values(&u1.t_matmul(u2)?)?;
    Ok(cosines.iter().map(|c| c.clamp(0.0, 1.0).acos()).collect())
}

/// Grassmann distance `(Σ θᵢ²)^{1/2}`.
pub fn grassmann_distance(u1: &Matrix, u2: &Matrix) -> Result<f64> {
    let angles = principal_angles(u1, u2)?;
    Ok(angles.iter().map(|t| t * t).sum::<f64>().sqrt())
}

/// `√((1−β)/(1+β))·ν/√b + βᵗ·ν/√b`: expected-error bound for the momentum
/// buffer tracking the true gradient under noise of std `ν/√b`.
pub fn momentum_error_bound(beta: f64, nu: f64, batch: usize, t: usize) -> f64 {
    let sigma = nu / (batch as f64).sqrt();
    ((1.0 - beta) / (1.0 + beta)).sqrt() * sigma + beta.powi(t as i32) * sigma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub block_name: String,
    pub step: usize,
    pub rows: usize,
    pub cols: usize,
    pub stable_rank: f64,
    pub normalized_stable_rank: f64,
    pub nuclear_norm: f64,
    pub top_singular: f64,
    /// Keyed by `k`; ranks beyond the block's dimensions are skipped.
    pub tail_energy_k: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grassmann_to_update: Option<f64>,
}

/// Gathers every diagnostic for one block.
///
/// With an `update`, also reports the Grassmann distance between the top
/// `subspace_k` left singular subspaces of `w` and of the update
/// (`subspace_k` is clamped to the block's smaller dimension).
pub fn report_block(
    name: &str,
    step: usize,
    w: &Matrix,
    update: Option<&Matrix>,
    ks: &[usize],
    subspace_k: usize,
) -> Result<SpectralReport> {
    if w.is_zero() {
        return Err(Error::ZeroInput);
    }
    let svd = thin_svd(w)?;
    let s = &svd.s;
    let q = w.min_dim();
    let sr = stable_rank_of(s);
    let tail_energy_k = ks
        .iter()
        .filter(|&&k| k >= 1 && k <= q)
        .map(|&k| (k, tail_from_spectrum(s, k)))
        .collect();
    let grassmann_to_update = match update {
        Some(d) if !d.is_zero() => {
            if d.shape() != w.shape() {
                return Err(Error::shape(w.shape(), d.shape()));
            }
            let k = subspace_k.clamp(1, q);
            let ud = thin_svd(d)?.u.leading_columns(k);
            Some(grassmann_distance(&svd.u.leading_columns(k), &ud)?)
        }
        _ => None,
    };
    Ok(SpectralReport {
        block_name: name.to_string(),
        step,
        rows: w.rows(),
        cols: w.cols(),
        stable_rank: sr,
        normalized_stable_rank: sr / q as f64,
        nuclear_norm: s.iter().sum(),
        top_singular: s[0],
        tail_energy_k,
        grassmann_to_update,
    })
}

/// Mean with min/max band across layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBand {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn layer_band(values: &[f64]) -> Option<LayerBand> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(LayerBand { mean, min, max })
}
