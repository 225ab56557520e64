//! Randomized block Krylov approximation of the top-k SVD.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;
use crate::linalg::qr::{extend_basis, qr_orthonormalize};
use crate::linalg::svd::{thin_svd, SvdTriple};

/// Relative tolerance used when merging Krylov blocks into one basis.
const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovParams {
    /// Block width `b`; raised to `k` when smaller.
    pub block: usize,
    /// Number of two-sided multiplications `L`.
    pub iters: usize,
    pub seed: u64,
}

impl Default for KrylovParams {
    fn default() -> Self {
        Self {
            block: 8,
            iters: 2,
            seed: 0,
        }
    }
}

impl KrylovParams {
    /// Block size actually used for rank `k`: at least `k`, and never wider
    /// than the `n` columns of the operator.
    pub fn effective_block(&self, k: usize, n: usize) -> usize {
        self.block.max(k).min(n)
    }
}

/// Approximate top-`k` singular triplets of `a`.
///
/// `warm_start`, when given, must have `a.cols()` rows; its columns seed the
/// starting block (extra columns are dropped, missing ones drawn fresh).
pub fn block_krylov_topk(
    a: &Matrix,
    k: usize,
    params: KrylovParams,
    warm_start: Option<&Matrix>,
) -> Result<SvdTriple> {
    let q = a.min_dim();
    if k == 0 || k > q {
        return Err(Error::InvalidRank { k, max: q });
    }
    if params.iters == 0 {
        return Err(Error::InvalidInput("krylov iters must be >= 1".into()));
    }
    let n = a.cols();
    let block = params.effective_block(k, n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let start = match warm_start {
        Some(w) => {
            if w.rows() != n {
                return Err(Error::shape((n, block), w.shape()));
            }
            let mut cols = w.columns();
            cols.truncate(block);
            if cols.len() < block {
                let fresh = Matrix::gaussian(n, block - cols.len(), &mut rng);
                cols.extend(fresh.columns());
            }
            Matrix::from_columns(&cols)
        }
        None => Matrix::gaussian(n, block, &mut rng),
    };
    let mut current = orthonormalize_block(&start, &mut rng)?;

    let mut krylov: Vec<Vec<f64>> = Vec::with_capacity(params.iters * block);
    let mut blocks = Vec::with_capacity(params.iters);
    for _ in 0..params.iters {
        let t = a.matmul(&current)?;
        let next = a.t_matmul(&t)?;
        current = orthonormalize_block(&next, &mut rng)?;
        blocks.push(current.columns());
    }
    for cols in blocks {
        extend_basis(&mut krylov, cols, BASIS_TOL);
    }
    if krylov.len() < k {
        let fresh = Matrix::gaussian(n, n, &mut rng).columns();
        extend_basis(&mut krylov, fresh, BASIS_TOL);
        krylov.truncate(k);
    }
    let basis = Matrix::from_columns(&krylov);

    let projected = a.matmul(&basis)?;
    let small = thin_svd(&projected)?;
    if small.rank() < k {
        return Err(Error::RankDeficient);
    }
    let u = small.u.leading_columns(k);
    let s = small.s[..k].to_vec();
    let v = basis.matmul(&small.v.leading_columns(k))?;
    Ok(SvdTriple { u, s, v })
}

/// `qr` of a block; on numerical rank deficiency the block is re-sampled
/// once by replacing its dependent directions with fresh Gaussian columns.
fn orthonormalize_block(block: &Matrix, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    match qr_orthonormalize(block) {
        Ok(q) => Ok(q),
        Err(Error::RankDeficient) => {
            let (n, b) = block.shape();
            let mut basis = Vec::with_capacity(b);
            extend_basis(&mut basis, block.columns(), BASIS_TOL);
            let fresh = Matrix::gaussian(n, b, rng);
            extend_basis(&mut basis, fresh.columns(), BASIS_TOL);
            if basis.len() < b {
                return Err(Error::RankDeficient);
            }
            basis.truncate(b);
            Ok(Matrix::from_columns(&basis))
        }
        Err(e) => Err(e),
    }
}
