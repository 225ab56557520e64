//! Thin singular value decomposition by one-sided (Hestenes) Jacobi.
//!
//! The rotations act on the columns of the taller orientation of the input,
//! so the implicit Gram matrix is `min(rows, cols)` square. Results are
//! deterministic for a given input: singular values sorted nonincreasing and
//! every left singular vector signed so its first nonzero entry is positive.

use crate::error::{Error, Result};
use crate::linalg::kernels::{dot, rotate};
use crate::linalg::matrix::Matrix;
use crate::linalg::qr::orthogonalize_against;

const MAX_SWEEPS: usize = 80;

/// Factors `U · diag(s) · Vᵀ` of a thin or truncated SVD.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U · diag(s) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            us.scale_column(j, s);
        }
        us.matmul_t(&self.v).expect("factor shapes agree")
    }

    /// `U · Vᵀ`, the partial isometry spanned by the factors.
    pub fn isometry(&self) -> Matrix {
        self.u.matmul_t(&self.v).expect("factor shapes agree")
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> Result<SvdTriple> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidRank {
                k,
                max: self.rank(),
            });
        }
        Ok(SvdTriple {
            u: self.u.leading_columns(k),
            s: self.s[..k].to_vec(),
            v: self.v.leading_columns(k),
        })
    }
}

/// Thin SVD with `r = min(rows, cols)` triplets.
pub fn thin_svd(a: &Matrix) -> Result<SvdTriple> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let tall = a.rows() >= a.cols();
    // `work` holds the columns of the tall orientation as contiguous rows.
    let (m, n, work) = if tall {
        (a.rows(), a.cols(), a.transpose())
    } else {
        (a.cols(), a.rows(), a.clone())
    };
    let (left, s, right) = jacobi_columns(work.into_vec(), m, n);
    let (u_cols, v_cols) = if tall { (left, right) } else { (right, left) };

    let mut u = Matrix::from_columns(&u_cols);
    let mut v = Matrix::from_columns(&v_cols);
    canonicalize_signs(&mut u, &mut v);
    Ok(SvdTriple { u, s, v })
}

/// One-sided Jacobi on the `n` columns (length `m`, `m ≥ n`) stored row-wise
/// in `w`. Returns left vectors, singular values and right vectors, sorted.
fn jacobi_columns(mut w: Vec<f64>, m: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let column_norms = |w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| dot(&w[i * m..(i + 1) * m], &w[i * m..(i + 1) * m]))
            .collect()
    };
    let mut norms = column_norms(&w);
    let tol = f64::EPSILON * (m as f64).sqrt();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let (alpha, beta) = (norms[i], norms[j]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (wi, wj) = pair_mut(&mut w, m, i, j);
                let gamma = dot(wi, wj);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(wi, wj, c, s);
                norms[i] = alpha - t * gamma;
                norms[j] = beta + t * gamma;
                let (vi, vj) = pair_mut(&mut vt, n, i, j);
                rotate(vi, vj, c, s);
            }
        }
        // The running norms drift by rounding; resync once per sweep.
        norms = column_norms(&w);
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma_max = norms[order[0]].sqrt();
    let floor = sigma_max * f64::EPSILON * m as f64;
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sing = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for &idx in &order {
        let sigma = norms[idx].sqrt();
        let col = &w[idx * m..(idx + 1) * m];
        let u = if sigma > floor && sigma > 0.0 {
            col.iter().map(|x| x / sigma).collect()
        } else {
            // Numerically null direction: any unit vector orthogonal to the
            // previous left vectors is a valid singular vector.
            complete_direction(col, &left, m)
        };
        left.push(u);
        sing.push(sigma);
        right.push(vt[idx * n..(idx + 1) * n].to_vec());
    }
    (left, sing, right)
}

fn complete_direction(seed: &[f64], basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    let candidates = std::iter::once(seed.to_vec()).chain((0..m).map(|e| {
        let mut v = vec![0.0; m];
        v[e] = 1.0;
        v
    }));
    for mut v in candidates {
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm0);
        let norm = orthogonalize_against(&mut v, basis);
        if norm > 0.5 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
    unreachable!("a unit vector outside a deficient basis always exists")
}

#[inline]
fn pair_mut(buf: &mut [f64], stride: usize, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (head, tail) = buf.split_at_mut(j * stride);
    (&mut head[i * stride..(i + 1) * stride], &mut tail[..stride])
}

/// Flips each (u_i, v_i) pair so the first nonzero entry of u_i is positive.
pub(crate) fn canonicalize_signs(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..u.cols() {
        let col = u.column(j);
        let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lead = col.iter().find(|x| x.abs() > 1e-12 * scale).copied();
        if lead.is_some_and(|x| x < 0.0) {
            u.scale_column(j, -1.0);
            v.scale_column(j, -1.0);
        }
    }
}
