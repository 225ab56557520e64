//! Column orthonormalization by Gram–Schmidt with one full
//! re-orthogonalization pass ("twice is enough").

use crate::error::{Error, Result};
use crate::linalg::kernels::{dot, sub_scaled};
use crate::linalg::matrix::Matrix;

/// Relative threshold below which a column counts as dependent on the
/// columns before it.
pub const RANK_TOL: f64 = 1e-12;

/// Orthonormal basis `Q` for the column space of a full-column-rank `A`.
///
/// Columns are processed left to right, so `Q` agrees with the `Q` factor of
/// a QR decomposition with positive `R` diagonal.
pub fn qr_orthonormalize(a: &Matrix) -> Result<Matrix> {
    if a.cols() > a.rows() {
        return Err(Error::RankDeficient);
    }
    let columns = a.columns();
    let scale = columns
        .iter()
        .map(|c| dot(c, c).sqrt())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::RankDeficient);
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for mut col in columns {
        let norm = orthogonalize_against(&mut col, &basis);
        if norm <= RANK_TOL * scale {
            return Err(Error::RankDeficient);
        }
        col.iter_mut().for_each(|x| *x /= norm);
        basis.push(col);
    }
    Ok(Matrix::from_columns(&basis))
}

/// Removes from `v` its components along the (orthonormal) `basis`, twice,
/// and returns the norm of what is left.
pub(crate) fn orthogonalize_against(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            sub_scaled(v, c, q);
        }
    }
    dot(v, v).sqrt()
}

/// Appends to `basis` the normalized parts of `columns` that are not already
/// spanned (relative tolerance `tol` against each column's own norm), never
/// exceeding the ambient dimension. Returns how many columns were added.
pub(crate) fn extend_basis(basis: &mut Vec<Vec<f64>>, columns: Vec<Vec<f64>>, tol: f64) -> usize {
    let before = basis.len();
    for mut col in columns {
        let dim = col.len();
        if basis.len() == dim {
            break;
        }
        let norm0 = dot(&col, &col).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let norm = orthogonalize_against(&mut col, basis);
        if norm > tol * norm0 {
            col.iter_mut().for_each(|x| *x /= norm);
            basis.push(col);
        }
    }
    basis.len() - before
}
