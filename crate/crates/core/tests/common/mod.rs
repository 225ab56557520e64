//! Reference computations shared by the integration tests. Nothing here calls
//! into the crate's factorization code.

#![allow(dead_code)]

use std::io::Write;

use numuon::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Eigen-decomposition of a symmetric matrix by cyclic two-sided Jacobi.
/// Returns eigenvalues (descending) and eigenvectors as columns.
pub fn sym_eig(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-32 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// `AᵀA` (or `AAᵀ` when wide) as nested vectors.
fn small_gram(m: &Matrix) -> Vec<Vec<f64>> {
    let (r, c) = m.shape();
    if r >= c {
        (0..c)
            .map(|i| (0..c).map(|j| (0..r).map(|k| m[(k, i)] * m[(k, j)]).sum()).collect())
            .collect()
    } else {
        (0..r)
            .map(|i| (0..r).map(|j| (0..c).map(|k| m[(i, k)] * m[(j, k)]).sum()).collect())
            .collect()
    }
}

/// Singular values, descending, from the eigenvalues of the smaller Gram
/// matrix.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    sym_eig(&small_gram(m)).0.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// Squared singular values, descending.
pub fn squared_singular_values(m: &Matrix) -> Vec<f64> {
    sym_eig(&small_gram(m)).0.into_iter().map(|l| l.max(0.0)).collect()
}

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `n × n` orthogonal matrix by twice-applied classical Gram–Schmidt on
/// Gaussian columns.
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for q in &cols {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

/// `U[:, :q] · diag(s) · V[:, :q]ᵀ` with `q = s.len()`, computed entrywise.
pub fn with_spectrum(u: &Matrix, s: &[f64], v: &Matrix) -> Matrix {
    Matrix::from_fn(u.rows(), v.rows(), |i, j| {
        s.iter().enumerate().map(|(k, sk)| u[(i, k)] * sk * v[(j, k)]).sum()
    })
}

pub fn frob_dist(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Prints one result line, bypassing the test harness's output capture.
pub fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("[{}] {id:02} {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}
