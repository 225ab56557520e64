//! Inner loops of the Jacobi and Gram–Schmidt routines, with AVX2/FMA
//! versions picked at runtime on x86-64.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required CPU features were detected above.
        return unsafe { x86::dot(a, b) };
    }
    dot_portable(a, b)
}

/// `(x, y) ← (c·x − s·y, s·x + c·y)`.
#[inline]
pub(crate) fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    debug_assert_eq!(x.len(), y.len());
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required CPU features were detected above.
        return unsafe { x86::rotate(x, y, c, s) };
    }
    rotate_portable(x, y, c, s)
}

/// `y ← y − c·x`.
#[inline]
pub(crate) fn sub_scaled(y: &mut [f64], c: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (a, b) in y.iter_mut().zip(x) {
        *a -= c * b;
    }
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn has_fma() -> bool {
    std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
}

fn dot_portable(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn rotate_portable(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mut acc0 = _mm256_setzero_pd();
        let mut acc1 = _mm256_setzero_pd();
        let mut i = 0;
        while i + 8 <= n {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(i)), _mm256_loadu_pd(pb.add(i)), acc0);
            acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(i + 4)), _mm256_loadu_pd(pb.add(i + 4)), acc1);
            i += 8;
        }
        let mut lanes = [0.0f64; 4];
        _mm256_storeu_pd(lanes.as_mut_ptr(), _mm256_add_pd(acc0, acc1));
        let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
        while i < n {
            s = a[i].mul_add(b[i], s);
            i += 1;
        }
        s
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
        let n = x.len().min(y.len());
        let (px, py) = (x.as_mut_ptr(), y.as_mut_ptr());
        let (vc, vs) = (_mm256_set1_pd(c), _mm256_set1_pd(s));
        let mut i = 0;
        while i + 4 <= n {
            let xa = _mm256_loadu_pd(px.add(i));
            let yb = _mm256_loadu_pd(py.add(i));
            let nx = _mm256_fmsub_pd(vc, xa, _mm256_mul_pd(vs, yb));
            let ny = _mm256_fmadd_pd(vs, xa, _mm256_mul_pd(vc, yb));
            _mm256_storeu_pd(px.add(i), nx);
            _mm256_storeu_pd(py.add(i), ny);
            i += 4;
        }
        while i < n {
            let (xa, yb) = (x[i], y[i]);
            x[i] = c * xa - s * yb;
            y[i] = s * xa + c * yb;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_with_portable_versions() {
        for n in [0, 1, 3, 4, 7, 8, 13, 128] {
            let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
            assert!((dot(&a, &b) - dot_portable(&a, &b)).abs() < 1e-12);
            let (mut x1, mut y1) = (a.clone(), b.clone());
            let (mut x2, mut y2) = (a.clone(), b.clone());
            rotate(&mut x1, &mut y1, 0.8, 0.6);
            rotate_portable(&mut x2, &mut y2, 0.8, 0.6);
            for i in 0..n {
                assert!((x1[i] - x2[i]).abs() < 1e-14 && (y1[i] - y2[i]).abs() < 1e-14);
            }
        }
    }
}
