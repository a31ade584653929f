//! Dense kernels used by the recurrent cells. Row-major matrices throughout.

use crate::Scalar;

/// Dot product with 32 independent accumulators so the loop vectorizes
/// under strict IEEE ordering. The summation order is fixed.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 32];
    let (ca, cb) = (a.chunks_exact(32), b.chunks_exact(32));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        let xa: &[T; 32] = xa.try_into().unwrap();
        let xb: &[T; 32] = xb.try_into().unwrap();
        for k in 0..32 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    for k in 0..16 {
        acc[k] = acc[k] + acc[k + 16];
    }
    for k in 0..8 {
        acc[k] = acc[k] + acc[k + 8];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[r] += W[r, :] · x` for a `rows × x.len()` matrix.
#[inline]
pub fn gemv_acc<T: Scalar>(out: &mut [T], w: &[T], x: &[T]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ · dz` for a `dz.len() × out.len()` matrix.
#[inline]
pub fn gemv_t_acc<T: Scalar>(out: &mut [T], w: &[T], dz: &[T]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), dz.len() * cols);
    for (&d, row) in dz.iter().zip(w.chunks_exact(cols)) {
        if d != T::zero() {
            axpy(out, d, row);
        }
    }
}

/// `dW += dz ⊗ x` (outer product accumulate).
#[inline]
pub fn outer_acc<T: Scalar>(dw: &mut [T], dz: &[T], x: &[T]) {
    let cols = x.len();
    debug_assert_eq!(dw.len(), dz.len() * cols);
    for (&d, row) in dz.iter().zip(dw.chunks_exact_mut(cols)) {
        if d != T::zero() {
            axpy(row, d, x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn gemv_and_transpose_agree() {
        // 2x3 matrix
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 2];
        gemv_acc(&mut out, &w, &[1.0, 0.0, -1.0]);
        assert_eq!(out, [-2.0, -2.0]);
        let mut back = [0.0; 3];
        gemv_t_acc(&mut back, &w, &[1.0, 1.0]);
        assert_eq!(back, [5.0, 7.0, 9.0]);
        let mut dw = [0.0; 6];
        outer_acc(&mut dw, &[1.0, 2.0], &[1.0, 0.5, 0.0]);
        assert_eq!(dw, [1.0, 0.5, 0.0, 2.0, 1.0, 0.0]);
    }
}
