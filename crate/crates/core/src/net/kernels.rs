//! Dense kernels with a fixed summation order.

use super::Scalar;

const LANES: usize = 8;

/// Dot product accumulated in eight interleaved partial sums.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    let s01 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let s23 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    (s01 + s23) + tail
}

/// `out[r] += sum_c mat[r, c] * x[c]` for a row-major `out.len() x x.len()` matrix.
#[inline]
pub(crate) fn matvec_add<T: Scalar>(out: &mut [T], mat: &[T], x: &[T]) {
    let cols = x.len();
    debug_assert_eq!(mat.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(mat.chunks_exact(cols.max(1))) {
        *o = *o + dot(row, x);
    }
}

/// `out[c] += sum_r mat[r, c] * v[r]`.
#[inline]
pub(crate) fn matvec_t_add<T: Scalar>(out: &mut [T], mat: &[T], v: &[T]) {
    let cols = out.len();
    debug_assert_eq!(mat.len(), v.len() * cols);
    for (row, &s) in mat.chunks_exact(cols.max(1)).zip(v) {
        axpy(out, s, row);
    }
}

/// `grad[r, :] += v[r] * x` (rank-one update).
#[inline]
pub(crate) fn outer_add<T: Scalar>(grad: &mut [T], v: &[T], x: &[T]) {
    let cols = x.len();
    for (row, &s) in grad.chunks_exact_mut(cols.max(1)).zip(v) {
        axpy(row, s, x);
    }
}

/// `y += a * x`.
#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    if a == T::zero() {
        return;
    }
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Numerically stable softmax of `logits` into `out`; returns `ln sum exp`.
pub(crate) fn softmax<T: Scalar>(logits: &[T], out: &mut [T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
    max + sum.ln()
}
