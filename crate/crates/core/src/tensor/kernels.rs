//! Slice-level numeric kernels shared by tensors and the tape.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

const TILE_R: usize = 4;
const TILE_C: usize = 8;

/// `a[m,k] * b[k,n]`
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    let (m_full, n_full) = (m - m % TILE_R, n - n % TILE_C);
    // Register-tiled interior: a TILE_R x TILE_C block of `out` stays in
    // accumulators across the whole k loop.
    for i0 in (0..m_full).step_by(TILE_R) {
        for j0 in (0..n_full).step_by(TILE_C) {
            let mut acc = [[T::zero(); TILE_C]; TILE_R];
            for p in 0..k {
                let b_seg: &[T; TILE_C] = b[p * n + j0..p * n + j0 + TILE_C].try_into().expect("tile width");
                for (r, acc_row) in acc.iter_mut().enumerate() {
                    let av = a[(i0 + r) * k + p];
                    for c in 0..TILE_C {
                        acc_row[c] += av * b_seg[c];
                    }
                }
            }
            for (r, acc_row) in acc.iter().enumerate() {
                out[(i0 + r) * n + j0..(i0 + r) * n + j0 + TILE_C].copy_from_slice(acc_row);
            }
        }
    }
    // Remainder columns of the tiled rows, then the remainder rows.
    for i in 0..m {
        let cols = if i < m_full { n_full..n } else { 0..n };
        if cols.is_empty() {
            continue;
        }
        let out_row = &mut out[i * n + cols.start..i * n + cols.end];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let b_row = &b[p * n + cols.start..p * n + cols.end];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a[m,k] * b[n,k]^T`
pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    // Row-axpy form over b^T vectorizes; a strided dot per entry does not.
    matmul(a, &transpose(b, n, k), m, k, n)
}

/// `a[k,m]^T * b[k,n]`
pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == T::zero() {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += api * bv;
            }
        }
    }
    out
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn transpose<T: Scalar>(a: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// (outer, axis length, inner) factorisation of `shape` around `axis`.
pub fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return shape_err(op, format!("axis {axis} out of range for shape {shape:?}"));
    }
    Ok(())
}

/// Numerically stable softmax along one axis (max subtracted first).
pub fn softmax_axis<T: Scalar>(x: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let mut max = T::neg_infinity();
            for k in 0..len {
                max = max.max(x[idx(k)]);
            }
            let mut total = T::zero();
            for k in 0..len {
                let e = (x[idx(k)] - max).exp();
                out[idx(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[idx(k)] /= total;
            }
        }
    }
    out
}

/// In-place softmax of a contiguous slice.
pub fn softmax_slice<T: Scalar>(x: &mut [T]) {
    if x.is_empty() {
        return;
    }
    let max = x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut total = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

/// Sum along `axis`, keeping it with length 1.
pub fn sum_axis<T: Scalar>(x: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for k in 0..len {
            for i in 0..inner {
                out[o * inner + i] += x[(o * len + k) * inner + i];
            }
        }
    }
    out
}

/// Repeats a reduced (length-1) axis back to length `len`.
pub fn expand_axis<T: Scalar>(x: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); outer * len * inner];
    for o in 0..outer {
        for k in 0..len {
            let dst = (o * len + k) * inner;
            out[dst..dst + inner].copy_from_slice(&x[o * inner..(o + 1) * inner]);
        }
    }
    out
}

pub fn permute<T: Scalar>(x: &[T], shape: &[usize], perm: &[usize]) -> Result<(Vec<usize>, Vec<T>)> {
    let rank = shape.len();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return shape_err("permute", format!("{perm:?} is not a permutation of rank {rank}"));
    }
    let new_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut strides = vec![1usize; rank];
    for a in (0..rank.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut index = vec![0usize; rank];
    for _ in 0..x.len() {
        let src: usize = index.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(x[src]);
        for a in (0..rank).rev() {
            index[a] += 1;
            if index[a] < new_shape[a] {
                break;
            }
            index[a] = 0;
        }
    }
    Ok((new_shape, out))
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub fn slice_axis<T: Scalar>(
    x: &[T],
    shape: &[usize],
    axis: usize,
    start: usize,
    len: usize,
) -> Result<(Vec<usize>, Vec<T>)> {
    check_axis("slice", shape, axis)?;
    if start + len > shape[axis] {
        return shape_err("slice", format!("[{start}, {}) exceeds axis {axis} of {shape:?}", start + len));
    }
    let (outer, full, inner) = split_axis(shape, axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        out.extend_from_slice(&x[base..base + len * inner]);
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = len;
    Ok((new_shape, out))
}

pub fn concat<T: Scalar>(parts: &[&[T]], shapes: &[&[usize]], axis: usize) -> Result<(Vec<usize>, Vec<T>)> {
    let Some(first) = shapes.first() else {
        return shape_err("concat", "no inputs");
    };
    check_axis("concat", first, axis)?;
    for s in shapes {
        let compatible = s.len() == first.len()
            && s.iter().zip(first.iter()).enumerate().all(|(a, (x, y))| a == axis || x == y);
        if !compatible {
            return shape_err("concat", format!("incompatible shapes {shapes:?} along axis {axis}"));
        }
    }
    let (outer, _, inner) = split_axis(first, axis);
    let total: usize = shapes.iter().map(|s| s[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (p, s) in parts.iter().zip(shapes) {
            let chunk = s[axis] * inner;
            out.extend_from_slice(&p[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.to_vec();
    shape[axis] = total;
    Ok((shape, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a: Vec<f64> = (0..6).map(|x| x as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|x| (x as f64) * 0.5).collect(); // 3x4
        let c = matmul(&a, &b, 2, 3, 4);
        let bt = transpose(&b, 3, 4);
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 4), c);
        let at = transpose(&a, 2, 3);
        assert_eq!(matmul_tn(&at, &b, 3, 2, 4), c);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = [1.0f64, 2.0, 3.0, -1.0, 0.0, 1000.0];
        let y = softmax_axis(&x, &[2, 3], 1);
        for r in 0..2 {
            let s: f64 = y[r * 3..r * 3 + 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let y0 = softmax_axis(&x, &[2, 3], 0);
        for c in 0..3 {
            assert!((y0[c] + y0[3 + c] - 1.0).abs() < 1e-12);
        }
    }
}
