//! Row-major matrix kernels. Work is split by output row so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use crate::scalar::Real;

const PAR_THRESHOLD: usize = 1 << 16;

const MR: usize = 4;

/// `out[m×n] += a[m×k] · b[k×n]`.
///
/// Every output element accumulates its products in ascending `k` order
/// starting from its current value, whatever the blocking or thread count.
pub(crate) fn gemm_acc<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if n == 0 {
        return;
    }
    let block = |(i, out_rows): (usize, &mut [T])| {
        let rows = out_rows.len() / n;
        let a_rows = &a[i * MR * k..(i * MR + rows) * k];
        if rows == MR {
            dispatch::<T, MR>(k, n, a_rows, b, out_rows);
        } else {
            for (a_row, out_row) in a_rows.chunks_exact(k.max(1)).zip(out_rows.chunks_exact_mut(n)) {
                dispatch::<T, 1>(k, n, a_row, b, out_row);
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > MR {
        out.par_chunks_mut(MR * n).enumerate().for_each(block);
    } else {
        out.chunks_mut(MR * n).enumerate().for_each(block);
    }
}

// Same kernel compiled with wider vectors. No FMA is enabled, so every
// product and sum rounds exactly as in the baseline build.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn panel_avx2<T: Real, const R: usize>(k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    panel::<T, R>(k, n, a, b, out)
}

#[inline(always)]
fn dispatch<T: Real, const R: usize>(k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { panel_avx2::<T, R>(k, n, a, b, out) };
    }
    panel::<T, R>(k, n, a, b, out)
}

/// `R` output rows updated together so each row of `b` is loaded once per panel.
#[inline(always)]
fn panel<T: Real, const R: usize>(k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    if R == MR {
        let (o0, rest) = out.split_at_mut(n);
        let (o1, rest) = rest.split_at_mut(n);
        let (o2, o3) = rest.split_at_mut(n);
        let o3 = &mut o3[..n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let (a0, a1, a2, a3) = (a[p], a[k + p], a[2 * k + p], a[3 * k + p]);
            for j in 0..n {
                let bv = b_row[j];
                o0[j] += a0 * bv;
                o1[j] += a1 * bv;
                o2[j] += a2 * bv;
                o3[j] += a3 * bv;
            }
        }
    } else {
        for r in 0..R {
            let out_row = &mut out[r * n..(r + 1) * n];
            for p in 0..k {
                let aip = a[r * k + p];
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aip * bv;
                }
            }
        }
    }
}

pub(crate) fn gemm<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    gemm_acc(m, k, n, a, b, &mut out);
    out
}

/// Transpose of a row-major `rows × cols` matrix.
pub(crate) fn transpose<T: Real>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_paths_agree_bitwise() {
        let (m, k, n) = (64, 48, 40);
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 37) % 101) as f64 / 7.0 - 6.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| ((i * 53) % 89) as f64 / 11.0 - 4.0).collect();
        let par = gemm(m, k, n, &a, &b);
        let mut ser = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                for j in 0..n {
                    ser[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        assert_eq!(par, ser);
    }
}
