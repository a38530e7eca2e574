//! Plain loops behind the tape operations.

use crate::exec::Execution;

/// Work (in multiply-adds) below which matmul stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// `c[m×n] = a[m×k] · b[k×n]`.
///
/// Zero entries of `a` are skipped, which makes products with sparse
/// bag-of-words inputs cheap without a separate sparse format.
pub fn matmul(exec: Execution, a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if n == 0 {
        return c;
    }
    let row = |i: usize, out: &mut [f64]| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &aik) in ar.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (o, &bv) in out.iter_mut().zip(br) {
                *o += aik * bv;
            }
        }
    };
    let exec = if m * k * n >= PAR_THRESHOLD {
        exec
    } else {
        Execution::Sequential
    };
    exec.for_each_chunk(&mut c, n, |i, out| row(i, out));
    c
}

/// `c[m×n] = a[m×k] · b[n×k]ᵀ`.
pub fn matmul_nt(exec: Execution, a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let bt = transpose(b, n, k);
    matmul(exec, a, &bt, m, k, n)
}

/// `c[k×n] = a[m×k]ᵀ · b[m×n]`.
pub fn matmul_tn(exec: Execution, a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let at = transpose(a, m, k);
    matmul(exec, &at, b, k, m, n)
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of one row.
pub fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}
