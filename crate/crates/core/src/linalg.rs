//! Dense row-major kernels on `f64` slices.

use crate::rng::{tag, StreamRng};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `out = M x` for a `rows x cols` row-major `M`.
pub fn matvec_into(mat: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(mat.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (row, o) in mat.chunks_exact(cols).zip(out.iter_mut()) {
        *o = dot(row, x);
    }
}

pub fn matvec(mat: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    matvec_into(mat, rows, cols, x, &mut out);
    out
}

/// `out = Mᵀ y` for a `rows x cols` row-major `M`.
pub fn matvec_t_into(mat: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(out.len(), cols);
    out.iter_mut().for_each(|o| *o = 0.0);
    for (row, &yi) in mat.chunks_exact(cols).zip(y) {
        if yi != 0.0 {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
    }
}

pub fn matvec_t(mat: &[f64], rows: usize, cols: usize, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    matvec_t_into(mat, rows, cols, y, &mut out);
    out
}

/// `MᵀM` as a `cols x cols` row-major matrix.
pub fn gram(mat: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; cols * cols];
    for row in mat.chunks_exact(cols).take(rows) {
        for (i, &ri) in row.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            let gi = &mut g[i * cols..(i + 1) * cols];
            for (gij, &rj) in gi[i..].iter_mut().zip(&row[i..]) {
                *gij += ri * rj;
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            g[i * cols + j] = g[j * cols + i];
        }
    }
    g
}

/// Largest singular value of a `rows x cols` matrix by power iteration on `MᵀM`.
///
/// Stops after `max_iter` iterations or once the estimate changes by less than
/// `rel_tol` relatively. The start vector is a fixed pseudo-random direction.
pub fn spectral_norm(mat: &[f64], rows: usize, cols: usize, max_iter: usize, rel_tol: f64) -> f64 {
    if rows == 0 || cols == 0 || mat.iter().all(|&w| w == 0.0) {
        return 0.0;
    }
    let mut rng = StreamRng::derive(0x5eed, tag::POWER_ITERATION, &[rows as u64, cols as u64]);
    let mut v = rng.gaussian_vec(cols);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut mv = vec![0.0; rows];
    let mut w = vec![0.0; cols];
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        matvec_into(mat, rows, cols, &v, &mut mv);
        let next = norm(&mv);
        matvec_t_into(mat, rows, cols, &mv, &mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            return next;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let done = sigma > 0.0 && ((next - sigma) / next).abs() < rel_tol;
        sigma = next;
        if done {
            break;
        }
    }
    matvec_into(mat, rows, cols, &v, &mut mv);
    norm(&mv).max(sigma)
}
