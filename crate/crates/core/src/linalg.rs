//! Sparse/dense kernels and randomized truncated SVD.
//!
//! Range finding follows the usual recipe: Gaussian sketch, optional power
//! (subspace) iterations with re-orthonormalization, then an exact
//! eigendecomposition of the small `l × l` Gram matrix of `Qᵀ A`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn for_each_chunk<T: Send, F>(buf: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

pub(crate) fn map_range<T: Send, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    (0..n).map(f).collect()
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ColMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ColMat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    fn bytes(&self) -> u64 {
        (self.data.len() * core::mem::size_of::<f64>()) as u64
    }
}

/// CSR sparse matrix with f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate coordinates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(u32, u32, f64)>) -> Result<Self> {
        for &(i, j, v) in &t {
            if i as usize >= nrows || j as usize >= ncols {
                return Err(Error::OutOfRange { index: (i.max(j)) as usize, len: nrows.max(ncols) });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse matrix entries"));
            }
        }
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices: Vec<u32> = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            indptr[i as usize + 1] += 1;
            indices.push(j);
            values.push(v);
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix { nrows, ncols, indptr, indices, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((j, i as u32, v));
            }
        }
        SparseMatrix::from_triplets(self.ncols, self.nrows, t).expect("transpose of valid matrix")
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j as usize] += v;
            }
        }
        out
    }

    /// `A · X` for column-major `X`.
    pub fn mul(&self, x: &ColMat) -> ColMat {
        assert_eq!(x.rows, self.ncols);
        let mut out = ColMat::zeros(self.nrows, x.cols);
        for_each_chunk(&mut out.data, self.nrows, |c, col| {
            let xc = x.col(c);
            for (i, o) in col.iter_mut().enumerate() {
                let (cols, vals) = self.row(i);
                *o = cols.iter().zip(vals).map(|(&j, &v)| v * xc[j as usize]).sum();
            }
        });
        out
    }

    fn bytes(&self) -> u64 {
        (self.indptr.len() * 8 + self.indices.len() * 4 + self.values.len() * 8) as u64
    }
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormalizes the columns in place by classical Gram–Schmidt with one
/// reorthogonalization pass. Columns that collapse numerically are zeroed.
pub fn orthonormalize(m: &mut ColMat) {
    let rows = m.rows;
    for j in 0..m.cols {
        let (done, rest) = m.data.split_at_mut(j * rows);
        let v = &mut rest[..rows];
        let original = libm::sqrt(dot64(v, v));
        if original == 0.0 {
            continue;
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = map_range(j, |i| dot64(&done[i * rows..(i + 1) * rows], v));
            const BLOCK: usize = 4096;
            let done = &*done;
            for_each_chunk(v, BLOCK, |b, chunk| {
                let start = b * BLOCK;
                for (i, &c) in coeffs.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let q = &done[i * rows + start..i * rows + start + chunk.len()];
                    for (x, &qv) in chunk.iter_mut().zip(q) {
                        *x -= c * qv;
                    }
                }
            });
        }
        let nrm = libm::sqrt(dot64(v, v));
        if nrm <= 1e-10 * original {
            v.iter_mut().for_each(|x| *x = 0.0);
        } else {
            v.iter_mut().for_each(|x| *x /= nrm);
        }
    }
}

/// Eigendecomposition of a symmetric matrix (row-major, `n × n`) by cyclic
/// Jacobi rotations. Eigenvalues are returned in descending order with the
/// matching eigenvectors as columns.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, ColMat)> {
    assert_eq!(a.len(), n * n);
    const MAX_SWEEPS: usize = 100;
    let mut a = a.to_vec();
    let mut v = ColMat::zeros(n, n);
    for i in 0..n {
        v.data[i * n + i] = 1.0;
    }
    let scale = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>()).max(f64::MIN_POSITIVE);
    let off = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        libm::sqrt(s)
    };
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged || off(&a) <= 1e-14 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v.data[p * n + k];
                    let vkq = v.data[q * n + k];
                    v.data[p * n + k] = c * vkp - s * vkq;
                    v.data[q * n + k] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let residual = off(&a);
        if residual > 1e-10 * scale {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS, residual });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("symmetric eigensolver"));
    }
    let mut vecs = ColMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.col_mut(dst).copy_from_slice(v.col(src));
    }
    Ok((values, vecs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RsvdParams {
    pub rank: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

/// `A ≈ U diag(s) Vᵀ` with `rank` columns.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: ColMat,
    pub s: Vec<f64>,
    pub v: ColMat,
    /// Largest simultaneous footprint of the dense work buffers plus the
    /// sparse operands, in bytes.
    pub peak_bytes: u64,
}

impl TruncatedSvd {
    /// Frobenius norm of `A − U diag(s) Vᵀ`, computed densely row by row.
    pub fn residual_frobenius(&self, a: &SparseMatrix) -> f64 {
        let mut total = 0.0;
        let mut row = vec![0.0; a.ncols()];
        for i in 0..a.nrows() {
            row.iter_mut().for_each(|x| *x = 0.0);
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j as usize] += v;
            }
            for (k, &sk) in self.s.iter().enumerate() {
                let uik = self.u.get(i, k) * sk;
                if uik == 0.0 {
                    continue;
                }
                for (j, r) in row.iter_mut().enumerate() {
                    *r -= uik * self.v.get(j, k);
                }
            }
            total += dot64(&row, &row);
        }
        libm::sqrt(total)
    }
}

/// Randomized truncated SVD of a sparse matrix.
pub fn randomized_svd(a: &SparseMatrix, params: RsvdParams) -> Result<TruncatedSvd> {
    let (m, n) = (a.nrows(), a.ncols());
    let k = params.rank;
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(alloc::format!(
            "rank {k} must be in 1..={}",
            m.min(n)
        )));
    }
    let l = (k + params.oversample).min(m.min(n));
    let at = a.transpose();
    let sparse_bytes = a.bytes() + at.bytes();
    let mut peak = sparse_bytes;
    let mut track = |bufs: &[&ColMat]| {
        let live: u64 = bufs.iter().map(|b| b.bytes()).sum::<u64>() + sparse_bytes;
        peak = peak.max(live);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut omega = ColMat::zeros(n, l);
    for x in omega.data.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
    let mut q = a.mul(&omega);
    track(&[&omega, &q]);
    drop(omega);
    orthonormalize(&mut q);
    for _ in 0..params.power_iters {
        let mut z = at.mul(&q);
        track(&[&q, &z]);
        orthonormalize(&mut z);
        q = a.mul(&z);
        track(&[&q, &z]);
        orthonormalize(&mut q);
    }
    // W = Aᵀ Q, so B = Qᵀ A = Wᵀ and B Bᵀ = Wᵀ W.
    let w = at.mul(&q);
    track(&[&q, &w]);
    let gram_flat: Vec<Vec<f64>> = map_range(l, |i| (0..l).map(|j| dot64(w.col(i), w.col(j))).collect());
    let gram: Vec<f64> = gram_flat.into_iter().flatten().collect();
    let (evals, evecs) = symmetric_eigen(&gram, l)?;

    let s: Vec<f64> = evals.iter().take(k).map(|&e| libm::sqrt(e.max(0.0))).collect();
    let mut u = ColMat::zeros(m, k);
    let mut v = ColMat::zeros(n, k);
    track(&[&q, &w, &u, &v]);
    for_each_chunk(&mut u.data, m, |c, col| {
        for t in 0..l {
            let coef = evecs.get(t, c);
            if coef != 0.0 {
                for (o, &qv) in col.iter_mut().zip(q.col(t)) {
                    *o += coef * qv;
                }
            }
        }
    });
    let s_ref = &s;
    for_each_chunk(&mut v.data, n, |c, col| {
        if s_ref[c] <= 1e-12 * s_ref[0].max(f64::MIN_POSITIVE) {
            return;
        }
        for t in 0..l {
            let coef = evecs.get(t, c) / s_ref[c];
            if coef != 0.0 {
                for (o, &wv) in col.iter_mut().zip(w.col(t)) {
                    *o += coef * wv;
                }
            }
        }
    });
    if u.data.iter().chain(&v.data).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("randomized SVD"));
    }
    Ok(TruncatedSvd { u, s, v, peak_bytes: peak })
}
