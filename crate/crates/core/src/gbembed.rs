//! Citation-graph embedding: sparse randomized SVD of a log-scaled transition
//! matrix, then band-pass spectral propagation with a Chebyshev expansion.

use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::{EmbeddingMatrix, Method};
use crate::error::{Error, Result};
use crate::graph::{CitationGraph, UndirectedCsr};
use crate::linalg::{for_each_chunk, randomized_svd, RsvdParams, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    pub dim: usize,
    /// Number of Chebyshev terms after the zeroth.
    pub order: usize,
    /// Band-pass center on the Laplacian spectrum `[0, 2]`.
    pub mu: f64,
    /// Band-pass width.
    pub theta: f64,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams {
            dim: 128,
            order: 10,
            mu: 0.2,
            theta: 0.5,
            oversample: 10,
            power_iters: 2,
            seed: 0,
        }
    }
}

impl SpectralParams {
    fn check(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Empty("graph has no nodes"));
        }
        if self.dim == 0 || self.dim > n {
            return Err(Error::InvalidArgument(alloc::format!(
                "dimension {} must be in 1..={n}",
                self.dim
            )));
        }
        if self.theta.is_nan() || self.theta <= 0.0 || !(0.0..=2.0).contains(&self.mu) {
            return Err(Error::InvalidArgument("need theta > 0 and mu in [0, 2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageReport {
    pub peak_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmbedReport {
    pub factorize: StageReport,
    pub propagate: StageReport,
}

/// The factorization target: entry `ln(1 + 1/deg(i))` at every undirected
/// edge `(i, j)`.
pub fn transition_target(und: &UndirectedCsr) -> SparseMatrix {
    let n = und.node_count();
    let mut t = Vec::with_capacity(und.nbrs.len());
    for i in 0..n {
        let deg = und.degree(i);
        if deg == 0 {
            continue;
        }
        let w = libm::log1p(1.0 / deg as f64);
        t.extend(und.neighbors(i).iter().map(|&j| (i as u32, j, w)));
    }
    SparseMatrix::from_triplets(n, n, t).expect("undirected view is in range")
}

/// Rank-`dim` prefactorization; rows are `U Σ^{1/2}`. Isolated nodes get zero
/// rows and land in the missing-set.
pub fn factorize(graph: &CitationGraph, params: &SpectralParams) -> Result<(EmbeddingMatrix, StageReport)> {
    let n = graph.node_count();
    params.check(n)?;
    let und = graph.undirected();
    let target = transition_target(&und);
    let svd = randomized_svd(
        &target,
        RsvdParams {
            rank: params.dim,
            oversample: params.oversample,
            power_iters: params.power_iters,
            seed: params.seed,
        },
    )?;
    let d = params.dim;
    let mut data = vec![0f32; n * d];
    for (k, &s) in svd.s.iter().enumerate() {
        let scale = libm::sqrt(s);
        let col = svd.u.col(k);
        for i in 0..n {
            data[i * d + k] = (col[i] * scale) as f32;
        }
    }
    let isolated: Vec<usize> = (0..n).filter(|&i| und.degree(i) == 0).collect();
    let mut emb = EmbeddingMatrix::from_rows(n, d, data, &isolated, Method::Gb)?;
    emb.source_digest = graph.digest();
    let bytes = svd.peak_bytes + (und.nbrs.len() * 4 + und.offsets.len() * 8) as u64 + (n * d * 4) as u64;
    Ok((emb, StageReport { peak_bytes: bytes }))
}

/// Chebyshev polynomial `T_k(x)` via the three-term recurrence.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    match k {
        0 => 1.0,
        _ => {
            for _ in 1..k {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Gaussian band-pass response on the Laplacian spectrum.
pub fn band_pass(lambda: f64, mu: f64, theta: f64) -> f64 {
    libm::exp(-0.5 * ((lambda - mu) * (lambda - mu) - 1.0) * theta)
}

/// Coefficients `c_0..=c_order` of the Chebyshev series of
/// `x ↦ band_pass(x + 1)` on `[-1, 1]`, by Gauss–Chebyshev quadrature.
pub fn chebyshev_coefficients(order: usize, mu: f64, theta: f64) -> Vec<f64> {
    const NODES: usize = 256;
    let samples: Vec<(f64, f64)> = (0..NODES)
        .map(|j| {
            let phi = core::f64::consts::PI * (j as f64 + 0.5) / NODES as f64;
            (phi, band_pass(libm::cos(phi) + 1.0, mu, theta))
        })
        .collect();
    (0..=order)
        .map(|k| {
            let s: f64 = samples.iter().map(|&(phi, f)| f * libm::cos(k as f64 * phi)).sum();
            let c = 2.0 * s / NODES as f64;
            if k == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

/// Applies `X = L̃ − I = −D̃^{-1/2} (A + I) D̃^{-1/2}` to row-major `src`.
fn shifted_laplacian_apply(und: &UndirectedCsr, inv_sqrt_deg: &[f64], d: usize, src: &[f64], dst: &mut [f64]) {
    for_each_chunk(dst, d, |i, out| {
        let wi = inv_sqrt_deg[i];
        for (o, &s) in out.iter_mut().zip(&src[i * d..(i + 1) * d]) {
            *o = -wi * wi * s;
        }
        for &j in und.neighbors(i) {
            let w = -wi * inv_sqrt_deg[j as usize];
            let row = &src[j as usize * d..(j as usize + 1) * d];
            for (o, &s) in out.iter_mut().zip(row) {
                *o += w * s;
            }
        }
    });
}

/// Band-pass smoothing `Σ c_k T_k(L̃ − I) R`, rows L2-normalized. Rows in
/// the missing-set stay missing.
pub fn propagate(
    graph: &CitationGraph,
    emb: &EmbeddingMatrix,
    params: &SpectralParams,
) -> Result<(EmbeddingMatrix, StageReport)> {
    let n = graph.node_count();
    if emb.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: emb.n() });
    }
    if params.theta.is_nan() || params.theta <= 0.0 {
        return Err(Error::InvalidArgument("theta must be > 0".into()));
    }
    let d = emb.dim();
    let und = graph.undirected();
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / libm::sqrt(und.degree(i) as f64 + 1.0)).collect();
    let coeffs = chebyshev_coefficients(params.order, params.mu, params.theta);

    let r: Vec<f64> = emb.data().iter().map(|&x| x as f64).collect();
    let mut out: Vec<f64> = r.iter().map(|&x| coeffs[0] * x).collect();
    let mut buffers = 2;
    if params.order >= 1 {
        let mut prev = r.clone();
        let mut cur = vec![0.0; n * d];
        shifted_laplacian_apply(&und, &inv_sqrt_deg, d, &prev, &mut cur);
        axpy(coeffs[1], &cur, &mut out);
        let mut next = vec![0.0; n * d];
        buffers = 5;
        for &ck in &coeffs[2..] {
            shifted_laplacian_apply(&und, &inv_sqrt_deg, d, &cur, &mut next);
            for (nx, &pv) in next.iter_mut().zip(&prev) {
                *nx = 2.0 * *nx - pv;
            }
            axpy(ck, &next, &mut out);
            core::mem::swap(&mut prev, &mut cur);
            core::mem::swap(&mut cur, &mut next);
        }
    }
    let missing: Vec<usize> = emb.missing_indices().collect();
    let mut data = vec![0f32; n * d];
    for i in 0..n {
        let row = &out[i * d..(i + 1) * d];
        let nrm = libm::sqrt(row.iter().map(|x| x * x).sum::<f64>());
        if nrm > 0.0 && nrm.is_finite() {
            for (dst, &x) in data[i * d..(i + 1) * d].iter_mut().zip(row) {
                *dst = (x / nrm) as f32;
            }
        }
    }
    let mut result = EmbeddingMatrix::from_rows(n, d, data, &missing, Method::Gb)?;
    result.source_digest = emb.source_digest;
    let bytes = (buffers * n * d * 8 + n * d * 4 + und.nbrs.len() * 4 + und.offsets.len() * 8 + n * 8) as u64;
    Ok((result, StageReport { peak_bytes: bytes }))
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// `factorize` followed by `propagate`.
pub fn embed_graph(graph: &CitationGraph, params: &SpectralParams) -> Result<(EmbeddingMatrix, EmbedReport)> {
    let (raw, f) = factorize(graph, params)?;
    let (emb, p) = propagate(graph, &raw, params)?;
    Ok((emb, EmbedReport { factorize: f, propagate: p }))
}
