//! Dense per-paper vectors with an explicit missing-set.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Cbf,
    Gb,
    Hybrid,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cbf => "cbf",
            Method::Gb => "gb",
            Method::Hybrid => "hybrid",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Method::Cbf => 0,
            Method::Gb => 1,
            Method::Hybrid => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Method::Cbf),
            1 => Some(Method::Gb),
            2 => Some(Method::Hybrid),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cbf" => Some(Method::Cbf),
            "gb" => Some(Method::Gb),
            "hybrid" => Some(Method::Hybrid),
            _ => None,
        }
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Norm below which a row counts as all-zero.
pub const ZERO_NORM: f64 = 1e-12;

/// n×d row-major matrix. Row `i` belongs to paper `i`.
///
/// Missing rows are stored as zeros and tracked in the missing-set; imputed
/// rows are real vectors that carry an imputed flag.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    missing: Vec<bool>,
    imputed: Vec<bool>,
    pub method: Method,
    /// Unix seconds; set by the caller, zero when unknown.
    pub built_at: u64,
    /// Digest of the graph or corpus this matrix was built from.
    pub source_digest: [u8; 32],
}

impl EmbeddingMatrix {
    /// Every row starts missing.
    pub fn empty(n: usize, d: usize, method: Method) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        Ok(EmbeddingMatrix {
            n,
            d,
            data: vec![0.0; n * d],
            missing: vec![true; n],
            imputed: vec![false; n],
            method,
            built_at: 0,
            source_digest: [0; 32],
        })
    }

    /// Rows with (near) zero norm are placed in the missing-set; `missing`
    /// lists additional rows to force missing (they are zeroed).
    pub fn from_rows(n: usize, d: usize, mut data: Vec<f32>, missing: &[usize], method: Method) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding rows"));
        }
        let mut miss = vec![false; n];
        for &m in missing {
            if m >= n {
                return Err(Error::OutOfRange { index: m, len: n });
            }
            miss[m] = true;
            data[m * d..(m + 1) * d].iter_mut().for_each(|x| *x = 0.0);
        }
        for (i, flag) in miss.iter_mut().enumerate() {
            if norm(&data[i * d..(i + 1) * d]) <= ZERO_NORM {
                *flag = true;
            }
        }
        Ok(EmbeddingMatrix {
            n,
            d,
            data,
            missing: miss,
            imputed: vec![false; n],
            method,
            built_at: 0,
            source_digest: [0; 32],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Raw row, zeros when missing.
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Row if present.
    pub fn vector(&self, i: usize) -> Option<&[f32]> {
        (i < self.n && !self.missing[i]).then(|| self.row(i))
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing[i]
    }

    pub fn is_imputed(&self, i: usize) -> bool {
        self.imputed[i]
    }

    pub fn missing_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.missing.iter().enumerate().filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn present_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.missing.iter().enumerate().filter_map(|(i, &m)| (!m).then_some(i))
    }

    pub fn imputed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.imputed.iter().enumerate().filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn present_count(&self) -> usize {
        self.n - self.missing_count()
    }

    /// Returns a copy with the given rows hidden (zeroed and missing).
    pub fn with_hidden(&self, rows: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in rows {
            out.data[i * self.d..(i + 1) * self.d].iter_mut().for_each(|x| *x = 0.0);
            out.missing[i] = true;
            out.imputed[i] = false;
        }
        out
    }

    /// Returns a copy with imputed vectors filled into currently missing rows.
    /// Present rows are never overwritten.
    pub fn with_imputed(&self, filled: &[(usize, Vec<f32>)]) -> Result<Self> {
        let mut out = self.clone();
        for (i, v) in filled {
            let i = *i;
            if i >= self.n {
                return Err(Error::OutOfRange { index: i, len: self.n });
            }
            if !self.missing[i] {
                return Err(Error::VectorPresent(i));
            }
            if v.len() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: v.len() });
            }
            if norm(v) <= ZERO_NORM {
                continue;
            }
            out.data[i * self.d..(i + 1) * self.d].copy_from_slice(v);
            out.missing[i] = false;
            out.imputed[i] = true;
        }
        Ok(out)
    }

    /// Rows permuted so that new row `k` is old row `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &o in order {
            data.extend_from_slice(self.row(o));
        }
        EmbeddingMatrix {
            n: order.len(),
            d: self.d,
            data,
            missing: order.iter().map(|&o| self.missing[o]).collect(),
            imputed: order.iter().map(|&o| self.imputed[o]).collect(),
            method: self.method,
            built_at: self.built_at,
            source_digest: self.source_digest,
        }
    }

    /// Digest of shape, method, row data and missing-set. Timestamps excluded.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(b"EMB1");
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u32).to_le_bytes());
        h.update([self.method.tag()]);
        for x in &self.data {
            h.update(x.to_le_bytes());
        }
        for i in self.missing_indices() {
            h.update((i as u64).to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn cosine_rows(&self, a: usize, b: usize) -> Option<f32> {
        Some(cosine(self.vector(a)?, self.vector(b)?))
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity, accumulated in f64. Zero vectors give 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let (na, nb) = (norm(a), norm(b));
    if na <= ZERO_NORM || nb <= ZERO_NORM {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0) as f32
}

/// Unit-norm copy, or `None` for a zero vector.
pub fn normalized(a: &[f32]) -> Option<Vec<f32>> {
    let n = norm(a);
    (n > ZERO_NORM).then(|| a.iter().map(|&x| (x as f64 / n) as f32).collect())
}

/// Normalized mean of the given vectors, or `None` if they cancel or are absent.
pub fn normalized_mean<'a>(d: usize, vectors: impl IntoIterator<Item = &'a [f32]>) -> Option<Vec<f32>> {
    let mut acc = vec![0f64; d];
    let mut count = 0usize;
    for v in vectors {
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x as f64;
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let n = libm::sqrt(acc.iter().map(|x| x * x).sum::<f64>());
    (n > ZERO_NORM).then(|| acc.iter().map(|&x| (x / n) as f32).collect())
}
