//! Cosine nearest-neighbor retrieval: a hierarchical navigable small-world
//! graph over unit-normalized rows, plus an exact scan used as the oracle.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{dot, norm, normalized, EmbeddingMatrix, ZERO_NORM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnParams {
    /// Links per node on upper layers; layer 0 allows twice this.
    pub max_degree: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams { max_degree: 32, ef_construction: 200, seed: 0 }
    }
}

/// A retrieved paper and its cosine to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub cosine: f32,
}

/// Descending cosine, then ascending index.
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.cosine.total_cmp(&a.cosine).then(a.index.cmp(&b.index))
}

#[derive(Debug, Clone, Copy)]
struct Dist(f32);

impl PartialEq for Dist {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

const MAX_LEVEL: usize = 16;
const ABSENT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct AnnIndex {
    dim: usize,
    params: AnnParams,
    source_digest: [u8; 32],
    ids: Vec<u32>,
    position: Vec<u32>,
    vectors: Vec<f32>,
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    max_level: usize,
}

/// Graph structure of an index without its vectors; the vectors come back
/// from the source embedding, checked by digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnParts {
    pub dim: usize,
    pub params: AnnParams,
    pub source_digest: [u8; 32],
    pub ids: Vec<u32>,
    pub links: Vec<Vec<Vec<u32>>>,
    pub entry: u32,
    pub max_level: usize,
}

fn query_vector(vector: &[f32], dim: usize, k: usize) -> Result<Vec<f32>> {
    if vector.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: vector.len() });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    normalized(vector).ok_or(Error::ZeroVector)
}

impl AnnIndex {
    /// Indexes every non-missing row of `emb`.
    pub fn build(emb: &EmbeddingMatrix, params: AnnParams) -> Result<Self> {
        if emb.present_count() == 0 {
            return Err(Error::Empty("every embedding row is missing"));
        }
        if params.max_degree < 2 {
            return Err(Error::InvalidArgument("max_degree must be >= 2".into()));
        }
        let dim = emb.dim();
        let ids: Vec<u32> = emb.present_indices().map(|i| i as u32).collect();
        let mut position = vec![ABSENT; emb.n()];
        let mut vectors = Vec::with_capacity(ids.len() * dim);
        for (p, &i) in ids.iter().enumerate() {
            position[i as usize] = p as u32;
            vectors.extend(normalized(emb.row(i as usize)).expect("present rows are non-zero"));
        }
        let mut index = AnnIndex {
            dim,
            params,
            source_digest: emb.digest(),
            ids,
            position,
            vectors,
            links: Vec::new(),
            entry: 0,
            max_level: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / libm::log(params.max_degree as f64);
        let mut visited = Visited::new(index.ids.len());
        for p in 0..index.ids.len() {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let level = ((-libm::log(u) * ml) as usize).min(MAX_LEVEL);
            index.insert(p as u32, level, &mut visited);
        }
        Ok(index)
    }

    fn cap(&self, level: usize) -> usize {
        if level == 0 {
            self.params.max_degree * 2
        } else {
            self.params.max_degree
        }
    }

    fn vec(&self, p: u32) -> &[f32] {
        &self.vectors[p as usize * self.dim..(p as usize + 1) * self.dim]
    }

    fn dist(&self, q: &[f32], p: u32) -> f32 {
        let v = self.vec(p);
        // Eight independent lanes so the loop vectorizes.
        let mut acc = [0f32; 8];
        let (qc, qr) = q.split_at(q.len() / 8 * 8);
        let (vc, vr) = v.split_at(qc.len());
        for (a, b) in qc.chunks_exact(8).zip(vc.chunks_exact(8)) {
            for k in 0..8 {
                acc[k] += a[k] * b[k];
            }
        }
        let mut s: f32 = acc.iter().sum();
        for (a, b) in qr.iter().zip(vr) {
            s += a * b;
        }
        1.0 - s
    }

    fn insert(&mut self, p: u32, level: usize, visited: &mut Visited) {
        self.links.push(vec![Vec::new(); level + 1]);
        if p == 0 {
            self.entry = 0;
            self.max_level = level;
            return;
        }
        let q: Vec<f32> = self.vec(p).to_vec();
        let mut ep = vec![(Dist(self.dist(&q, self.entry)), self.entry)];
        for lc in (level + 1..=self.max_level).rev() {
            ep = self.search_layer(&q, &ep, 1, lc, visited);
        }
        for lc in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&q, &ep, self.params.ef_construction, lc, visited);
            let chosen = self.select(&found, self.params.max_degree);
            for &(_, e) in &chosen {
                let cap = self.cap(lc);
                let list = &mut self.links[e as usize][lc];
                list.push(p);
                if list.len() > cap {
                    self.shrink(e, lc, cap);
                }
            }
            self.links[p as usize][lc] = chosen.iter().map(|&(_, e)| e).collect();
            ep = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = p;
        }
    }

    fn shrink(&mut self, e: u32, lc: usize, cap: usize) {
        let base: Vec<f32> = self.vec(e).to_vec();
        let mut cands: Vec<(Dist, u32)> = self.links[e as usize][lc]
            .iter()
            .map(|&x| (Dist(self.dist(&base, x)), x))
            .collect();
        cands.sort_unstable();
        let kept = self.select(&cands, cap);
        self.links[e as usize][lc] = kept.into_iter().map(|(_, x)| x).collect();
    }

    /// Neighbor-diversity heuristic over candidates sorted by distance to the
    /// base point, topped up with the closest pruned candidates.
    fn select(&self, cands: &[(Dist, u32)], m: usize) -> Vec<(Dist, u32)> {
        let mut kept: Vec<(Dist, u32)> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &(d, c) in cands {
            if kept.len() >= m {
                break;
            }
            let cv = self.vec(c);
            if kept.iter().all(|&(_, r)| self.dist(cv, r) > d.0) {
                kept.push((d, c));
            } else {
                pruned.push((d, c));
            }
        }
        for x in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(x);
        }
        kept
    }

    /// Best-first search on one layer; returns up to `ef` nodes sorted by
    /// ascending distance.
    fn search_layer(&self, q: &[f32], entry: &[(Dist, u32)], ef: usize, lc: usize, visited: &mut Visited) -> Vec<(Dist, u32)> {
        visited.clear();
        let mut cands: BinaryHeap<Reverse<(Dist, u32)>> = BinaryHeap::new();
        let mut best: BinaryHeap<(Dist, u32)> = BinaryHeap::new();
        for &(d, p) in entry {
            if visited.insert(p) {
                cands.push(Reverse((d, p)));
                best.push((d, p));
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse((d, p))) = cands.pop() {
            if best.len() >= ef && d > best.peek().unwrap().0 {
                break;
            }
            for &x in &self.links[p as usize][lc] {
                if !visited.insert(x) {
                    continue;
                }
                let dx = Dist(self.dist(q, x));
                if best.len() < ef || dx < best.peek().unwrap().0 {
                    cands.push(Reverse((dx, x)));
                    best.push((dx, x));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out = best.into_vec();
        out.sort_unstable();
        out
    }

    /// Up to `k` nearest indexed rows by cosine.
    pub fn query(&self, vector: &[f32], k: usize, ef_search: usize) -> Result<Vec<Neighbor>> {
        let q = query_vector(vector, self.dim, k)?;
        let mut visited = Visited::new(self.ids.len());
        let mut ep = vec![(Dist(self.dist(&q, self.entry)), self.entry)];
        for lc in (1..=self.max_level).rev() {
            ep = self.search_layer(&q, &ep, 1, lc, &mut visited);
        }
        let found = self.search_layer(&q, &ep, ef_search.max(k), 0, &mut visited);
        let mut out: Vec<Neighbor> = found
            .into_iter()
            .map(|(_, p)| Neighbor {
                index: self.ids[p as usize] as usize,
                cosine: dot(&q, self.vec(p)).clamp(-1.0, 1.0) as f32,
            })
            .collect();
        out.sort_by(neighbor_order);
        out.truncate(k);
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    pub fn source_digest(&self) -> [u8; 32] {
        self.source_digest
    }

    pub fn contains(&self, index: usize) -> bool {
        self.position.get(index).is_some_and(|&p| p != ABSENT)
    }

    /// The stored (unit-norm) vector for a corpus index.
    pub fn vector(&self, index: usize) -> Option<&[f32]> {
        match self.position.get(index) {
            Some(&p) if p != ABSENT => Some(self.vec(p)),
            _ => None,
        }
    }

    /// Corpus indices in insertion order.
    pub fn indexed(&self) -> impl Iterator<Item = usize> + '_ {
        self.ids.iter().map(|&i| i as usize)
    }

    pub fn to_parts(&self) -> AnnParts {
        AnnParts {
            dim: self.dim,
            params: self.params,
            source_digest: self.source_digest,
            ids: self.ids.clone(),
            links: self.links.clone(),
            entry: self.entry,
            max_level: self.max_level,
        }
    }

    /// Reattaches a stored graph to its embedding. Fails on digest mismatch
    /// or structural inconsistency.
    pub fn from_parts(parts: AnnParts, emb: &EmbeddingMatrix) -> Result<Self> {
        if parts.source_digest != emb.digest() {
            return Err(Error::DigestMismatch);
        }
        let present: Vec<u32> = emb.present_indices().map(|i| i as u32).collect();
        if parts.dim != emb.dim() || parts.ids != present || parts.links.len() != present.len() {
            return Err(Error::InvalidArgument("index does not match embedding layout".into()));
        }
        let n = present.len() as u32;
        let structure_ok = parts.entry < n.max(1)
            && parts.links.iter().all(|levels| {
                !levels.is_empty() && levels.len() <= parts.max_level + 1 && levels.iter().flatten().all(|&x| x < n)
            });
        if !structure_ok {
            return Err(Error::InvalidArgument("corrupt index links".into()));
        }
        let mut position = vec![ABSENT; emb.n()];
        let mut vectors = Vec::with_capacity(present.len() * emb.dim());
        for (p, &i) in present.iter().enumerate() {
            position[i as usize] = p as u32;
            vectors.extend(normalized(emb.row(i as usize)).expect("present rows are non-zero"));
        }
        Ok(AnnIndex {
            dim: parts.dim,
            params: parts.params,
            source_digest: parts.source_digest,
            ids: parts.ids,
            position,
            vectors,
            links: parts.links,
            entry: parts.entry,
            max_level: parts.max_level,
        })
    }
}

struct Visited {
    stamp: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited { stamp: vec![0; n], epoch: 0 }
    }

    fn clear(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    fn insert(&mut self, p: u32) -> bool {
        let s = &mut self.stamp[p as usize];
        if *s == self.epoch {
            false
        } else {
            *s = self.epoch;
            true
        }
    }
}

/// Exact top-`k` scan over the non-missing rows.
pub fn brute_force_knn(emb: &EmbeddingMatrix, vector: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    let q = query_vector(vector, emb.dim(), k)?;
    let mut all: Vec<Neighbor> = emb
        .present_indices()
        .filter_map(|i| {
            let row = emb.row(i);
            let n = norm(row);
            (n > ZERO_NORM).then(|| Neighbor {
                index: i,
                cosine: (dot(&q, row) / n).clamp(-1.0, 1.0) as f32,
            })
        })
        .collect();
    all.sort_by(neighbor_order);
    all.truncate(k);
    Ok(all)
}

/// Mean over queries of `|approx ∩ exact| / |exact|` for top-`k`.
pub fn recall_at_k<Q: AsRef<[f32]> + Sync>(
    index: &AnnIndex,
    emb: &EmbeddingMatrix,
    queries: &[Q],
    k: usize,
    ef_search: usize,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("recall sample"));
    }
    let per_query: Vec<Result<f64>> = crate::linalg::map_range(queries.len(), |i| {
        let q = queries[i].as_ref();
        let exact = brute_force_knn(emb, q, k)?;
        let approx = index.query(q, k, ef_search)?;
        let hits = approx.iter().filter(|a| exact.iter().any(|e| e.index == a.index)).count();
        Ok(hits as f64 / exact.len().max(1) as f64)
    });
    let mut total = 0.0;
    for r in per_query {
        total += r?;
    }
    Ok(total / queries.len() as f64)
}
