//! Immutable CSR citation graph: hop queries, bin partitioning, induced subgraphs.

use alloc::vec;
use alloc::vec::Vec;

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};

/// Directed citation graph. An edge `u -> v` means paper `u` cites paper `v`.
///
/// Both directions are stored as CSR with sorted, duplicate-free neighbor
/// lists and no self-loops; `in_adj` is the exact transpose of `out_adj`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationGraph {
    n: usize,
    out_offsets: Vec<u64>,
    out_nbrs: Vec<u32>,
    in_offsets: Vec<u64>,
    in_nbrs: Vec<u32>,
}

impl CitationGraph {
    /// Builds from an arbitrary edge list. Self-loops and repeats are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        if n >= (1usize << 31) {
            return Err(Error::InvalidArgument(alloc::format!("graph too large: {n} nodes")));
        }
        let mut list: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            for x in [u, v] {
                if x as usize >= n {
                    return Err(Error::OutOfRange { index: x as usize, len: n });
                }
            }
            if u != v {
                list.push((u, v));
            }
        }
        list.sort_unstable();
        list.dedup();
        let (out_offsets, out_nbrs) = csr_from_sorted(n, list.iter().copied());
        list.sort_unstable_by_key(|&(u, v)| (v, u));
        let (in_offsets, in_nbrs) = csr_from_sorted(n, list.iter().map(|&(u, v)| (v, u)));
        Ok(CitationGraph {
            n,
            out_offsets,
            out_nbrs,
            in_offsets,
            in_nbrs,
        })
    }

    /// Reassembles a graph from stored CSR arrays, checking every invariant.
    pub fn from_raw_parts(
        n: usize,
        out_offsets: Vec<u64>,
        out_nbrs: Vec<u32>,
        in_offsets: Vec<u64>,
        in_nbrs: Vec<u32>,
    ) -> Result<Self> {
        let g = CitationGraph {
            n,
            out_offsets,
            out_nbrs,
            in_offsets,
            in_nbrs,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(alloc::format!("corrupt graph: {m}")));
        for (offs, nbrs) in [(&self.out_offsets, &self.out_nbrs), (&self.in_offsets, &self.in_nbrs)] {
            if offs.len() != self.n + 1 || offs[0] != 0 || *offs.last().unwrap() as usize != nbrs.len() {
                return bad("offset table");
            }
            for u in 0..self.n {
                if offs[u] > offs[u + 1] {
                    return bad("offsets not monotone");
                }
                let s = &nbrs[offs[u] as usize..offs[u + 1] as usize];
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("neighbor list not strictly sorted");
                }
                if s.iter().any(|&v| v as usize >= self.n || v as usize == u) {
                    return bad("neighbor out of range or self-loop");
                }
            }
        }
        if self.out_nbrs.len() != self.in_nbrs.len() {
            return bad("in/out edge counts differ");
        }
        for u in 0..self.n {
            for &v in self.out_neighbors(u) {
                if self.in_neighbors(v as usize).binary_search(&(u as u32)).is_err() {
                    return bad("in_adj is not the transpose of out_adj");
                }
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out_nbrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn out_neighbors(&self, u: usize) -> &[u32] {
        &self.out_nbrs[self.out_offsets[u] as usize..self.out_offsets[u + 1] as usize]
    }

    pub fn in_neighbors(&self, u: usize) -> &[u32] {
        &self.in_nbrs[self.in_offsets[u] as usize..self.in_offsets[u + 1] as usize]
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.out_neighbors(u).len()
    }

    pub fn in_degree(&self, u: usize) -> usize {
        self.in_neighbors(u).len()
    }

    pub fn total_degree(&self, u: usize) -> usize {
        self.out_degree(u) + self.in_degree(u)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out_neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Sorted union of in- and out-neighbors.
    pub fn undirected_neighbors(&self, u: usize) -> MergedNeighbors<'_> {
        MergedNeighbors {
            a: self.out_neighbors(u),
            b: self.in_neighbors(u),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n).flat_map(move |u| self.out_neighbors(u).iter().map(move |&v| (u as u32, v)))
    }

    pub fn out_offsets(&self) -> &[u64] {
        &self.out_offsets
    }
    pub fn out_targets(&self) -> &[u32] {
        &self.out_nbrs
    }
    pub fn in_offsets(&self) -> &[u64] {
        &self.in_offsets
    }
    pub fn in_sources(&self) -> &[u32] {
        &self.in_nbrs
    }

    /// The symmetrized (A + Aᵀ, binary) adjacency as a single CSR.
    pub fn undirected(&self) -> UndirectedCsr {
        let mut offsets = Vec::with_capacity(self.n + 1);
        let mut nbrs = Vec::with_capacity(self.out_nbrs.len() * 2);
        offsets.push(0u64);
        for u in 0..self.n {
            nbrs.extend(self.undirected_neighbors(u));
            offsets.push(nbrs.len() as u64);
        }
        UndirectedCsr { offsets, nbrs }
    }

    /// Stable digest of the adjacency structure.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(b"CSR1");
        h.update((self.n as u64).to_le_bytes());
        for &o in &self.out_offsets {
            h.update(o.to_le_bytes());
        }
        for &v in &self.out_nbrs {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

fn csr_from_sorted(n: usize, edges: impl Iterator<Item = (u32, u32)>) -> (Vec<u64>, Vec<u32>) {
    let mut offsets = vec![0u64; n + 1];
    let mut nbrs = Vec::new();
    for (u, v) in edges {
        offsets[u as usize + 1] += 1;
        nbrs.push(v);
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    (offsets, nbrs)
}

/// Merge of two sorted slices without duplicates.
pub struct MergedNeighbors<'a> {
    a: &'a [u32],
    b: &'a [u32],
}

impl Iterator for MergedNeighbors<'_> {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        match (self.a.first(), self.b.first()) {
            (None, None) => None,
            (Some(&x), None) => {
                self.a = &self.a[1..];
                Some(x)
            }
            (None, Some(&y)) => {
                self.b = &self.b[1..];
                Some(y)
            }
            (Some(&x), Some(&y)) => {
                if x <= y {
                    self.a = &self.a[1..];
                }
                if y <= x {
                    self.b = &self.b[1..];
                }
                Some(x.min(y))
            }
        }
    }
}

/// Symmetric adjacency without weights.
#[derive(Debug, Clone)]
pub struct UndirectedCsr {
    pub offsets: Vec<u64>,
    pub nbrs: Vec<u32>,
}

impl UndirectedCsr {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.nbrs[self.offsets[u] as usize..self.offsets[u + 1] as usize]
    }

    pub fn degree(&self, u: usize) -> usize {
        (self.offsets[u + 1] - self.offsets[u]) as usize
    }
}

/// One directed edge per resolvable reference.
pub fn build_graph(store: &CorpusStore) -> CitationGraph {
    let mut edges = Vec::new();
    for (u, rec) in store.records().iter().enumerate() {
        for r in &rec.references {
            if let Some(v) = store.resolve(r) {
                edges.push((u as u32, v as u32));
            }
        }
    }
    CitationGraph::from_edges(store.len(), edges).expect("store indices are in range")
}

/// Reusable breadth-first search over the undirected view.
pub struct HopSearch {
    stamp: Vec<u32>,
    dist: Vec<u8>,
    epoch: u32,
    queue: Vec<u32>,
}

impl HopSearch {
    pub fn new(n: usize) -> Self {
        HopSearch {
            stamp: vec![0; n],
            dist: vec![0; n],
            epoch: 0,
            queue: Vec::new(),
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    /// Nodes grouped by hop distance from `source`, up to `max_hops`.
    /// `levels[0] == [source]`.
    pub fn levels(&mut self, graph: &CitationGraph, source: usize, max_hops: usize) -> Vec<Vec<u32>> {
        assert!(max_hops < u8::MAX as usize);
        self.next_epoch();
        let mut levels = vec![vec![source as u32]];
        self.stamp[source] = self.epoch;
        for hop in 1..=max_hops {
            let mut next = Vec::new();
            for &u in &levels[hop - 1] {
                for v in graph.undirected_neighbors(u as usize) {
                    if self.stamp[v as usize] != self.epoch {
                        self.stamp[v as usize] = self.epoch;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    }

    pub fn distance(
        &mut self,
        graph: &CitationGraph,
        a: usize,
        b: usize,
        max_hops: usize,
    ) -> Option<usize> {
        if a == b {
            return Some(0);
        }
        self.next_epoch();
        self.queue.clear();
        self.queue.push(a as u32);
        self.stamp[a] = self.epoch;
        self.dist[a] = 0;
        let mut head = 0;
        while head < self.queue.len() {
            let u = self.queue[head] as usize;
            head += 1;
            let du = self.dist[u] as usize;
            if du == max_hops {
                continue;
            }
            for v in graph.undirected_neighbors(u) {
                let v = v as usize;
                if self.stamp[v] == self.epoch {
                    continue;
                }
                if v == b {
                    return Some(du + 1);
                }
                self.stamp[v] = self.epoch;
                self.dist[v] = (du + 1) as u8;
                self.queue.push(v as u32);
            }
        }
        None
    }
}

/// Shortest-path length between `a` and `b` in the undirected view, or
/// `None` when farther than `max_hops` or disconnected.
pub fn hop_distance(graph: &CitationGraph, a: usize, b: usize, max_hops: usize) -> Result<Option<usize>> {
    let n = graph.node_count();
    for x in [a, b] {
        if x >= n {
            return Err(Error::OutOfRange { index: x, len: n });
        }
    }
    if max_hops == 0 || max_hops >= u8::MAX as usize {
        return Err(Error::InvalidArgument(alloc::format!("max_hops must be in 1..255, got {max_hops}")));
    }
    Ok(HopSearch::new(n).distance(graph, a, b, max_hops))
}

/// Per-paper partition label in `0..n_bins`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinAssignment {
    n_bins: u32,
    labels: Vec<u32>,
}

impl BinAssignment {
    pub fn from_labels(n_bins: u32, labels: Vec<u32>) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_bins) {
            return Err(Error::OutOfRange { index: bad as usize, len: n_bins as usize });
        }
        Ok(BinAssignment { n_bins, labels })
    }

    pub fn n_bins(&self) -> u32 {
        self.n_bins
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, paper: usize) -> u32 {
        self.labels[paper]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_bins as usize];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    /// Membership mask for papers whose bin is in `keep`.
    pub fn mask(&self, keep: &[u32]) -> Vec<bool> {
        let mut want = vec![false; self.n_bins as usize];
        for &k in keep {
            if let Some(w) = want.get_mut(k as usize) {
                *w = true;
            }
        }
        self.labels.iter().map(|&l| want[l as usize]).collect()
    }
}

/// Seeded hash partition: `xxh3(external_id, seed) mod n_bins`.
pub fn assign_bins(store: &CorpusStore, n_bins: u32, seed: u64) -> Result<BinAssignment> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    let labels = store
        .records()
        .iter()
        .map(|r| (xxh3_64_with_seed(r.external_id.as_bytes(), seed) % n_bins as u64) as u32)
        .collect();
    Ok(BinAssignment { n_bins, labels })
}

/// Time-ordered partition: papers sorted by (year, index) and cut into
/// `n_bins` nearly equal slices. Papers without a year sort first.
pub fn year_bins(store: &CorpusStore, n_bins: u32) -> Result<BinAssignment> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    let n = store.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (store.records()[i].year.unwrap_or(i32::MIN), i));
    let mut labels = vec![0u32; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = ((rank as u64 * n_bins as u64) / n.max(1) as u64) as u32;
    }
    Ok(BinAssignment { n_bins, labels })
}

/// Old ↔ new node indices for an induced subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMapping {
    pub new_to_old: Vec<u32>,
    old_to_new: Vec<u32>,
}

impl NodeMapping {
    const ABSENT: u32 = u32::MAX;

    pub fn to_new(&self, old: usize) -> Option<usize> {
        match self.old_to_new.get(old) {
            Some(&x) if x != Self::ABSENT => Some(x as usize),
            _ => None,
        }
    }

    pub fn to_old(&self, new: usize) -> usize {
        self.new_to_old[new] as usize
    }

    pub fn len(&self) -> usize {
        self.new_to_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_to_old.is_empty()
    }
}

/// Subgraph on the nodes whose `mask` entry is set, re-indexed densely in
/// ascending old-index order.
pub fn induced_by_mask(graph: &CitationGraph, mask: &[bool]) -> (CitationGraph, NodeMapping) {
    assert_eq!(mask.len(), graph.node_count());
    let mut old_to_new = vec![NodeMapping::ABSENT; graph.node_count()];
    let mut new_to_old = Vec::new();
    for (old, &keep) in mask.iter().enumerate() {
        if keep {
            old_to_new[old] = new_to_old.len() as u32;
            new_to_old.push(old as u32);
        }
    }
    let edges = graph.edges().filter_map(|(u, v)| {
        let (a, b) = (old_to_new[u as usize], old_to_new[v as usize]);
        (a != NodeMapping::ABSENT && b != NodeMapping::ABSENT).then_some((a, b))
    });
    let sub = CitationGraph::from_edges(new_to_old.len(), edges).expect("mapped indices in range");
    (sub, NodeMapping { new_to_old, old_to_new })
}

pub fn induced_subgraph(
    graph: &CitationGraph,
    bins: &BinAssignment,
    keep: &[u32],
) -> Result<(CitationGraph, NodeMapping)> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set is empty".into()));
    }
    if bins.labels.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: bins.labels.len(),
        });
    }
    Ok(induced_by_mask(graph, &bins.mask(keep)))
}
