//! Corner cases: the top-1 cosine spike, near-duplicate detection,
//! content/graph discrepancy flags, and filling missing vectors.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::ann::AnnIndex;
use crate::embedding::{dot, norm, normalized_mean, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::graph::CitationGraph;

/// Cosine at or above which a top-1 neighbor counts toward the spike.
pub const SPIKE_COSINE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct CosineHistogram {
    /// Equal-width bins over [-1, 1]; the last bin is closed.
    pub counts: Vec<usize>,
    /// `(query, nearest other row, cosine)` per sampled query.
    pub top1: Vec<(usize, usize, f64)>,
    pub high_fraction: f64,
}

impl CosineHistogram {
    pub fn bin_of(cosine: f64, bins: usize) -> usize {
        let x = ((cosine.clamp(-1.0, 1.0) + 1.0) / 2.0 * bins as f64) as usize;
        x.min(bins - 1)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Lower edge of bin `b`.
    pub fn edge(&self, b: usize) -> f64 {
        -1.0 + 2.0 * b as f64 / self.counts.len() as f64
    }
}

/// Cosine between two stored rows; bitwise-identical rows give exactly 1.
fn pair_cosine(a: &[f32], b: &[f32]) -> f64 {
    if a == b {
        return 1.0;
    }
    let d = norm(a) * norm(b);
    if d == 0.0 {
        return 0.0;
    }
    (dot(a, b) / d).clamp(-1.0, 1.0)
}

/// Nearest indexed row other than `q`, by cosine.
fn top1_other(index: &AnnIndex, q: usize, ef_search: usize) -> Result<Option<(usize, f64)>> {
    let v = index.vector(q).ok_or(Error::OutOfRange { index: q, len: index.len() })?;
    let found = index.query(v, 2, ef_search.max(2))?;
    Ok(found
        .into_iter()
        .find(|n| n.index != q)
        .map(|n| (n.index, pair_cosine(v, index.vector(n.index).unwrap_or(&[])))))
}

/// Histogram of each sampled row's cosine to its nearest other row.
pub fn top1_cosine_histogram(index: &AnnIndex, sample: &[usize], bins: usize, ef_search: usize) -> Result<CosineHistogram> {
    if sample.is_empty() {
        return Err(Error::Empty("histogram sample"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    if index.len() < 2 {
        return Err(Error::InvalidArgument("index needs at least two rows".into()));
    }
    let found: Vec<Result<Option<(usize, f64)>>> =
        crate::linalg::map_range(sample.len(), |i| top1_other(index, sample[i], ef_search));
    let mut counts = vec![0usize; bins];
    let mut top1 = Vec::with_capacity(sample.len());
    for (q, f) in sample.iter().zip(found) {
        let (j, c) = f?.ok_or(Error::Empty("no neighbor besides the query"))?;
        counts[CosineHistogram::bin_of(c, bins)] += 1;
        top1.push((*q, j, c));
    }
    let high = top1.iter().filter(|t| t.2 >= SPIKE_COSINE).count();
    Ok(CosineHistogram { counts, high_fraction: high as f64 / sample.len() as f64, top1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlagReason {
    Duplicate,
    Discrepancy,
    Unevaluable,
}

impl FlagReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagReason::Duplicate => "duplicate",
            FlagReason::Discrepancy => "discrepancy",
            FlagReason::Unevaluable => "unevaluable",
        }
    }
}

/// A flagged pair, `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFlag {
    pub a: usize,
    pub b: usize,
    pub content_cosine: f64,
    pub graph_cosine: Option<f64>,
    pub reason: FlagReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuplicateParams {
    pub threshold: f64,
    /// Neighbors examined per row.
    pub probe: usize,
    pub ef_search: usize,
}

impl Default for DuplicateParams {
    fn default() -> Self {
        DuplicateParams { threshold: 0.99, probe: 10, ef_search: 100 }
    }
}

/// Pairs of indexed rows with content cosine ≥ threshold, each found by
/// probing every row's nearest neighbors. Graph cosine is attached when both
/// rows have graph vectors.
pub fn detect_duplicates(index: &AnnIndex, gb: Option<&EmbeddingMatrix>, params: DuplicateParams) -> Result<Vec<PairFlag>> {
    if !(params.threshold > 0.0 && params.threshold <= 1.0) {
        return Err(Error::InvalidArgument("threshold must be in (0, 1]".into()));
    }
    let rows: Vec<usize> = index.indexed().collect();
    let per_row: Vec<Result<Vec<(usize, usize, f64)>>> = crate::linalg::map_range(rows.len(), |r| {
        let i = rows[r];
        let v = index.vector(i).unwrap_or(&[]);
        let found = index.query(v, params.probe + 1, params.ef_search.max(params.probe + 1))?;
        Ok(found
            .into_iter()
            .filter(|n| n.index != i)
            .filter_map(|n| {
                let (a, b) = (i.min(n.index), i.max(n.index));
                let c = pair_cosine(index.vector(a).unwrap_or(&[]), index.vector(b).unwrap_or(&[]));
                (c >= params.threshold).then_some((a, b, c))
            })
            .collect())
    });
    let mut pairs = BTreeSet::new();
    let mut out = Vec::new();
    for found in per_row {
        for (a, b, c) in found? {
            if pairs.insert((a, b)) {
                out.push(PairFlag {
                    a,
                    b,
                    content_cosine: c,
                    graph_cosine: gb.and_then(|g| g.cosine_rows(a, b)).map(f64::from),
                    reason: FlagReason::Duplicate,
                });
            }
        }
    }
    out.sort_by_key(|x| (x.a, x.b));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyParams {
    pub tau_hi: f64,
    pub tau_lo: f64,
}

impl Default for DiscrepancyParams {
    fn default() -> Self {
        DiscrepancyParams { tau_hi: 0.95, tau_lo: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscrepancyReport {
    /// Discrepancy flags followed by unevaluable records, each group sorted.
    pub flags: Vec<PairFlag>,
    pub evaluated: usize,
    pub unevaluable: usize,
}

/// Flags sampled pairs whose content cosine is ≥ `tau_hi` while their graph
/// cosine is ≤ `tau_lo`. Pairs missing a vector on either side are tallied
/// as unevaluable.
pub fn discrepancy_flags(
    cbf: &EmbeddingMatrix,
    gb: &EmbeddingMatrix,
    params: DiscrepancyParams,
    sample: &[(usize, usize)],
) -> Result<DiscrepancyReport> {
    if cbf.n() != gb.n() {
        return Err(Error::DimensionMismatch { expected: cbf.n(), got: gb.n() });
    }
    let mut rep = DiscrepancyReport::default();
    let mut unevaluable = Vec::new();
    let mut seen = BTreeSet::new();
    for &(x, y) in sample {
        let (a, b) = (x.min(y), x.max(y));
        if a == b || !seen.insert((a, b)) {
            continue;
        }
        if b >= cbf.n() {
            return Err(Error::OutOfRange { index: b, len: cbf.n() });
        }
        let cc = cbf.vector(a).zip(cbf.vector(b)).map(|(u, v)| pair_cosine(u, v));
        let gc = gb.vector(a).zip(gb.vector(b)).map(|(u, v)| pair_cosine(u, v));
        match (cc, gc) {
            (Some(c), Some(g)) => {
                rep.evaluated += 1;
                if c >= params.tau_hi && g <= params.tau_lo {
                    rep.flags.push(PairFlag { a, b, content_cosine: c, graph_cosine: Some(g), reason: FlagReason::Discrepancy });
                }
            }
            (c, g) => {
                rep.unevaluable += 1;
                unevaluable.push(PairFlag {
                    a,
                    b,
                    content_cosine: c.unwrap_or(f64::NAN),
                    graph_cosine: g,
                    reason: FlagReason::Unevaluable,
                });
            }
        }
    }
    rep.flags.sort_by_key(|x| (x.a, x.b));
    rep.flags.extend(unevaluable);
    Ok(rep)
}

/// Normalized mean of the vectors of the papers `paper` cites.
pub fn impute_centroid(paper: usize, graph: &CitationGraph, emb: &EmbeddingMatrix) -> Result<Vec<f32>> {
    if paper >= emb.n() || paper >= graph.node_count() {
        return Err(Error::OutOfRange { index: paper, len: emb.n().min(graph.node_count()) });
    }
    if !emb.is_missing(paper) {
        return Err(Error::VectorPresent(paper));
    }
    let refs = graph.out_neighbors(paper).iter().filter_map(|&r| emb.vector(r as usize));
    normalized_mean(emb.dim(), refs).ok_or(Error::Unimputable(paper))
}

/// Normalized mean of the target vectors of the paper's top-`m` neighbors
/// in the donor embedding.
pub fn impute_better_together(
    paper: usize,
    donor: &EmbeddingMatrix,
    donor_index: &AnnIndex,
    target: &EmbeddingMatrix,
    m: usize,
    ef_search: usize,
) -> Result<Vec<f32>> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    if paper >= target.n() {
        return Err(Error::OutOfRange { index: paper, len: target.n() });
    }
    if !target.is_missing(paper) {
        return Err(Error::VectorPresent(paper));
    }
    let v = donor
        .vector(paper)
        .ok_or_else(|| Error::NoVector { query: paper, missing: vec![donor.method] })?;
    let found = donor_index.query(v, m + 1, ef_search.max(m + 1))?;
    let nbrs = found
        .into_iter()
        .filter(|n| n.index != paper)
        .take(m)
        .filter_map(|n| target.vector(n.index));
    normalized_mean(target.dim(), nbrs).ok_or(Error::Unimputable(paper))
}

/// Result of filling every fillable missing row. Imputations draw only on
/// real vectors, never on other imputed rows.
#[derive(Debug, Clone)]
pub struct ImputeOutcome {
    pub emb: EmbeddingMatrix,
    pub filled: Vec<usize>,
    pub unimputable: Vec<usize>,
}

fn fill_missing(emb: &EmbeddingMatrix, mut f: impl FnMut(usize) -> Result<Vec<f32>>) -> Result<ImputeOutcome> {
    let mut filled = Vec::new();
    let mut unimputable = Vec::new();
    let mut rows = Vec::new();
    for i in emb.missing_indices() {
        match f(i) {
            Ok(v) => {
                filled.push(i);
                rows.push((i, v));
            }
            Err(Error::Unimputable(_)) | Err(Error::NoVector { .. }) => unimputable.push(i),
            Err(e) => return Err(e),
        }
    }
    Ok(ImputeOutcome { emb: emb.with_imputed(&rows)?, filled, unimputable })
}

pub fn impute_all_centroid(graph: &CitationGraph, emb: &EmbeddingMatrix) -> Result<ImputeOutcome> {
    fill_missing(emb, |i| impute_centroid(i, graph, emb))
}

pub fn impute_all_better_together(
    donor: &EmbeddingMatrix,
    donor_index: &AnnIndex,
    target: &EmbeddingMatrix,
    m: usize,
    ef_search: usize,
) -> Result<ImputeOutcome> {
    fill_missing(target, |i| impute_better_together(i, donor, donor_index, target, m, ef_search))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::AnnParams;
    use crate::cbfembed::{embed_corpus, HashEmbedderConfig};
    use crate::embedding::Method;
    use crate::gbembed::{embed_graph, SpectralParams};
    use crate::graph::build_graph;
    use crate::synth::{random_unit_vectors, tiny5};
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn mat(n: usize, d: usize, data: Vec<f32>, missing: &[usize]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(n, d, data, missing, Method::Cbf).unwrap()
    }

    #[test]
    fn orthogonal_rows_fill_the_zero_bin() {
        let d = 8;
        let mut data = vec![0f32; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        let e = mat(d, d, data, &[]);
        let idx = AnnIndex::build(&e, AnnParams::default()).unwrap();
        let sample: Vec<usize> = (0..d).collect();
        let h = top1_cosine_histogram(&idx, &sample, 20, 50).unwrap();
        assert_eq!(h.counts[CosineHistogram::bin_of(0.0, 20)], d);
        assert_eq!(h.total(), d);
        assert_eq!(h.high_fraction, 0.0);
        assert!(top1_cosine_histogram(&idx, &[], 20, 50).is_err());
    }

    #[test]
    fn histogram_mass_equals_sample() {
        let e = mat(300, 16, random_unit_vectors(300, 16, 4), &[]);
        let idx = AnnIndex::build(&e, AnnParams::default()).unwrap();
        let sample: Vec<usize> = (0..300).step_by(3).collect();
        let h = top1_cosine_histogram(&idx, &sample, 40, 50).unwrap();
        assert_eq!(h.total(), sample.len());
        assert!(h.top1.iter().all(|&(q, j, _)| q != j));
    }

    fn tiny5_same_abstract() -> crate::corpus::CorpusStore {
        tiny5().map_records(|i, r| {
            if i == 3 {
                r.title = "beta".to_string();
                r.abstract_text = Some("graph embedding".to_string());
            }
        })
    }

    #[test]
    fn identical_abstracts_flagged() {
        let store = tiny5_same_abstract();
        let cbf = embed_corpus(&store, &HashEmbedderConfig::default()).unwrap();
        let idx = AnnIndex::build(&cbf, AnnParams::default()).unwrap();
        let flags = detect_duplicates(&idx, None, DuplicateParams::default()).unwrap();
        assert_eq!(flags.len(), 1);
        assert_eq!((flags[0].a, flags[0].b), (1, 3));
        assert_eq!(flags[0].content_cosine, 1.0);
        let strict = detect_duplicates(&idx, None, DuplicateParams { threshold: 1.0, ..Default::default() }).unwrap();
        assert_eq!(strict.len(), 1);
    }

    #[test]
    fn perturbed_copy_not_flagged_at_one() {
        let mut data = random_unit_vectors(20, 16, 2);
        let copy: Vec<f32> = data[..16].iter().enumerate().map(|(k, x)| x + if k == 0 { 1e-3 } else { 0.0 }).collect();
        data.extend(copy);
        let e = mat(21, 16, data, &[]);
        let idx = AnnIndex::build(&e, AnnParams::default()).unwrap();
        let at = |t| detect_duplicates(&idx, None, DuplicateParams { threshold: t, ..Default::default() }).unwrap();
        assert!(at(1.0).is_empty());
        assert_eq!(at(0.99).iter().map(|f| (f.a, f.b)).collect::<Vec<_>>(), vec![(0, 20)]);
        assert!(detect_duplicates(&idx, None, DuplicateParams { threshold: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn duplicate_set_invariant_under_row_reversal() {
        let n = 200;
        let mut data = random_unit_vectors(n, 16, 9);
        for (o, c) in [(3usize, 50usize), (70, 150), (10, 199)] {
            let row: Vec<f32> = data[o * 16..(o + 1) * 16].to_vec();
            data[c * 16..(c + 1) * 16].copy_from_slice(&row);
        }
        let e = mat(n, 16, data, &[]);
        let rev: Vec<usize> = (0..n).rev().collect();
        let er = e.permuted(&rev);
        let pairs = |m: &EmbeddingMatrix, map: &dyn Fn(usize) -> usize| {
            let idx = AnnIndex::build(m, AnnParams::default()).unwrap();
            let mut v: Vec<(usize, usize)> = detect_duplicates(&idx, None, DuplicateParams::default())
                .unwrap()
                .iter()
                .map(|f| (map(f.a).min(map(f.b)), map(f.a).max(map(f.b))))
                .collect();
            v.sort();
            v
        };
        let a = pairs(&e, &|i| i);
        let b = pairs(&er, &|i| rev[i]);
        assert_eq!(a, vec![(3, 50), (10, 199), (70, 150)]);
        assert_eq!(a, b);
    }

    #[test]
    fn discrepancy_rules() {
        let cbf = mat(4, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0], &[]);
        let gb = EmbeddingMatrix::from_rows(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0], &[3], Method::Gb).unwrap();
        let rep = discrepancy_flags(&cbf, &gb, DiscrepancyParams::default(), &[(0, 1), (2, 0), (0, 2), (0, 3), (3, 3)]).unwrap();
        assert_eq!(rep.evaluated, 2);
        assert_eq!(rep.unevaluable, 1);
        let reasons: Vec<(usize, usize, FlagReason)> = rep.flags.iter().map(|f| (f.a, f.b, f.reason)).collect();
        assert_eq!(reasons, vec![(0, 1, FlagReason::Discrepancy), (0, 3, FlagReason::Unevaluable)]);
    }

    #[test]
    fn identical_links_not_flagged() {
        // P1 and P3 share content; give P3 exactly P1's links so their graph
        // rows coincide.
        let store = tiny5_same_abstract().map_records(|i, r| {
            if i == 3 {
                r.references = vec!["P0".to_string()];
            }
            if i == 2 {
                r.references = vec!["P0".to_string(), "P1".to_string(), "P3".to_string()];
            }
        });
        let g = build_graph(&store);
        let (gb, _) = embed_graph(&g, &SpectralParams { dim: 3, seed: 2, ..Default::default() }).unwrap();
        let cbf = embed_corpus(&store, &HashEmbedderConfig::default()).unwrap();
        assert!(gb.cosine_rows(1, 3).unwrap() > 0.999);
        let rep = discrepancy_flags(&cbf, &gb, DiscrepancyParams::default(), &[(1, 3)]).unwrap();
        assert!(rep.flags.is_empty());
        assert_eq!(rep.evaluated, 1);
    }

    #[test]
    fn centroid_arithmetic() {
        let g = CitationGraph::from_edges(4, [(0, 1), (0, 2), (3, 1)]).unwrap();
        let e = mat(4, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[0, 3]);
        let v = impute_centroid(0, &g, &e).unwrap();
        assert!((v[0] - 0.70710677).abs() < 1e-6 && (v[1] - 0.70710677).abs() < 1e-6);
        assert_eq!(impute_centroid(3, &g, &e).unwrap(), vec![1.0, 0.0]);
        assert_eq!(impute_centroid(1, &g, &e), Err(Error::VectorPresent(1)));
        // Paper 1 is cited but cites nothing: citations do not count.
        let e2 = mat(4, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0], &[1]);
        assert_eq!(impute_centroid(1, &g, &e2), Err(Error::Unimputable(1)));
    }

    #[test]
    fn better_together_identical_targets() {
        let donor = mat(5, 2, vec![1.0, 0.0, 0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.0, 1.0], &[]);
        let didx = AnnIndex::build(&donor, AnnParams::default()).unwrap();
        let target = mat(5, 3, vec![0.0, 0.0, 0.0, 0.0, 0.6, 0.8, 0.0, 0.6, 0.8, 0.0, 0.6, 0.8, 1.0, 0.0, 0.0], &[0]);
        let v = impute_better_together(0, &donor, &didx, &target, 3, 20).unwrap();
        assert!((v[1] - 0.6).abs() < 1e-6 && (v[2] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn tiny5_p0_from_graph_neighbors() {
        let store = tiny5();
        let g = build_graph(&store);
        let (gb, _) = embed_graph(&g, &SpectralParams { dim: 3, seed: 1, ..Default::default() }).unwrap();
        let gidx = AnnIndex::build(&gb, AnnParams::default()).unwrap();
        let cbf = embed_corpus(&store, &HashEmbedderConfig::default()).unwrap();
        assert!(cbf.is_missing(0));
        let v = impute_better_together(0, &gb, &gidx, &cbf, 2, 20).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-6);
        let out = impute_all_better_together(&gb, &gidx, &cbf, 2, 20).unwrap();
        assert_eq!(out.filled, vec![0]);
        assert!(out.emb.is_imputed(0) && !out.emb.is_missing(0));
        assert_eq!(out.emb.missing_count(), 0);
    }

    proptest! {
        #[test]
        fn imputation_unit_norm_and_coverage_monotone(seed in 0u64..500, n in 5usize..40, hide in 0usize..20) {
            let (_, edges) = crate::synth::random_graph(n, n * 2, seed);
            let g = CitationGraph::from_edges(n, edges).unwrap();
            let hidden: Vec<usize> = (0..n).filter(|i| (i * 7 + hide) % 5 == 0).collect();
            let e = mat(n, 8, random_unit_vectors(n, 8, seed), &hidden);
            let out = impute_all_centroid(&g, &e).unwrap();
            prop_assert!(out.emb.present_count() >= e.present_count());
            prop_assert_eq!(out.filled.len() + out.unimputable.len(), hidden.len());
            for &i in &out.filled {
                prop_assert!(out.emb.is_imputed(i));
                prop_assert!((norm(out.emb.row(i)) - 1.0).abs() < 1e-5);
            }
            for i in e.present_indices() {
                prop_assert_eq!(out.emb.row(i), e.row(i));
            }
        }
    }
}
