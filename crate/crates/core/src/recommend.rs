//! Papers-like-this, authors-like-this, list fusion, and citation/recency
//! profiles of what each method recommends.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::ann::{AnnIndex, AnnParams};
use crate::corpus::CorpusStore;
use crate::embedding::{normalized_mean, EmbeddingMatrix, Method};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub index: usize,
    pub score: f64,
}

fn scored_order(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then(a.index.cmp(&b.index))
}

/// Ranked recommendations for one query paper. Never contains the query or
/// repeated items.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub query: usize,
    pub method: Method,
    pub items: Vec<Scored>,
    /// Unix seconds, set by the caller.
    pub generated_at: u64,
}

impl RecommendationList {
    /// Sorts, drops the query and repeats (first occurrence wins), truncates.
    pub fn new(query: usize, method: Method, mut items: Vec<Scored>, k: usize) -> Self {
        items.sort_by(scored_order);
        let mut seen = BTreeMap::new();
        items.retain(|s| s.index != query && seen.insert(s.index, ()).is_none());
        items.truncate(k);
        RecommendationList { query, method, items, generated_at: 0 }
    }

    pub fn indices(&self) -> Vec<usize> {
        self.items.iter().map(|s| s.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionStrategy {
    /// Σ 1/(constant + rank), rank from 1.
    Rrf { constant: f64 },
    /// `weight · a + (1 − weight) · b` over min-max normalized scores.
    Weighted { weight: f64 },
}

impl Default for FusionStrategy {
    fn default() -> Self {
        FusionStrategy::Rrf { constant: 60.0 }
    }
}

fn min_max(list: &RecommendationList) -> Vec<(usize, f64)> {
    let lo = list.items.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let hi = list.items.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
    list.items
        .iter()
        .map(|s| {
            let v = if hi > lo { (s.score - lo) / (hi - lo) } else { 1.0 };
            (s.index, v)
        })
        .collect()
}

/// Combines two lists for the same query into a hybrid list of length ≤ k.
pub fn fuse(a: &RecommendationList, b: &RecommendationList, strategy: FusionStrategy, k: usize) -> Result<RecommendationList> {
    if a.query != b.query {
        return Err(Error::QueryMismatch(a.query, b.query));
    }
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    match strategy {
        FusionStrategy::Rrf { constant } => {
            for list in [a, b] {
                let mut seen = BTreeMap::new();
                let mut rank = 0usize;
                for item in &list.items {
                    if seen.insert(item.index, ()).is_some() {
                        continue;
                    }
                    rank += 1;
                    *acc.entry(item.index).or_insert(0.0) += 1.0 / (constant + rank as f64);
                }
            }
        }
        FusionStrategy::Weighted { weight } => {
            if !(0.0..=1.0).contains(&weight) {
                return Err(Error::InvalidArgument("fusion weight must be in [0, 1]".into()));
            }
            for (list, w) in [(a, weight), (b, 1.0 - weight)] {
                let mut seen = BTreeMap::new();
                for (idx, v) in min_max(list) {
                    if seen.insert(idx, ()).is_none() {
                        *acc.entry(idx).or_insert(0.0) += w * v;
                    }
                }
            }
        }
    }
    let items = acc.into_iter().map(|(index, score)| Scored { index, score }).collect();
    Ok(RecommendationList::new(a.query, Method::Hybrid, items, k))
}

/// An embedding with its ANN index.
#[derive(Debug, Clone)]
pub struct EmbeddingSide {
    pub emb: EmbeddingMatrix,
    pub index: AnnIndex,
}

impl EmbeddingSide {
    pub fn build(emb: EmbeddingMatrix, params: AnnParams) -> Result<Self> {
        let index = AnnIndex::build(&emb, params)?;
        Ok(EmbeddingSide { emb, index })
    }
}

/// Query-time state: up to one content side and one graph side.
#[derive(Debug, Clone)]
pub struct Recommender {
    pub cbf: Option<EmbeddingSide>,
    pub gb: Option<EmbeddingSide>,
    pub ef_search: usize,
    pub fusion: FusionStrategy,
}

impl Recommender {
    pub fn new(cbf: Option<EmbeddingSide>, gb: Option<EmbeddingSide>) -> Self {
        Recommender { cbf, gb, ef_search: 100, fusion: FusionStrategy::default() }
    }

    pub fn side(&self, method: Method) -> Option<&EmbeddingSide> {
        match method {
            Method::Cbf => self.cbf.as_ref(),
            Method::Gb => self.gb.as_ref(),
            Method::Hybrid => None,
        }
    }

    fn side_list(&self, method: Method, query: usize, k: usize) -> Result<Option<RecommendationList>> {
        let Some(side) = self.side(method) else { return Ok(None) };
        let Some(v) = side.emb.vector(query) else { return Ok(None) };
        let found = side.index.query(v, k + 1, self.ef_search.max(k + 1))?;
        let items = found.into_iter().map(|n| Scored { index: n.index, score: n.cosine as f64 }).collect();
        Ok(Some(RecommendationList::new(query, method, items, k)))
    }

    /// Whether `papers_like_this` can answer `query` with `method`.
    pub fn answers(&self, query: usize, method: Method) -> bool {
        let has = |m| self.side(m).is_some_and(|s| s.emb.vector(query).is_some());
        match method {
            Method::Hybrid => has(Method::Cbf) || has(Method::Gb),
            m => has(m),
        }
    }

    pub fn papers_like_this(&self, query: usize, method: Method, k: usize) -> Result<RecommendationList> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        match method {
            Method::Cbf | Method::Gb => self
                .side_list(method, query, k)?
                .ok_or_else(|| Error::NoVector { query, missing: vec![method] }),
            Method::Hybrid => {
                let a = self.side_list(Method::Cbf, query, k)?;
                let b = self.side_list(Method::Gb, query, k)?;
                if a.is_none() && b.is_none() {
                    return Err(Error::NoVector { query, missing: vec![Method::Cbf, Method::Gb] });
                }
                let empty = |m| RecommendationList { query, method: m, items: Vec::new(), generated_at: 0 };
                let a = a.unwrap_or_else(|| empty(Method::Cbf));
                let b = b.unwrap_or_else(|| empty(Method::Gb));
                fuse(&a, &b, self.fusion, k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuthorScore {
    pub name: String,
    pub score: f64,
}

/// Author centroids (normalized mean of each author's embedded papers) with
/// an ANN index over them. Authors are identified by exact name.
#[derive(Debug, Clone)]
pub struct AuthorIndex {
    names: Vec<String>,
    centroids: EmbeddingMatrix,
    index: AnnIndex,
}

impl AuthorIndex {
    pub fn build(store: &CorpusStore, emb: &EmbeddingMatrix, params: AnnParams) -> Result<Self> {
        let mut papers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in store.records().iter().enumerate() {
            for a in &r.authors {
                papers.entry(a.as_str()).or_default().push(i);
            }
        }
        let d = emb.dim();
        let mut names = Vec::new();
        let mut data = Vec::new();
        for (name, list) in papers {
            if let Some(c) = normalized_mean(d, list.iter().filter_map(|&i| emb.vector(i))) {
                names.push(String::from(name));
                data.extend(c);
            }
        }
        if names.is_empty() {
            return Err(Error::Empty("no author has an embedded paper"));
        }
        let centroids = EmbeddingMatrix::from_rows(names.len(), d, data, &[], emb.method)?;
        let index = AnnIndex::build(&centroids, params)?;
        Ok(AuthorIndex { names, centroids, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn centroids(&self) -> &EmbeddingMatrix {
        &self.centroids
    }

    /// Authors nearest to the query paper's vector, excluding its own authors.
    pub fn authors_like_this(
        &self,
        store: &CorpusStore,
        emb: &EmbeddingMatrix,
        query: usize,
        k: usize,
        ef_search: usize,
    ) -> Result<Vec<AuthorScore>> {
        let v = emb
            .vector(query)
            .ok_or_else(|| Error::NoVector { query, missing: vec![emb.method] })?;
        let own: &[String] = store.get(query).map(|r| r.authors.as_slice()).unwrap_or(&[]);
        let want = k + own.len();
        let found = self.index.query(v, want, ef_search.max(want))?;
        Ok(found
            .into_iter()
            .filter(|n| !own.contains(&self.names[n.index]))
            .take(k)
            .map(|n| AuthorScore { name: self.names[n.index].clone(), score: n.cosine as f64 })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Summary {
            count: n,
            min: v[0],
            median,
            mean: v.iter().sum::<f64>() / n as f64,
            max: v[n - 1],
        })
    }
}

/// One recommended item, as emitted for histogram plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorsRow {
    pub method: Method,
    pub rank: usize,
    pub paper: usize,
    pub citations: u64,
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodPriors {
    pub method: Method,
    pub n_items: usize,
    pub citations: Option<Summary>,
    pub years: Option<Summary>,
    /// Items left out of the year summary because their year is unknown.
    pub excluded_year: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorsReport {
    pub methods: Vec<MethodPriors>,
    pub rows: Vec<PriorsRow>,
}

impl PriorsReport {
    pub fn method(&self, m: Method) -> Option<&MethodPriors> {
        self.methods.iter().find(|p| p.method == m)
    }
}

/// Citation-count and publication-year summaries over the top-`k` items of
/// each list, grouped by method.
pub fn priors_profile(lists: &[RecommendationList], store: &CorpusStore, k: usize) -> Result<PriorsReport> {
    if lists.is_empty() {
        return Err(Error::Empty("no recommendation lists"));
    }
    let mut rows = Vec::new();
    for list in lists {
        for (r, item) in list.items.iter().take(k).enumerate() {
            let rec = store.get(item.index).ok_or(Error::OutOfRange { index: item.index, len: store.len() })?;
            rows.push(PriorsRow {
                method: list.method,
                rank: r + 1,
                paper: item.index,
                citations: rec.citation_count,
                year: rec.year,
            });
        }
    }
    let mut methods: Vec<Method> = lists.iter().map(|l| l.method).collect();
    methods.sort();
    methods.dedup();
    let methods = methods
        .into_iter()
        .map(|m| {
            let mine: Vec<&PriorsRow> = rows.iter().filter(|r| r.method == m).collect();
            let cites: Vec<f64> = mine.iter().map(|r| r.citations as f64).collect();
            let years: Vec<f64> = mine.iter().filter_map(|r| r.year.map(f64::from)).collect();
            MethodPriors {
                method: m,
                n_items: mine.len(),
                citations: Summary::of(&cites),
                years: Summary::of(&years),
                excluded_year: mine.len() - years.len(),
            }
        })
        .collect();
    Ok(PriorsReport { methods, rows })
}
