//! Paper records, the dense id map, and Fig-1 style coverage counts.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::CitationGraph;

/// One paper as ingested.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PaperRecord {
    pub external_id: String,
    pub title: String,
    pub abstract_text: Option<String>,
    pub year: Option<i32>,
    pub references: Vec<String>,
    pub citation_count: u64,
    pub authors: Vec<String>,
}

impl PaperRecord {
    pub fn has_abstract(&self) -> bool {
        self.abstract_text.as_deref().is_some_and(|a| !a.trim().is_empty())
    }

    /// Drops self-references and repeated references, keeping first occurrences.
    pub fn normalize(&mut self) {
        let own = self.external_id.clone();
        let mut seen = BTreeMap::new();
        self.references
            .retain(|r| *r != own && seen.insert(r.clone(), ()).is_none());
    }
}

/// A problem found while building a store. `line` is 1-based when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestIssue {
    pub line: Option<usize>,
    pub external_id: Option<String>,
    pub message: String,
}

/// Immutable set of records with a bijective external-id ↔ index map.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    records: Vec<PaperRecord>,
    id_map: BTreeMap<String, u32>,
}

impl CorpusStore {
    /// Builds a store in first-seen order. Duplicate ids keep the first
    /// occurrence and are reported; records with an empty id are rejected.
    pub fn from_records<I>(records: I) -> (Self, Vec<IngestIssue>)
    where
        I: IntoIterator<Item = (Option<usize>, PaperRecord)>,
    {
        let mut store = CorpusStore::default();
        let mut issues = Vec::new();
        for (line, mut rec) in records {
            if rec.external_id.is_empty() {
                issues.push(IngestIssue {
                    line,
                    external_id: None,
                    message: String::from("empty external id"),
                });
                continue;
            }
            if store.id_map.contains_key(&rec.external_id) {
                issues.push(IngestIssue {
                    line,
                    external_id: Some(rec.external_id.clone()),
                    message: alloc::format!("duplicate external id {:?}", rec.external_id),
                });
                continue;
            }
            rec.normalize();
            let idx = store.records.len() as u32;
            store.id_map.insert(rec.external_id.clone(), idx);
            store.records.push(rec);
        }
        (store, issues)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PaperRecord] {
        &self.records
    }

    pub fn get(&self, index: usize) -> Option<&PaperRecord> {
        self.records.get(index)
    }

    pub fn resolve(&self, external_id: &str) -> Option<usize> {
        self.id_map.get(external_id).map(|&i| i as usize)
    }

    pub fn external_id(&self, index: usize) -> Option<&str> {
        self.records.get(index).map(|r| r.external_id.as_str())
    }

    /// References that do not resolve to a record in this store, as
    /// `(citing index, missing id)`.
    pub fn unresolved_references(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            for target in &r.references {
                if !self.id_map.contains_key(target) {
                    out.push((i, target.as_str()));
                }
            }
        }
        out
    }

    /// `(external_id, index)` pairs in index order.
    pub fn id_map(&self) -> impl Iterator<Item = (&str, usize)> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.external_id.as_str(), i))
    }

    /// Returns a copy of this store with `f` applied to every record. Ids must
    /// not change.
    pub fn map_records(&self, mut f: impl FnMut(usize, &mut PaperRecord)) -> Self {
        let mut records = self.records.clone();
        for (i, r) in records.iter_mut().enumerate() {
            f(i, r);
            assert_eq!(r.external_id, self.records[i].external_id, "external ids are immutable");
            r.normalize();
        }
        CorpusStore {
            records,
            id_map: self.id_map.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoverageStats {
    pub n_total: usize,
    pub n_abstract: usize,
    pub n_linked: usize,
    pub n_both: usize,
    pub fraction_abstract: f64,
    pub fraction_linked: f64,
    pub fraction_both: f64,
}

/// Counts papers with abstracts (A), with at least one link (L), and both.
pub fn coverage_stats(store: &CorpusStore, graph: &CitationGraph) -> CoverageStats {
    let n = store.len();
    let mut stats = CoverageStats {
        n_total: n,
        ..Default::default()
    };
    for (i, rec) in store.records().iter().enumerate() {
        let a = rec.has_abstract();
        let l = i < graph.node_count() && graph.total_degree(i) > 0;
        stats.n_abstract += a as usize;
        stats.n_linked += l as usize;
        stats.n_both += (a && l) as usize;
    }
    if n > 0 {
        let nf = n as f64;
        stats.fraction_abstract = stats.n_abstract as f64 / nf;
        stats.fraction_linked = stats.n_linked as f64 / nf;
        stats.fraction_both = stats.n_both as f64 / nf;
    }
    stats
}
