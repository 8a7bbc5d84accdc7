//! Fixtures and seeded synthetic corpora.
//!
//! `tiny5` is the five-paper corpus used throughout the tests. The generator
//! builds topic-clustered corpora with preferential-attachment citations,
//! recency-weighted references, and optional planted duplicates.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusStore, PaperRecord};

fn record(id: &str, title: &str, abs: Option<&str>, year: i32, refs: &[&str], cites: u64) -> PaperRecord {
    PaperRecord {
        external_id: id.to_string(),
        title: title.to_string(),
        abstract_text: abs.map(str::to_string),
        year: Some(year),
        references: refs.iter().map(|s| s.to_string()).collect(),
        citation_count: cites,
        authors: Vec::new(),
    }
}

/// P0..P4: links-only, both, both, both, abstract-only.
pub fn tiny5() -> CorpusStore {
    let recs = vec![
        record("P0", "alpha", None, 2000, &[], 2),
        record("P1", "beta", Some("graph embedding"), 2005, &["P0"], 1),
        record("P2", "gamma", Some("graph embedding survey"), 2010, &["P0", "P1"], 1),
        record("P3", "delta", Some("content filtering"), 2015, &["P2"], 0),
        record("P4", "epsilon", Some("unrelated topic"), 2020, &[], 0),
    ];
    CorpusStore::from_records(recs.into_iter().map(|r| (None, r))).0
}

/// `m` uniformly random directed edges over `n` nodes (self-loops allowed,
/// callers drop them).
pub fn random_graph(n: usize, m: usize, seed: u64) -> (usize, Vec<(u32, u32)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = (0..m)
        .map(|_| (rng.random_range(0..n as u32), rng.random_range(0..n as u32)))
        .collect();
    (n, edges)
}

/// Random unit vectors of dimension `d`, row-major.
pub fn random_unit_vectors(n: usize, d: usize, seed: u64) -> Vec<f32> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        out.extend(v.iter().map(|x| (x / norm) as f32));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub topics: usize,
    /// References per paper (after the seed papers).
    pub refs_per_paper: usize,
    /// Probability that a reference stays within the citing paper's topic.
    pub p_same_topic: f64,
    /// Probability that a reference is drawn from the recent window rather
    /// than by global preferential attachment.
    pub p_recent: f64,
    /// Probability that a reference is copied from the reference list of a
    /// paper already chosen (citation copying; closes triangles).
    pub p_copy: f64,
    /// Size of the recent window, in papers.
    pub recent_window: usize,
    /// Words per topic vocabulary, plus a shared background vocabulary.
    pub vocab_per_topic: usize,
    pub abstract_words: usize,
    /// Fraction of words drawn from the background vocabulary.
    pub background_rate: f64,
    pub first_year: i32,
    pub last_year: i32,
    /// Probability that a paper has no abstract.
    pub p_no_abstract: f64,
    pub authors_per_topic: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2_000,
            topics: 20,
            refs_per_paper: 5,
            p_same_topic: 0.85,
            p_recent: 0.0,
            p_copy: 0.0,
            recent_window: 500,
            vocab_per_topic: 60,
            abstract_words: 40,
            background_rate: 0.3,
            first_year: 1980,
            last_year: 2024,
            p_no_abstract: 0.0,
            authors_per_topic: 10,
            seed: 1,
        }
    }
}

/// A generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub store: CorpusStore,
    pub topic: Vec<usize>,
    /// Planted duplicate pairs `(original, copy)` in index order.
    pub duplicates: Vec<(usize, usize)>,
}

fn word(topic: Option<usize>, i: usize) -> String {
    match topic {
        Some(t) => format!("t{t}w{i}"),
        None => format!("bg{i}"),
    }
}

/// Papers arrive in index order with nondecreasing years. Each cites
/// `refs_per_paper` earlier papers: same-topic with probability
/// `p_same_topic`, chosen by preferential attachment (in-degree + 1) or from
/// the recent window. `citation_count` equals the in-degree.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let topics = cfg.topics.max(1);
    let topic: Vec<usize> = (0..n).map(|_| rng.random_range(0..topics)).collect();
    // Endpoint pools: each paper appears once on arrival plus once per citation.
    let mut pool_all: Vec<u32> = Vec::new();
    let mut pool_topic: Vec<Vec<u32>> = vec![Vec::new(); topics];
    let mut by_topic: Vec<Vec<u32>> = vec![Vec::new(); topics];
    let mut refs: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut indeg = vec![0u64; n];
    for i in 0..n {
        let t = topic[i];
        let want = cfg.refs_per_paper.min(i);
        let mut chosen: Vec<u32> = Vec::with_capacity(want);
        let mut attempts = 0;
        while chosen.len() < want && attempts < want * 20 {
            attempts += 1;
            let same = rng.random_bool(cfg.p_same_topic) && !by_topic[t].is_empty();
            let recent = rng.random_bool(cfg.p_recent);
            let copy_from = if !chosen.is_empty() && rng.random_bool(cfg.p_copy) {
                let c = chosen[rng.random_range(0..chosen.len())] as usize;
                (!refs[c].is_empty()).then_some(c)
            } else {
                None
            };
            let cand = if let Some(c) = copy_from {
                refs[c][rng.random_range(0..refs[c].len())]
            } else if recent && same {
                let list = &by_topic[t];
                let lo = list.len().saturating_sub(cfg.recent_window / topics + 1);
                list[rng.random_range(lo..list.len())]
            } else if recent {
                rng.random_range(i.saturating_sub(cfg.recent_window)..i) as u32
            } else if same {
                let p = &pool_topic[t];
                p[rng.random_range(0..p.len())]
            } else {
                pool_all[rng.random_range(0..pool_all.len())]
            };
            if !chosen.contains(&cand) {
                chosen.push(cand);
            }
        }
        for &c in &chosen {
            indeg[c as usize] += 1;
            pool_all.push(c);
            pool_topic[topic[c as usize]].push(c);
        }
        refs[i] = chosen;
        pool_all.push(i as u32);
        pool_topic[t].push(i as u32);
        by_topic[t].push(i as u32);
    }

    let span = (cfg.last_year - cfg.first_year).max(0) as usize;
    let mut recs = Vec::with_capacity(n);
    for i in 0..n {
        let t = topic[i];
        let year = cfg.first_year + ((i * (span + 1)) / n.max(1)) as i32;
        let mut words = Vec::with_capacity(cfg.abstract_words);
        for _ in 0..cfg.abstract_words {
            if rng.random_bool(cfg.background_rate) {
                words.push(word(None, rng.random_range(0..cfg.vocab_per_topic * 4)));
            } else {
                words.push(word(Some(t), rng.random_range(0..cfg.vocab_per_topic)));
            }
        }
        let abs = (!rng.random_bool(cfg.p_no_abstract)).then(|| words.join(" "));
        let title = format!("{} {} {}", word(Some(t), rng.random_range(0..cfg.vocab_per_topic)), word(Some(t), rng.random_range(0..cfg.vocab_per_topic)), i);
        let n_auth = rng.random_range(1..=3);
        let authors = (0..n_auth)
            .map(|_| format!("author-{t}-{}", rng.random_range(0..cfg.authors_per_topic.max(1))))
            .collect();
        recs.push(PaperRecord {
            external_id: format!("S{i}"),
            title,
            abstract_text: abs,
            year: Some(year),
            references: refs[i].iter().map(|&r| format!("S{r}")).collect(),
            citation_count: indeg[i],
            authors,
        });
    }
    let store = CorpusStore::from_records(recs.into_iter().map(|r| (None, r))).0;
    SynthCorpus { store, topic, duplicates: Vec::new() }
}

/// How a planted copy is linked into the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopyLinks {
    /// Copy has the same references as the original.
    SameReferences,
    /// Copy has `n` random references and no citations; the original keeps
    /// all citations.
    Orphan(usize),
}

/// Appends `count` copies of randomly chosen originals (identical title and
/// abstract, fresh id) to the corpus.
pub fn plant_duplicates(corpus: &SynthCorpus, count: usize, links: CopyLinks, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = corpus.store.len();
    let eligible: Vec<usize> = (0..base).filter(|&i| corpus.store.records()[i].has_abstract()).collect();
    let mut picked: Vec<usize> = Vec::new();
    while picked.len() < count.min(eligible.len()) {
        let c = eligible[rng.random_range(0..eligible.len())];
        if !picked.contains(&c) {
            picked.push(c);
        }
    }
    let mut recs: Vec<PaperRecord> = corpus.store.records().to_vec();
    let mut topic = corpus.topic.clone();
    let mut duplicates = corpus.duplicates.clone();
    for (k, &orig) in picked.iter().enumerate() {
        let mut copy = recs[orig].clone();
        copy.external_id = format!("{}-dup{k}", copy.external_id);
        copy.citation_count = 0;
        match links {
            CopyLinks::SameReferences => {}
            CopyLinks::Orphan(m) => {
                copy.references = (0..m).map(|_| recs[rng.random_range(0..base)].external_id.clone()).collect();
            }
        }
        duplicates.push((orig, base + k));
        topic.push(topic[orig]);
        recs.push(copy);
    }
    let store = CorpusStore::from_records(recs.into_iter().map(|r| (None, r))).0;
    SynthCorpus { store, topic, duplicates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    #[test]
    fn generator_is_deterministic_and_consistent() {
        let cfg = SynthConfig { n: 500, ..Default::default() };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.store.records(), b.store.records());
        let g = build_graph(&a.store);
        for i in 0..500 {
            assert_eq!(g.in_degree(i) as u64, a.store.records()[i].citation_count);
            for &r in g.out_neighbors(i) {
                assert!((r as usize) < i, "references point backwards in time");
            }
        }
        let years: Vec<i32> = a.store.records().iter().map(|r| r.year.unwrap()).collect();
        assert!(years.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn planted_copies_share_text() {
        let c = generate(&SynthConfig { n: 200, ..Default::default() });
        let d = plant_duplicates(&c, 5, CopyLinks::Orphan(2), 3);
        assert_eq!(d.store.len(), 205);
        for &(o, k) in &d.duplicates {
            let (ro, rk) = (&d.store.records()[o], &d.store.records()[k]);
            assert_eq!(ro.abstract_text, rk.abstract_text);
            assert_eq!(ro.title, rk.title);
            assert_eq!(rk.citation_count, 0);
        }
    }
}
