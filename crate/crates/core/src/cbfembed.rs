//! Content vectors: a deterministic hashing embedder over titles and
//! abstracts, and alignment of externally supplied vectors to a corpus.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::corpus::CorpusStore;
use crate::embedding::{EmbeddingMatrix, Method};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedderConfig {
    pub dim: usize,
    pub min_ngram: usize,
    pub max_ngram: usize,
    pub seed: u64,
}

impl Default for HashEmbedderConfig {
    fn default() -> Self {
        HashEmbedderConfig { dim: 256, min_ngram: 1, max_ngram: 2, seed: 0 }
    }
}

impl HashEmbedderConfig {
    fn check(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::InvalidArgument(alloc::format!("hash dimension {} < 8", self.dim)));
        }
        if self.min_ngram == 0 || self.min_ngram > self.max_ngram {
            return Err(Error::InvalidArgument("need 1 <= min_ngram <= max_ngram".into()));
        }
        Ok(())
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "in", "is", "it", "its", "of", "on",
    "or", "that", "the", "this", "to", "was", "we", "were", "which", "with",
];

const SIGN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Lowercased alphanumeric runs, stopwords removed.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        if !cur.is_empty() {
            if !STOPWORDS.contains(&cur.as_str()) {
                out.push(core::mem::take(cur));
            } else {
                cur.clear();
            }
        }
    };
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else {
            flush(&mut cur, &mut out);
        }
    }
    flush(&mut cur, &mut out);
    out
}

/// Signed feature hashing of token n-grams, L2-normalized. Returns `None`
/// (a missing vector) when no tokens survive.
pub fn hash_embed(text: &str, config: &HashEmbedderConfig) -> Result<Option<Vec<f32>>> {
    config.check()?;
    let tokens = tokenize(text);
    let mut acc = vec![0f64; config.dim];
    let mut gram = String::new();
    let mut any = false;
    for n in config.min_ngram..=config.max_ngram {
        for window in tokens.windows(n) {
            gram.clear();
            for (i, t) in window.iter().enumerate() {
                if i > 0 {
                    gram.push(' ');
                }
                gram.push_str(t);
            }
            let h = xxh3_64_with_seed(gram.as_bytes(), config.seed);
            let s = xxh3_64_with_seed(gram.as_bytes(), config.seed ^ SIGN_SALT);
            let sign = if s & 1 == 0 { 1.0 } else { -1.0 };
            acc[(h % config.dim as u64) as usize] += sign;
            any = true;
        }
    }
    if !any {
        return Ok(None);
    }
    let nrm = libm::sqrt(acc.iter().map(|x| x * x).sum::<f64>());
    if nrm == 0.0 {
        return Ok(None);
    }
    Ok(Some(acc.iter().map(|&x| (x / nrm) as f32).collect()))
}

/// Row `i` embeds `title + " " + abstract` for papers whose abstract field is
/// present (an empty abstract leaves the title alone); papers with no
/// abstract field are missing.
pub fn embed_corpus(store: &CorpusStore, config: &HashEmbedderConfig) -> Result<EmbeddingMatrix> {
    config.check()?;
    let n = store.len();
    let d = config.dim;
    let rows: Vec<Option<Vec<f32>>> = crate::linalg::map_range(n, |i| {
        let r = &store.records()[i];
        let mut text = r.title.clone();
        text.push(' ');
        text.push_str(r.abstract_text.as_deref()?);
        hash_embed(&text, config).ok().flatten()
    });
    let mut data = vec![0f32; n * d];
    let mut missing = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(v) => data[i * d..(i + 1) * d].copy_from_slice(&v),
            None => missing.push(i),
        }
    }
    let mut emb = EmbeddingMatrix::from_rows(n, d, data, &missing, Method::Cbf)?;
    emb.source_digest = content_digest(store);
    Ok(emb)
}

/// Digest over ids, titles, and abstracts only; citation data is excluded so
/// the content side does not change when links accumulate.
pub fn content_digest(store: &CorpusStore) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for r in store.records() {
        h.update(r.external_id.as_bytes());
        h.update([0]);
        h.update(r.title.as_bytes());
        h.update([0]);
        if let Some(a) = &r.abstract_text {
            h.update(a.as_bytes());
        }
        h.update([1]);
    }
    h.finalize().into()
}

/// Outcome of aligning externally supplied vectors to a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignReport {
    pub unresolved: Vec<String>,
    pub duplicates: Vec<String>,
}

/// Places `(external_id, vector)` pairs at their corpus rows. Unknown ids are
/// reported and skipped; papers without a vector are missing.
pub fn align_vectors<I>(store: &CorpusStore, dim: usize, vectors: I) -> Result<(EmbeddingMatrix, AlignReport)>
where
    I: IntoIterator<Item = (String, Vec<f32>)>,
{
    let n = store.len();
    let mut data = vec![0f32; n * dim];
    let mut seen = vec![false; n];
    let mut report = AlignReport { unresolved: Vec::new(), duplicates: Vec::new() };
    for (id, v) in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        match store.resolve(&id) {
            None => report.unresolved.push(id),
            Some(i) if seen[i] => report.duplicates.push(id),
            Some(i) => {
                seen[i] = true;
                data[i * dim..(i + 1) * dim].copy_from_slice(&v);
            }
        }
    }
    let missing: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
    let mut emb = EmbeddingMatrix::from_rows(n, dim, data, &missing, Method::Cbf)?;
    emb.source_digest = content_digest(store);
    Ok((emb, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine, norm};
    use crate::synth::tiny5;
    use alloc::string::ToString;

    fn cfg() -> HashEmbedderConfig {
        HashEmbedderConfig::default()
    }

    #[test]
    fn identical_text_identical_vector() {
        let a = hash_embed("Graph embedding", &cfg()).unwrap().unwrap();
        let b = hash_embed("graph, EMBEDDING!", &cfg()).unwrap().unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-6);
        assert!((norm(&a) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shared_words_rank_higher() {
        let q = hash_embed("graph embedding", &cfg()).unwrap().unwrap();
        let near = hash_embed("graph embedding survey", &cfg()).unwrap().unwrap();
        let far = hash_embed("unrelated topic", &cfg()).unwrap().unwrap();
        assert!(cosine(&q, &near) > cosine(&q, &far));
    }

    #[test]
    fn empty_and_stopword_text_missing() {
        assert_eq!(hash_embed("", &cfg()).unwrap(), None);
        assert_eq!(hash_embed("the of and", &cfg()).unwrap(), None);
        assert!(hash_embed("x", &HashEmbedderConfig { dim: 4, ..cfg() }).is_err());
    }

    #[test]
    fn tiny5_corpus() {
        let emb = embed_corpus(&tiny5(), &cfg()).unwrap();
        assert_eq!(emb.missing_indices().collect::<Vec<_>>(), vec![0]);
        assert_eq!(emb.method, Method::Cbf);
    }

    #[test]
    fn identical_abstracts_cosine_one() {
        let store = tiny5().map_records(|_, r| {
            r.title = "same".to_string();
            r.abstract_text = Some("identical words here".to_string());
        });
        let emb = embed_corpus(&store, &cfg()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((emb.cosine_rows(i, j).unwrap() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn title_only_paper() {
        let store = tiny5().map_records(|i, r| {
            if i == 3 {
                r.abstract_text = Some(String::new());
            }
        });
        let emb = embed_corpus(&store, &cfg()).unwrap();
        assert!(!emb.is_missing(3), "title alone still embeds");
    }

    #[test]
    fn citations_do_not_change_content() {
        let store = tiny5();
        let more = store.map_records(|i, r| {
            r.citation_count += 10;
            if i == 4 {
                r.references.push("P0".to_string());
            }
        });
        let a = embed_corpus(&store, &cfg()).unwrap();
        let b = embed_corpus(&more, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn align_three_of_five() {
        let store = tiny5();
        let vecs = vec![
            ("P0".to_string(), vec![1.0, 0.0]),
            ("P2".to_string(), vec![0.0, 1.0]),
            ("P3".to_string(), vec![1.0, 1.0]),
            ("ZZ".to_string(), vec![1.0, 1.0]),
        ];
        let (emb, rep) = align_vectors(&store, 2, vecs).unwrap();
        assert_eq!(emb.missing_count(), 2);
        assert_eq!(rep.unresolved, vec!["ZZ".to_string()]);
        assert!(align_vectors(&store, 2, vec![("P1".to_string(), vec![1.0])]).is_err());
    }
}
