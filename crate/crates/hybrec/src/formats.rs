//! On-disk formats: JSONL corpus, id map, CSR1 graphs, EMB1 embeddings, text
//! vectors, ANN1 indexes, and the CSV/JSONL reports.

use std::io::{BufRead, Read, Write};

use hybrec_core::ann::{AnnParams, AnnParts};
use hybrec_core::corpus::IngestIssue;
use hybrec_core::eval::{CellResult, HopPairSet};
use hybrec_core::recommend::PriorsRow;
use hybrec_core::robustness::{CosineHistogram, PairFlag};
use hybrec_core::{CitationGraph, CorpusStore, EmbeddingMatrix, Method, PaperRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of malformed lines above which a corpus parse fails.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub year: Option<i32>,
    pub references: Vec<String>,
    #[serde(rename = "citationCount")]
    pub citation_count: u64,
    pub authors: Vec<String>,
}

impl From<RecordJson> for PaperRecord {
    fn from(r: RecordJson) -> Self {
        PaperRecord {
            external_id: r.id,
            title: r.title,
            abstract_text: r.abstract_text,
            year: r.year,
            references: r.references,
            citation_count: r.citation_count,
            authors: r.authors,
        }
    }
}

impl From<&PaperRecord> for RecordJson {
    fn from(r: &PaperRecord) -> Self {
        RecordJson {
            id: r.external_id.clone(),
            title: r.title.clone(),
            abstract_text: r.abstract_text.clone(),
            year: r.year,
            references: r.references.clone(),
            citation_count: r.citation_count,
            authors: r.authors.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub store: CorpusStore,
    /// Malformed lines and duplicate ids, in line order.
    pub issues: Vec<IngestIssue>,
    pub lines: usize,
    pub malformed: usize,
}

/// One JSON record per line; blank lines are ignored. Malformed lines are
/// reported and skipped unless they exceed 10% of the input.
pub fn parse_records<R: BufRead>(input: R) -> Result<ParsedCorpus> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut lines = 0;
    let mut malformed = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        match serde_json::from_str::<RecordJson>(&line) {
            Ok(r) => records.push((Some(i + 1), PaperRecord::from(r))),
            Err(e) => {
                malformed += 1;
                issues.push(IngestIssue { line: Some(i + 1), external_id: None, message: e.to_string() });
            }
        }
    }
    if lines > 0 && malformed as f64 > MAX_MALFORMED_FRACTION * lines as f64 {
        return Err(Error::TooManyMalformed { malformed, lines });
    }
    let (store, dup) = CorpusStore::from_records(records);
    issues.extend(dup);
    issues.sort_by_key(|i| i.line);
    Ok(ParsedCorpus { store, issues, lines, malformed })
}

pub fn write_records<W: Write>(store: &CorpusStore, mut out: W) -> Result<()> {
    for r in store.records() {
        serde_json::to_writer(&mut out, &RecordJson::from(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_id_map<W: Write>(store: &CorpusStore, mut out: W) -> Result<()> {
    for (id, i) in store.id_map() {
        writeln!(out, "{id}\t{i}")?;
    }
    Ok(())
}

pub fn read_id_map<R: BufRead>(input: R) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let (id, idx) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("id map", format!("line {}: expected two tab-separated fields", n + 1)))?;
        let idx = idx
            .parse()
            .map_err(|e| Error::format("id map", format!("line {}: {e}", n + 1)))?;
        out.push((id.to_string(), idx));
    }
    Ok(out)
}

struct BinReader<R> {
    inner: R,
    what: &'static str,
}

impl<R: Read> BinReader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::format(self.what, format!("truncated: {e}")))?;
        Ok(b)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.exact::<4>()?;
        if &got != want {
            return Err(Error::format(self.what, format!("bad magic {:?}", String::from_utf8_lossy(&got))));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.exact::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact()?))
    }

    fn len(&mut self, limit: u64) -> Result<usize> {
        let v = self.u64()?;
        if v > limit {
            return Err(Error::format(self.what, format!("length {v} exceeds {limit}")));
        }
        Ok(v as usize)
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let mut buf = vec![0u8; n * 4];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::format(self.what, format!("truncated: {e}")))?;
        Ok(buf.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        let mut buf = vec![0u8; n * 8];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::format(self.what, format!("truncated: {e}")))?;
        Ok(buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self.u32s(n)?.into_iter().map(f32::from_bits).collect())
    }

    fn at_end(&mut self) -> Result<bool> {
        let mut b = [0u8; 1];
        Ok(self.inner.read(&mut b)? == 0)
    }
}

// Sanity bound for lengths read from untrusted headers.
const MAX_LEN: u64 = 1 << 40;

fn put_u32s<W: Write>(out: &mut W, v: &[u32]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 4);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn put_u64s<W: Write>(out: &mut W, v: &[u64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// `CSR1`: n, edge count, then offsets and neighbors for out-links and
/// in-links.
pub fn write_graph<W: Write>(g: &CitationGraph, mut out: W) -> Result<()> {
    out.write_all(b"CSR1")?;
    out.write_all(&(g.node_count() as u64).to_le_bytes())?;
    out.write_all(&(g.edge_count() as u64).to_le_bytes())?;
    put_u64s(&mut out, g.out_offsets())?;
    put_u32s(&mut out, g.out_targets())?;
    put_u64s(&mut out, g.in_offsets())?;
    put_u32s(&mut out, g.in_sources())?;
    Ok(())
}

pub fn read_graph<R: Read>(input: R) -> Result<CitationGraph> {
    let mut r = BinReader { inner: input, what: "CSR1 graph" };
    r.magic(b"CSR1")?;
    let n = r.len(1 << 31)?;
    let m = r.len(MAX_LEN)?;
    let oo = r.u64s(n + 1)?;
    let on = r.u32s(m)?;
    let io = r.u64s(n + 1)?;
    let inn = r.u32s(m)?;
    if !r.at_end()? {
        return Err(Error::format("CSR1 graph", "trailing bytes"));
    }
    Ok(CitationGraph::from_raw_parts(n, oo, on, io, inn)?)
}

/// `EMB1`: n, d, method tag, row-major f32 data, missing rows. An `EXT1`
/// trailer carries build time, source digest, and imputed rows; readers
/// accept files without it.
pub fn write_embedding<W: Write>(e: &EmbeddingMatrix, mut out: W) -> Result<()> {
    out.write_all(b"EMB1")?;
    out.write_all(&(e.n() as u64).to_le_bytes())?;
    out.write_all(&(e.dim() as u32).to_le_bytes())?;
    out.write_all(&[e.method.tag()])?;
    let bits: Vec<u32> = e.data().iter().map(|x| x.to_bits()).collect();
    put_u32s(&mut out, &bits)?;
    let missing: Vec<u64> = e.missing_indices().map(|i| i as u64).collect();
    out.write_all(&(missing.len() as u64).to_le_bytes())?;
    put_u64s(&mut out, &missing)?;
    out.write_all(b"EXT1")?;
    out.write_all(&e.built_at.to_le_bytes())?;
    out.write_all(&e.source_digest)?;
    let imputed: Vec<u64> = e.imputed_indices().map(|i| i as u64).collect();
    out.write_all(&(imputed.len() as u64).to_le_bytes())?;
    put_u64s(&mut out, &imputed)?;
    Ok(())
}

pub fn read_embedding<R: Read>(input: R) -> Result<EmbeddingMatrix> {
    let mut r = BinReader { inner: input, what: "EMB1 embedding" };
    r.magic(b"EMB1")?;
    let n = r.len(MAX_LEN)?;
    let d = r.u32()? as usize;
    let tag = r.u8()?;
    let method = Method::from_tag(tag).ok_or_else(|| Error::format("EMB1 embedding", format!("unknown method tag {tag}")))?;
    if (n as u64).saturating_mul(d as u64) > MAX_LEN {
        return Err(Error::format("EMB1 embedding", "matrix too large"));
    }
    let data = r.f32s(n * d)?;
    let n_missing = r.len(n as u64)?;
    let missing: Vec<usize> = r.u64s(n_missing)?.into_iter().map(|i| i as usize).collect();
    let mut emb = EmbeddingMatrix::from_rows(n, d, data.clone(), &missing, method)?;
    if r.at_end()? {
        return Ok(emb);
    }
    // at_end consumed the first byte of the trailer magic.
    let rest = r.exact::<3>()?;
    if &rest != b"XT1" {
        return Err(Error::format("EMB1 embedding", "unknown trailer"));
    }
    emb.built_at = r.u64()?;
    emb.source_digest = r.exact::<32>()?;
    let n_imp = r.len(n as u64)?;
    let imputed = r.u64s(n_imp)?;
    if !imputed.is_empty() {
        let rows: Vec<(usize, Vec<f32>)> = imputed
            .iter()
            .map(|&i| {
                let i = i as usize;
                (i, data.get(i * d..(i + 1) * d).map(<[f32]>::to_vec).unwrap_or_default())
            })
            .collect();
        let mut real_missing = missing.clone();
        real_missing.extend(rows.iter().map(|r| r.0));
        let (built_at, digest) = (emb.built_at, emb.source_digest);
        emb = EmbeddingMatrix::from_rows(n, d, data, &real_missing, method)?.with_imputed(&rows)?;
        emb.built_at = built_at;
        emb.source_digest = digest;
    }
    if !r.at_end()? {
        return Err(Error::format("EMB1 embedding", "trailing bytes"));
    }
    Ok(emb)
}

/// Dimension and `(id, vector)` rows.
pub type TextVectors = (usize, Vec<(String, Vec<f32>)>);

/// `external_id<TAB>f32,f32,...` per line.
pub fn read_text_vectors<R: BufRead>(input: R) -> Result<TextVectors> {
    let mut out = Vec::new();
    let mut dim = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::format("text vectors", format!("line {}: {m}", n + 1));
        let (id, vals) = line.split_once('\t').ok_or_else(|| bad("expected id<TAB>values".into()))?;
        let v: Vec<f32> = vals
            .split(',')
            .map(|x| x.trim().parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => return Err(bad(format!("dimension {} differs from {d}", v.len()))),
            _ => {}
        }
        out.push((id.to_string(), v));
    }
    Ok((dim.unwrap_or(0), out))
}

pub fn write_text_vectors<W: Write>(store: &CorpusStore, e: &EmbeddingMatrix, mut out: W) -> Result<()> {
    for i in e.present_indices() {
        let id = store.external_id(i).ok_or(hybrec_core::Error::OutOfRange { index: i, len: store.len() })?;
        let vals: Vec<String> = e.row(i).iter().map(|x| x.to_string()).collect();
        writeln!(out, "{id}\t{}", vals.join(","))?;
    }
    Ok(())
}

pub const INDEX_VERSION: u32 = 1;

/// `ANN1`: version, source digest, parameters, node ids, and per-node
/// adjacency by level. Vectors are not stored; they come from the embedding.
pub fn write_index<W: Write>(p: &AnnParts, mut out: W) -> Result<()> {
    out.write_all(b"ANN1")?;
    out.write_all(&INDEX_VERSION.to_le_bytes())?;
    out.write_all(&p.source_digest)?;
    for v in [p.dim, p.params.max_degree, p.params.ef_construction] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    out.write_all(&p.params.seed.to_le_bytes())?;
    out.write_all(&p.entry.to_le_bytes())?;
    out.write_all(&(p.max_level as u64).to_le_bytes())?;
    out.write_all(&(p.ids.len() as u64).to_le_bytes())?;
    put_u32s(&mut out, &p.ids)?;
    for node in &p.links {
        out.write_all(&(node.len() as u32).to_le_bytes())?;
        for level in node {
            out.write_all(&(level.len() as u32).to_le_bytes())?;
            put_u32s(&mut out, level)?;
        }
    }
    Ok(())
}

pub fn read_index<R: Read>(input: R) -> Result<AnnParts> {
    let mut r = BinReader { inner: input, what: "ANN1 index" };
    r.magic(b"ANN1")?;
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(Error::format("ANN1 index", format!("unsupported version {version}")));
    }
    let source_digest = r.exact::<32>()?;
    let dim = r.len(1 << 24)?;
    let max_degree = r.len(1 << 16)?;
    let ef_construction = r.len(1 << 24)?;
    let seed = r.u64()?;
    let entry = r.u32()?;
    let max_level = r.len(64)?;
    let n = r.len(1 << 32)?;
    let ids = r.u32s(n)?;
    let mut links = Vec::with_capacity(n);
    for _ in 0..n {
        let levels = r.u32()? as usize;
        if levels > max_level + 1 {
            return Err(Error::format("ANN1 index", "node level above index maximum"));
        }
        let mut node = Vec::with_capacity(levels);
        for _ in 0..levels {
            let k = r.u32()? as usize;
            if k > 2 * max_degree {
                return Err(Error::format("ANN1 index", "adjacency list over capacity"));
            }
            node.push(r.u32s(k)?);
        }
        links.push(node);
    }
    if !r.at_end()? {
        return Err(Error::format("ANN1 index", "trailing bytes"));
    }
    Ok(AnnParts {
        dim,
        params: AnnParams { max_degree, ef_construction, seed },
        source_digest,
        ids,
        links,
        entry,
        max_level,
    })
}

fn id_of(store: &CorpusStore, i: usize) -> Result<&str> {
    store
        .external_id(i)
        .ok_or_else(|| hybrec_core::Error::OutOfRange { index: i, len: store.len() }.into())
}

/// `method,rank,paper_id,citations,year`; unknown years are left empty.
pub fn write_priors_csv<W: Write>(store: &CorpusStore, rows: &[PriorsRow], mut out: W) -> Result<()> {
    writeln!(out, "method,rank,paper_id,citations,year")?;
    for r in rows {
        let year = r.year.map(|y| y.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", r.method, r.rank, csv_field(id_of(store, r.paper)?), r.citations, year)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Which method's score a curve CSV reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMethod {
    Gb,
    Cbf,
}

/// `t,h,auc,n_pairs,excluded`. Cells without a score for the method are
/// skipped.
pub fn write_curve_csv<W: Write>(cells: &[CellResult], method: CurveMethod, mut out: W) -> Result<()> {
    writeln!(out, "t,h,auc,n_pairs,excluded")?;
    for c in cells {
        let s = match method {
            CurveMethod::Gb => Some(c.gb),
            CurveMethod::Cbf => c.cbf,
        };
        if let Some(s) = s {
            writeln!(out, "{},{},{:.6},{},{}", c.t, c.h, s.auc, s.n_pairs, s.excluded)?;
        }
    }
    Ok(())
}

/// `bin_lo,bin_hi,count`.
pub fn write_histogram_csv<W: Write>(h: &CosineHistogram, mut out: W) -> Result<()> {
    writeln!(out, "bin_lo,bin_hi,count")?;
    for (b, c) in h.counts.iter().enumerate() {
        writeln!(out, "{:.4},{:.4},{c}", h.edge(b), h.edge(b + 1))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagJson {
    pub a: String,
    pub b: String,
    #[serde(rename = "contentCosine")]
    pub content_cosine: Option<f64>,
    #[serde(rename = "graphCosine")]
    pub graph_cosine: Option<f64>,
    pub reason: String,
}

pub fn write_flags<W: Write>(store: &CorpusStore, flags: &[PairFlag], mut out: W) -> Result<()> {
    for f in flags {
        let j = FlagJson {
            a: id_of(store, f.a)?.to_string(),
            b: id_of(store, f.b)?.to_string(),
            content_cosine: f.content_cosine.is_finite().then_some(f.content_cosine),
            graph_cosine: f.graph_cosine,
            reason: f.reason.as_str().to_string(),
        };
        serde_json::to_writer(&mut out, &j)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJson {
    pub a: String,
    pub b: String,
    pub hop: u8,
    pub label: u8,
}

/// Test pairs as JSONL for cross-implementation comparison.
pub fn write_pairs<W: Write>(store: &CorpusStore, pairs: &HopPairSet, mut out: W) -> Result<()> {
    for p in &pairs.pairs {
        let j = PairJson {
            a: id_of(store, p.a)?.to_string(),
            b: id_of(store, p.b)?.to_string(),
            hop: p.hop,
            label: p.label() as u8,
        };
        serde_json::to_writer(&mut out, &j)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
