//! The data directory. Every artifact is written once, atomically, next to
//! a `.sha256` sidecar; rewriting identical bytes is a no-op and rewriting
//! different bytes is refused.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use hybrec_core::ann::{AnnIndex, AnnParams};
use hybrec_core::recommend::EmbeddingSide;
use hybrec_core::{CitationGraph, CorpusStore, EmbeddingMatrix, Method};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats;

pub const CORPUS: &str = "corpus.jsonl";
pub const ID_MAP: &str = "id_map.tsv";
pub const GRAPH: &str = "graph.csr";

pub fn embedding_file(method: Method) -> String {
    format!("{}.emb", method.as_str())
}

pub fn index_file(method: Method) -> String {
    format!("{}.idx", method.as_str())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Created,
    Unchanged,
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Writes `bytes` to `name` and its sidecar. Fails with `Conflict` when
    /// the file already holds different bytes.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<WriteOutcome> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.path(name);
        let digest = sha256_hex(bytes);
        if path.exists() {
            let old = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if old != bytes {
                return Err(Error::Conflict(path));
            }
            self.write_sidecar(name, &digest)?;
            return Ok(WriteOutcome::Unchanged);
        }
        let tmp = self.path(&format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        self.write_sidecar(name, &digest)?;
        log::info!("wrote {} ({} bytes, sha256 {})", path.display(), bytes.len(), &digest[..12]);
        Ok(WriteOutcome::Created)
    }

    fn write_sidecar(&self, name: &str, digest: &str) -> Result<()> {
        let side = self.path(&format!("{name}.sha256"));
        let line = format!("{digest}  {name}\n");
        if fs::read_to_string(&side).ok().as_deref() == Some(line.as_str()) {
            return Ok(());
        }
        fs::write(&side, line).map_err(|e| Error::io(&side, e))
    }

    /// Serializes with `f` and writes the result.
    pub fn write_with(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<WriteOutcome> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    /// Reads `name`, checking it against its sidecar when one exists.
    pub fn read(&self, name: &str) -> Result<Vec<u8>> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let side = self.path(&format!("{name}.sha256"));
        if let Ok(line) = fs::read_to_string(&side) {
            let want = line.split_whitespace().next().unwrap_or("");
            if want != sha256_hex(&bytes) {
                return Err(Error::Tampered { path });
            }
        }
        Ok(bytes)
    }

    pub fn load_corpus(&self) -> Result<CorpusStore> {
        let bytes = self.read(CORPUS)?;
        let parsed = formats::parse_records(BufReader::new(&bytes[..]))?;
        if !parsed.issues.is_empty() {
            return Err(Error::format("corpus artifact", format!("{} issues in a stored corpus", parsed.issues.len())));
        }
        Ok(parsed.store)
    }

    pub fn load_graph(&self) -> Result<CitationGraph> {
        formats::read_graph(&self.read(GRAPH)?[..])
    }

    pub fn load_embedding(&self, method: Method) -> Result<EmbeddingMatrix> {
        formats::read_embedding(&self.read(&embedding_file(method))?[..])
    }

    pub fn load_embedding_named(&self, name: &str) -> Result<EmbeddingMatrix> {
        formats::read_embedding(&self.read(name)?[..])
    }

    /// Loads the stored index for `emb`, verifying its digest. Without a
    /// stored index one is built in memory.
    pub fn load_index(&self, method: Method, emb: &EmbeddingMatrix, fallback: AnnParams) -> Result<AnnIndex> {
        let name = index_file(method);
        if !self.exists(&name) {
            log::warn!("no {name}; building an in-memory index");
            return Ok(AnnIndex::build(emb, fallback)?);
        }
        let parts = formats::read_index(&self.read(&name)?[..])?;
        Ok(AnnIndex::from_parts(parts, emb)?)
    }

    /// Embedding plus index for `method`, or `None` when no embedding exists.
    /// An embedding that does not cover the corpus is an error.
    pub fn load_side(&self, method: Method, n: usize, fallback: AnnParams) -> Result<Option<EmbeddingSide>> {
        if !self.exists(&embedding_file(method)) {
            return Ok(None);
        }
        let emb = self.load_embedding(method)?;
        if emb.n() != n {
            return Err(Error::format("embedding artifact", format!("{} rows for a corpus of {n}", emb.n())));
        }
        if emb.present_count() == 0 {
            log::warn!("{} embedding has no vectors", method);
            return Ok(None);
        }
        let index = self.load_index(method, &emb, fallback)?;
        Ok(Some(EmbeddingSide { emb, index }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_once_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let d = DataDir::new(dir.path());
        assert_eq!(d.write("a.bin", b"xyz").unwrap(), WriteOutcome::Created);
        assert_eq!(d.write("a.bin", b"xyz").unwrap(), WriteOutcome::Unchanged);
        assert!(matches!(d.write("a.bin", b"xy"), Err(Error::Conflict(_))));
        assert_eq!(d.read("a.bin").unwrap(), b"xyz");
        let side = fs::read_to_string(dir.path().join("a.bin.sha256")).unwrap();
        assert!(side.starts_with(&sha256_hex(b"xyz")));
    }

    #[test]
    fn tampering_detected() {
        let dir = tempfile::tempdir().unwrap();
        let d = DataDir::new(dir.path());
        d.write("a.bin", b"xyz").unwrap();
        fs::write(dir.path().join("a.bin"), b"xyw").unwrap();
        assert!(matches!(d.read("a.bin"), Err(Error::Tampered { .. })));
        assert!(matches!(d.read("nope"), Err(Error::MissingArtifact(_))));
    }
}
