//! Algorithmic core for hybrid academic-paper recommendation: content vectors
//! from titles and abstracts, spectral embeddings of the citation graph,
//! cosine nearest-neighbor retrieval, fusion, corner-case detection,
//! imputation of missing vectors, and hop-based link-prediction evaluation.
//!
//! The crate is `no_std` + `alloc`. The default `std` feature turns on
//! rayon-backed parallel kernels; results are identical either way.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ann;
pub mod cbfembed;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod gbembed;
pub mod graph;
pub mod linalg;
pub mod recommend;
pub mod robustness;
pub mod synth;

pub use corpus::{coverage_stats, CorpusStore, CoverageStats, PaperRecord};
pub use embedding::{EmbeddingMatrix, Method};
pub use error::{Error, Result};
pub use gbembed::{embed_graph, factorize, propagate, SpectralParams};
pub use graph::{build_graph, hop_distance, BinAssignment, CitationGraph};
