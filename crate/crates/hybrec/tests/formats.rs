use hybrec::formats::{
    parse_records, read_embedding, read_graph, read_index, write_embedding, write_graph, write_index, write_records,
};
use hybrec_core::ann::{AnnIndex, AnnParams};
use hybrec_core::synth::random_unit_vectors;
use hybrec_core::{CitationGraph, CorpusStore, EmbeddingMatrix, Method, PaperRecord};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = PaperRecord> {
    (
        "[a-z]{1,6}",
        "\\PC{0,20}",
        proptest::option::of("\\PC{0,30}"),
        proptest::option::of(1900i32..2030),
        proptest::collection::vec("[a-z]{1,6}", 0..4),
        0u64..1000,
        proptest::collection::vec("[A-Za-z ]{1,10}", 0..3),
    )
        .prop_map(|(id, title, abs, year, references, citation_count, authors)| PaperRecord {
            external_id: id,
            title,
            abstract_text: abs,
            year,
            references,
            citation_count,
            authors,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_round_trip(n in 1usize..40, edges in proptest::collection::vec((0u32..40, 0u32..40), 0..120)) {
        let edges: Vec<(u32, u32)> = edges.into_iter().filter(|&(a, b)| (a as usize) < n && (b as usize) < n && a != b).collect();
        let g = CitationGraph::from_edges(n, edges).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        prop_assert_eq!(read_graph(&buf[..]).unwrap(), g);
    }

    #[test]
    fn embedding_round_trip(n in 1usize..30, d in 1usize..9, seed in any::<u64>(), missing in proptest::collection::vec(any::<bool>(), 30), built_at in any::<u64>()) {
        let miss: Vec<usize> = (0..n).filter(|&i| missing[i]).collect();
        let mut e = EmbeddingMatrix::from_rows(n, d, random_unit_vectors(n, d, seed), &miss, Method::Cbf).unwrap();
        if let Some(&m) = miss.first() {
            e = e.with_imputed(&[(m, vec![0.5; d])]).unwrap();
        }
        e.built_at = built_at;
        e.source_digest = [seed as u8; 32];
        let mut buf = Vec::new();
        write_embedding(&e, &mut buf).unwrap();
        prop_assert_eq!(read_embedding(&buf[..]).unwrap(), e);
    }

    #[test]
    fn records_round_trip(recs in proptest::collection::vec(record(), 0..12)) {
        let (store, _) = CorpusStore::from_records(recs.into_iter().map(|r| (None, r)));
        let mut buf = Vec::new();
        write_records(&store, &mut buf).unwrap();
        let back = parse_records(&buf[..]).unwrap();
        prop_assert!(back.issues.is_empty());
        prop_assert_eq!(back.store.records(), store.records());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn index_round_trip(n in 1usize..80, seed in any::<u64>()) {
        let e = EmbeddingMatrix::from_rows(n, 6, random_unit_vectors(n, 6, seed), &[], Method::Gb).unwrap();
        let idx = AnnIndex::build(&e, AnnParams { seed, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_index(&idx.to_parts(), &mut buf).unwrap();
        let parts = read_index(&buf[..]).unwrap();
        prop_assert_eq!(&parts, &idx.to_parts());
        let back = AnnIndex::from_parts(parts, &e).unwrap();
        let q = e.row(0);
        prop_assert_eq!(back.query(q, 5, 50).unwrap(), idx.query(q, 5, 50).unwrap());
    }
}

#[test]
fn index_rejects_other_embedding() {
    let e = EmbeddingMatrix::from_rows(20, 4, random_unit_vectors(20, 4, 1), &[], Method::Gb).unwrap();
    let other = EmbeddingMatrix::from_rows(20, 4, random_unit_vectors(20, 4, 2), &[], Method::Gb).unwrap();
    let idx = AnnIndex::build(&e, AnnParams::default()).unwrap();
    assert!(AnnIndex::from_parts(idx.to_parts(), &other).is_err());
}
