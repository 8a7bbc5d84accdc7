use std::path::{Path, PathBuf};

use hybrec::api::RecommendationListJson;
use hybrec::cli::run;
use hybrec_core::synth::{generate, SynthConfig};

const TINY5: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/tiny5.jsonl");

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn hybrec(data: &Path, args: &[&str]) -> Out {
    let mut argv = vec!["hybrec".to_string(), "--data-dir".into(), data.to_string_lossy().into_owned()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    Out { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn ok(data: &Path, args: &[&str]) -> String {
    let o = hybrec(data, args);
    assert_eq!(o.code, 0, "{args:?}: {}", o.stderr);
    o.stdout
}

fn tiny5_pipeline() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&data, &["ingest", TINY5]);
    ok(&data, &["graph"]);
    ok(&data, &["embed-gb", "--dim", "3"]);
    ok(&data, &["embed-cbf"]);
    ok(&data, &["index", "--method", "gb"]);
    ok(&data, &["index", "--method", "cbf"]);
    (dir, data)
}

#[test]
fn coverage_on_tiny5() {
    let (_d, data) = tiny5_pipeline();
    let s = ok(&data, &["stats", "--coverage"]);
    assert!(s.contains("n_both=3 fraction=0.60"), "{s}");
    let j: serde_json::Value = serde_json::from_str(&ok(&data, &["--format", "json", "stats"])).unwrap();
    assert_eq!(j["nBoth"], 3);
}

#[test]
fn recommend_gb_excludes_query() {
    let (_d, data) = tiny5_pipeline();
    let l: RecommendationListJson = serde_json::from_str(&ok(&data, &["recommend", "--paper", "P1", "--method", "gb", "-k", "2"])).unwrap();
    assert_eq!(l.query, "P1");
    assert_eq!(l.method, "gb");
    assert_eq!(l.recommended_papers.len(), 2);
    assert!(l.recommended_papers.iter().all(|p| p.paper_id != "P1"));
}

#[test]
fn hybrid_answers_every_tiny5_paper() {
    let (_d, data) = tiny5_pipeline();
    for p in ["P0", "P1", "P2", "P3", "P4"] {
        let l: RecommendationListJson = serde_json::from_str(&ok(&data, &["recommend", "--paper", p])).unwrap();
        assert_eq!(l.method, "hybrid");
        assert!(!l.recommended_papers.is_empty(), "{p}");
    }
    let o = hybrec(&data, &["recommend", "--paper", "P4", "--method", "gb"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("no vector"), "{}", o.stderr);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(hybrec(&data, &["no-such-command"]).code, 2);
    assert_eq!(hybrec(&data, &["recommend"]).code, 2);
    let help = hybrec(&data, &["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("recommend"));
    // Missing artifacts are an operational error.
    assert_eq!(hybrec(&data, &["graph"]).code, 1);
    ok(&data, &["ingest", TINY5]);
    assert_eq!(hybrec(&data, &["recommend", "--paper", "NOPE"]).code, 1);
}

#[test]
fn rerun_is_idempotent_and_conflicts_are_refused() {
    let (_d, data) = tiny5_pipeline();
    ok(&data, &["embed-gb", "--dim", "3"]);
    let o = hybrec(&data, &["--seed", "9", "embed-gb", "--dim", "3"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("already exists"), "{}", o.stderr);
}

#[test]
fn tampered_artifact_is_rejected() {
    let (_d, data) = tiny5_pipeline();
    let path = data.join("graph.csr");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let o = hybrec(&data, &["embed-gb", "--dim", "3"]);
    assert_eq!(o.code, 1);
}

#[test]
fn config_file_and_bad_keys() {
    let (d, data) = tiny5_pipeline();
    let cfg = d.path().join("hybrec.toml");
    std::fs::write(&cfg, "ef-search = 50\nseed = 0\n").unwrap();
    ok(&data, &["--config", cfg.to_str().unwrap(), "recommend", "--paper", "P2"]);
    std::fs::write(&cfg, "no-such-key = 1\n").unwrap();
    assert_eq!(hybrec(&data, &["--config", cfg.to_str().unwrap(), "stats"]).code, 2);
}

#[test]
fn fuse_stored_lists() {
    let (d, data) = tiny5_pipeline();
    let a = d.path().join("a.json");
    let b = d.path().join("b.json");
    std::fs::write(&a, ok(&data, &["recommend", "--paper", "P2", "--method", "cbf", "-k", "3"])).unwrap();
    std::fs::write(&b, ok(&data, &["recommend", "--paper", "P2", "--method", "gb", "-k", "3"])).unwrap();
    let f: RecommendationListJson = serde_json::from_str(&ok(&data, &["fuse", a.to_str().unwrap(), b.to_str().unwrap(), "-k", "3"])).unwrap();
    assert_eq!(f.method, "hybrid");
    assert!(f.recommended_papers.iter().all(|p| p.paper_id != "P2"));
    let direct: RecommendationListJson = serde_json::from_str(&ok(&data, &["recommend", "--paper", "P2", "-k", "3"])).unwrap();
    let ids = |l: &RecommendationListJson| l.recommended_papers.iter().map(|p| p.paper_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&f), ids(&direct));
}

#[test]
fn corners_impute_priors_write_artifacts() {
    let (_d, data) = tiny5_pipeline();
    let c: serde_json::Value = serde_json::from_str(&ok(&data, &["corners"])).unwrap();
    assert_eq!(c["sampled"], 4);
    assert!(Path::new(c["histogram"].as_str().unwrap()).exists());
    let i: serde_json::Value = serde_json::from_str(&ok(&data, &["impute", "--target", "gb"])).unwrap();
    // P4 cites nothing, so its graph vector cannot be imputed from references.
    assert_eq!(i["missingBefore"], 1);
    assert_eq!(i["unimputable"], 1);
    let p = ok(&data, &["--format", "csv", "priors", "--queries", "3", "-k", "2"]);
    assert!(p.starts_with("method,rank,paper_id,citations,year\n"), "{p}");
}

#[test]
fn eval_sweeps_write_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let corpus = dir.path().join("c.jsonl");
    let c = generate(&SynthConfig { n: 1500, refs_per_paper: 6, p_copy: 0.3, seed: 3, ..Default::default() });
    let mut buf = Vec::new();
    hybrec::formats::write_records(&c.store, &mut buf).unwrap();
    std::fs::write(&corpus, buf).unwrap();
    ok(&data, &["ingest", corpus.to_str().unwrap()]);
    ok(&data, &["graph"]);
    ok(&data, &["embed-cbf"]);
    let s = ok(&data, &["--threads", "2", "eval", "--scaling", "--t", "2,3", "--bins", "5", "--eval-bin", "4", "--k-pairs", "100", "--export-pairs"]);
    assert!(s.starts_with("scaling: t=2 h=0 gb="), "{s}");
    assert!(s.contains("cbf="), "{s}");
    let csv = std::fs::read_to_string(data.join("eval_scaling_b5_t2-3_h0_e4_k100_s0_gb.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,h,auc,n_pairs,excluded"));
    assert_eq!(csv.lines().count(), 3);
    let s = ok(&data, &["eval", "--scaling", "--t", "25,50,75,100", "--k-pairs", "100"]);
    assert!(s.starts_with("scaling: t=25 h=0 gb="), "{s}");
    assert!(s.contains("t=100 h=0 gb="), "{s}");
    let h = ok(&data, &["eval", "--horizon", "--t", "3", "--h", "0,1", "--bins", "6", "--k-pairs", "100"]);
    assert!(h.starts_with("horizon: t=3 h=0"), "{h}");
    // Evaluation bin past the last bin is a usage error.
    assert_eq!(hybrec(&data, &["eval", "--horizon", "--t", "3", "--h", "9", "--bins", "6"]).code, 2);
}
