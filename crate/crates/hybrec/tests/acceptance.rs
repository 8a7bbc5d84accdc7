//! Acceptance suite. Runs every check, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use hybrec::api::{RecommendationListJson, RecommendationsResponse};
use hybrec::artifacts::DataDir;
use hybrec::cli;
use hybrec::service;
use hybrec_core::ann::{brute_force_knn, recall_at_k, AnnIndex, AnnParams};
use hybrec_core::cbfembed::{embed_corpus, HashEmbedderConfig};
use hybrec_core::embedding::cosine;
use hybrec_core::eval::{auc, horizon_sweep, scaling_curve, CellOptions};
use hybrec_core::gbembed::transition_target;
use hybrec_core::graph::{assign_bins, year_bins};
use hybrec_core::linalg::{randomized_svd, RsvdParams, SparseMatrix};
use hybrec_core::recommend::{priors_profile, EmbeddingSide, Recommender};
use hybrec_core::robustness::{
    detect_duplicates, discrepancy_flags, impute_better_together, impute_centroid, top1_cosine_histogram,
    DiscrepancyParams, DuplicateParams, FlagReason,
};
use hybrec_core::synth::{generate, plant_duplicates, random_graph, random_unit_vectors, tiny5, CopyLinks, SynthConfig};
use hybrec_core::{build_graph, coverage_stats, embed_graph, CitationGraph, EmbeddingMatrix, Method, SpectralParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_ann_recall() -> Check {
    let (n, d) = (10_000, 64);
    let emb = EmbeddingMatrix::from_rows(n, d, random_unit_vectors(n, d, 11), &[], Method::Gb).map_err(|e| e.to_string())?;
    let qdata = random_unit_vectors(1000, d, 12);
    let queries: Vec<&[f32]> = qdata.chunks(d).collect();
    let index = AnnIndex::build(&emb, AnnParams::default()).map_err(|e| e.to_string())?;
    let recall = recall_at_k(&index, &emb, &queries, 10, 100).map_err(|e| e.to_string())?;
    let deterministic = queries
        .iter()
        .take(50)
        .all(|q| brute_force_knn(&emb, q, 10).unwrap() == brute_force_knn(&emb, q, 10).unwrap());
    ensure(recall >= 0.95 && deterministic, format!("recall@10 {recall:.4} (>= 0.95), brute force deterministic: {deterministic}"))
}

fn exact_tail_error(a: &SparseMatrix, rank: usize) -> f64 {
    let dense = a.to_dense_rows();
    let m = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| dense[i][j]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s[rank..].iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn c2_svd_quality() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let (n, edges) = random_graph(200, 1200, 500 + seed);
        let g = CitationGraph::from_edges(n, edges.into_iter().filter(|(a, b)| a != b)).map_err(|e| e.to_string())?;
        let a = transition_target(&g.undirected());
        let svd = randomized_svd(&a, RsvdParams { rank: 16, oversample: 10, power_iters: 2, seed }).map_err(|e| e.to_string())?;
        worst = worst.max(svd.residual_frobenius(&a) / exact_tail_error(&a, 16));
    }
    ensure(worst <= 1.05, format!("worst error ratio {worst:.4} over 20 matrices (<= 1.05)"))
}

fn nondecreasing(xs: &[f64], eps: f64) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0] - eps)
}

fn nonincreasing(xs: &[f64], eps: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + eps)
}

fn c3_hop_task() -> Check {
    let c = generate(&SynthConfig { n: 50_000, topics: 200, refs_per_paper: 10, p_copy: 0.5, seed: 1, ..Default::default() });
    let g = build_graph(&c.store);
    let bins = assign_bins(&c.store, 5, 0).map_err(|e| e.to_string())?;
    let opts = CellOptions { seed: 1, spectral: SpectralParams::default(), leave_partner_out: true };
    // Bin 4 is held for evaluation; t = 1..4 trains on 25/50/75/100% of the rest.
    let curve = scaling_curve(&g, &bins, &[1, 2, 3, 4], 0, Some(4), 500, &opts, None).map_err(|e| e.to_string())?;
    let aucs: Vec<f64> = curve.iter().map(|p| p.gb.auc).collect();
    let full = *aucs.last().unwrap();
    ensure(
        full >= 0.85 && nondecreasing(&aucs, 0.02),
        format!("AUC by training fraction {:?}; full {full:.4} (>= 0.85), non-decreasing within 0.02", rounded(&aucs)),
    )
}

fn rounded(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| format!("{x:.3}")).collect()
}

fn c4_horizon() -> Check {
    let hs = [0, 1, 2, 3, 4];
    let mut sums = vec![0.0; hs.len()];
    let mut per_seed = Vec::new();
    for seed in 1..=3u64 {
        let c = generate(&SynthConfig {
            n: 20_000,
            topics: 200,
            refs_per_paper: 10,
            p_copy: 0.5,
            p_recent: 0.8,
            recent_window: 2000,
            seed,
            ..Default::default()
        });
        let g = build_graph(&c.store);
        let bins = year_bins(&c.store, 10).map_err(|e| e.to_string())?;
        let opts = CellOptions { seed, spectral: SpectralParams::default(), leave_partner_out: true };
        let curve = horizon_sweep(&g, &bins, 5, &hs, 300, &opts, None).map_err(|e| e.to_string())?;
        let aucs: Vec<f64> = curve.iter().map(|p| p.gb.auc).collect();
        for (s, a) in sums.iter_mut().zip(&aucs) {
            *s += a;
        }
        per_seed.push(aucs);
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / 3.0).collect();
    let ends_ok = per_seed.iter().all(|a| a[0] >= a[a.len() - 1] - 0.02);
    ensure(
        ends_ok && nonincreasing(&mean, 0.02),
        format!("mean AUC over h=0..4 {:?}; AUC(0) >= AUC(max) - 0.02 for every seed: {ends_ok}", rounded(&mean)),
    )
}

struct Planted {
    base: hybrec_core::synth::SynthCorpus,
    corpus: hybrec_core::synth::SynthCorpus,
    graph: CitationGraph,
    cbf: EmbeddingMatrix,
    gb: EmbeddingMatrix,
    cbf_index: AnnIndex,
}

fn planted() -> Planted {
    let base = generate(&SynthConfig { n: 10_000, topics: 200, refs_per_paper: 10, p_copy: 0.5, seed: 7, ..Default::default() });
    let corpus = plant_duplicates(&base, 100, CopyLinks::Orphan(2), 8);
    let graph = build_graph(&corpus.store);
    let cbf = embed_corpus(&corpus.store, &HashEmbedderConfig::default()).unwrap();
    let (gb, _) = embed_graph(&graph, &SpectralParams::default()).unwrap();
    let cbf_index = AnnIndex::build(&cbf, AnnParams::default()).unwrap();
    Planted { base, corpus, graph, cbf, gb, cbf_index }
}

fn c5_spike(p: &Planted) -> Check {
    let sample: Vec<usize> = p.cbf_index.indexed().collect();
    let h = top1_cosine_histogram(&p.cbf_index, &sample, 40, 100).map_err(|e| e.to_string())?;
    let injected = 2.0 * p.corpus.duplicates.len() as f64 / sample.len() as f64;
    let flags = detect_duplicates(&p.cbf_index, Some(&p.gb), DuplicateParams::default()).map_err(|e| e.to_string())?;
    let truth: BTreeSet<(usize, usize)> = p.corpus.duplicates.iter().copied().collect();
    let tp = flags.iter().filter(|f| truth.contains(&(f.a, f.b))).count();
    let precision = if flags.is_empty() { 0.0 } else { tp as f64 / flags.len() as f64 };
    ensure(
        (h.high_fraction - injected).abs() <= 0.01 && precision >= 0.99,
        format!(
            "fraction >= 0.99 is {:.4} vs injected {injected:.4} (+-0.01); duplicate precision {precision:.4} ({tp}/{})",
            h.high_fraction,
            flags.len()
        ),
    )
}

fn c6_discrepancy(p: &Planted) -> Check {
    let candidates = detect_duplicates(&p.cbf_index, None, DuplicateParams::default()).map_err(|e| e.to_string())?;
    let sample: Vec<(usize, usize)> = candidates.iter().map(|f| (f.a, f.b)).collect();
    let rep = discrepancy_flags(&p.cbf, &p.gb, DiscrepancyParams::default(), &sample).map_err(|e| e.to_string())?;
    let truth: BTreeSet<(usize, usize)> = p.corpus.duplicates.iter().copied().collect();
    let hit = rep
        .flags
        .iter()
        .filter(|f| f.reason == FlagReason::Discrepancy && truth.contains(&(f.a, f.b)))
        .count();
    let recall = hit as f64 / truth.len() as f64;
    ensure(recall >= 0.9, format!("discrepancy recall {recall:.3} over {} planted pairs (>= 0.9)", truth.len()))
}

fn c7_imputation(p: &Planted) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n_base = p.base.store.len();
    let eligible: Vec<usize> = (0..n_base).filter(|&i| p.graph.out_degree(i) >= 3 && !p.cbf.is_missing(i)).collect();
    let held: Vec<usize> = eligible.iter().copied().filter(|_| rng.random_bool(0.05)).collect();
    let hidden = p.cbf.with_hidden(&held);
    let donor_index = AnnIndex::build(&p.gb, AnnParams::default()).map_err(|e| e.to_string())?;
    let (mut sc, mut sb, mut sr) = (Vec::new(), Vec::new(), Vec::new());
    for &i in &held {
        let truth = p.cbf.row(i);
        if let Ok(v) = impute_centroid(i, &p.graph, &hidden) {
            sc.push(cosine(&v, truth) as f64);
        }
        if let Ok(v) = impute_better_together(i, &p.gb, &donor_index, &hidden, 10, 100) {
            sb.push(cosine(&v, truth) as f64);
        }
        let mut r = rng.random_range(0..p.cbf.n());
        while r == i || p.cbf.is_missing(r) {
            r = rng.random_range(0..p.cbf.n());
        }
        sr.push(cosine(truth, p.cbf.row(r)) as f64);
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (c, b, r) = (mean(&sc), mean(&sb), mean(&sr));
    ensure(
        c > r + 0.1 && b > r + 0.1,
        format!(
            "held out {}; mean cosine centroid {c:.3} ({}), better-together {b:.3} ({}), random {r:.3}; margin 0.1",
            held.len(),
            sc.len(),
            sb.len()
        ),
    )
}

fn c8_priors(p: &Planted) -> Check {
    let store = &p.base.store;
    let g = build_graph(store);
    let cbf = embed_corpus(store, &HashEmbedderConfig::default()).map_err(|e| e.to_string())?;
    let (gb, _) = embed_graph(&g, &SpectralParams::default()).map_err(|e| e.to_string())?;
    let rec = Recommender::new(
        Some(EmbeddingSide::build(cbf, AnnParams::default()).map_err(|e| e.to_string())?),
        Some(EmbeddingSide::build(gb, AnnParams::default()).map_err(|e| e.to_string())?),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lists = Vec::new();
    while lists.len() < 200 {
        let q = rng.random_range(0..store.len());
        if rec.answers(q, Method::Cbf) && rec.answers(q, Method::Gb) {
            lists.push(rec.papers_like_this(q, Method::Cbf, 10).map_err(|e| e.to_string())?);
            lists.push(rec.papers_like_this(q, Method::Gb, 10).map_err(|e| e.to_string())?);
        }
    }
    let rep = priors_profile(&lists, store, 10).map_err(|e| e.to_string())?;
    let get = |m| rep.method(m).ok_or_else(|| format!("no {m:?} rows"));
    let (c, g) = (get(Method::Cbf)?, get(Method::Gb)?);
    let (cc, gc) = (c.citations.unwrap().mean, g.citations.unwrap().mean);
    let (cy, gy) = (c.years.unwrap().mean, g.years.unwrap().mean);
    ensure(
        gc >= cc && gy <= cy,
        format!("100 queries: mean citations gb {gc:.2} vs cbf {cc:.2}; mean year gb {gy:.1} vs cbf {cy:.1}"),
    )
}

fn c9_coverage() -> Check {
    let store = tiny5();
    let g = build_graph(&store);
    let s = coverage_stats(&store, &g);
    let (gb, _) = embed_graph(&g, &SpectralParams { dim: 3, seed: 1, ..Default::default() }).map_err(|e| e.to_string())?;
    let cbf = embed_corpus(&store, &HashEmbedderConfig::default()).map_err(|e| e.to_string())?;
    let rec = Recommender::new(
        Some(EmbeddingSide::build(cbf, AnnParams::default()).map_err(|e| e.to_string())?),
        Some(EmbeddingSide::build(gb, AnnParams::default()).map_err(|e| e.to_string())?),
    );
    let answered = |m| (0..5).filter(|&q| rec.papers_like_this(q, m, 2).is_ok()).count();
    let (c, gbn, h) = (answered(Method::Cbf), answered(Method::Gb), answered(Method::Hybrid));
    ensure(
        s.n_both == 3 && s.fraction_both == 0.6 && c == 4 && gbn == 4 && h == 5,
        format!("n_both={} ({:.2}); answered cbf {c}, gb {gbn}, hybrid {h}", s.n_both, s.fraction_both),
    )
}

fn c10_time_invariance() -> Check {
    let c = generate(&SynthConfig { n: 600, seed: 21, ..Default::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let grown = c.store.map_records(|i, r| {
        if i > 100 && rng.random_bool(0.3) {
            let j = rng.random_range(0..i);
            r.references.push(c.store.external_id(j).unwrap().to_string());
        }
    });
    let cfg = HashEmbedderConfig::default();
    let before = embed_corpus(&c.store, &cfg).map_err(|e| e.to_string())?;
    let after = embed_corpus(&grown, &cfg).map_err(|e| e.to_string())?;
    let cbf_same = before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits())
        && before.data().len() == after.data().len();
    let p = SpectralParams { dim: 32, seed: 4, ..Default::default() };
    let (g0, _) = embed_graph(&build_graph(&c.store), &p).map_err(|e| e.to_string())?;
    let (g1, _) = embed_graph(&build_graph(&grown), &p).map_err(|e| e.to_string())?;
    let changed = (0..g0.n())
        .filter(|&i| !g0.is_missing(i) && !g1.is_missing(i))
        .filter(|&i| (cosine(g0.row(i), g1.row(i)) as f64) < 1.0 - 1e-6)
        .count();
    ensure(cbf_same && changed >= 1, format!("cbf bitwise identical: {cbf_same}; gb rows changed: {changed}"))
}

fn c11_auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    // Scores on a coarse grid so ties occur.
    let scores: Vec<f64> = (0..1000).map(|_| (rng.random_range(0..200) as f64) / 200.0).collect();
    let labels: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.4)).collect();
    let (mut wins, mut pos, mut neg) = (0.0, 0.0, 0.0);
    for i in 0..1000 {
        if labels[i] {
            pos += 1.0;
        } else {
            neg += 1.0;
        }
        for j in 0..1000 {
            if labels[i] && !labels[j] {
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    let brute = wins / (pos * neg);
    let ours = auc(&scores, &labels).map_err(|e| e.to_string())?;
    ensure((ours - brute).abs() <= 1e-9, format!("auc {ours:.12} vs brute force {brute:.12}"))
}

fn run_cli(args: &[String]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["hybrec".to_string()];
    argv.extend_from_slice(args);
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned())
}

fn c12_service_cli() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let corpus = dir.path().join("corpus.jsonl");
    let c = generate(&SynthConfig { n: 2000, p_no_abstract: 0.05, seed: 41, ..Default::default() });
    let mut buf = Vec::new();
    hybrec::formats::write_records(&c.store, &mut buf).map_err(|e| e.to_string())?;
    std::fs::write(&corpus, buf).map_err(|e| e.to_string())?;
    let d = data.to_string_lossy().to_string();
    let steps: [&[&str]; 6] = [
        &["ingest", &corpus.to_string_lossy()],
        &["graph"],
        &["embed-gb", "--dim", "32"],
        &["embed-cbf"],
        &["index", "--method", "gb"],
        &["index", "--method", "cbf"],
    ];
    for s in steps {
        let mut a = vec!["--data-dir".to_string(), d.clone()];
        a.extend(s.iter().map(|x| x.to_string()));
        let (code, _) = run_cli(&a);
        if code != 0 {
            return Err(format!("cli step {s:?} exited {code}"));
        }
    }
    let state = Arc::new(cli::load_service_state(&DataDir::new(&data), AnnParams::default(), 100).map_err(|e| e.to_string())?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    rt.spawn(async move { axum::serve(listener, service::router(state)).await });
    let client = reqwest::Client::new();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let methods = ["hybrid", "cbf", "gb"];
    let (mut equal, mut both_failed) = (0, 0);
    for k in 0..50 {
        let id = c.store.external_id(rng.random_range(0..c.store.len())).unwrap().to_string();
        let method = methods[k % 3];
        let url = format!("http://{addr}/recommendations/v1/papers/forpaper/{id}?method={method}&limit=10");
        let (status, body) = rt
            .block_on(async {
                let r = client.get(&url).send().await?;
                let s = r.status().as_u16();
                Ok::<_, reqwest::Error>((s, r.text().await?))
            })
            .map_err(|e| e.to_string())?;
        let (code, out) = run_cli(&["--data-dir".into(), d.clone(), "recommend".into(), "--paper".into(), id.clone(), "--method".into(), method.into(), "-k".into(), "10".into()]);
        match (status, code) {
            (200, 0) => {
                let s: RecommendationsResponse = serde_json::from_str(&body).map_err(|e| e.to_string())?;
                let c: RecommendationListJson = serde_json::from_str(&out).map_err(|e| e.to_string())?;
                if s.recommended_papers != c.recommended_papers {
                    return Err(format!("{id} {method}: service and cli lists differ"));
                }
                equal += 1;
            }
            (422, 1) => both_failed += 1,
            other => return Err(format!("{id} {method}: service status / cli exit {other:?}")),
        }
    }
    ensure(equal > 0, format!("50 queries: {equal} identical lists, {both_failed} missing-vector errors on both"))
}

fn main() {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    };
    report("1 ann oracle equivalence", &mut c1_ann_recall);
    report("2 svd quality", &mut c2_svd_quality);
    report("3 hop task scaling", &mut c3_hop_task);
    report("4 horizon degradation", &mut c4_horizon);
    let p = planted();
    report("5 corner-case spike", &mut || c5_spike(&p));
    report("6 discrepancy detection", &mut || c6_discrepancy(&p));
    report("7 imputation beats random", &mut || c7_imputation(&p));
    report("8 priors direction", &mut || c8_priors(&p));
    report("9 coverage arithmetic", &mut c9_coverage);
    report("10 time invariance", &mut c10_time_invariance);
    report("11 auc oracle", &mut c11_auc_oracle);
    report("12 service/cli consistency", &mut c12_service_cli);
    println!("acceptance: {} of 12 passed in {:.1}s", 12 - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
