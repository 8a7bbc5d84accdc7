//! Citation prediction by cosine: hop-stratified pair sampling, AUC, and
//! sweeps over training-subgraph size and forecasting horizon.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{cosine, normalized_mean, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::gbembed::{embed_graph, SpectralParams};
use crate::graph::{induced_by_mask, BinAssignment, CitationGraph, HopSearch};

pub const MAX_HOP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopPair {
    pub a: usize,
    pub b: usize,
    /// Undirected shortest-path length, 1..=4.
    pub hop: u8,
}

impl HopPair {
    pub fn label(&self) -> bool {
        self.hop == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopPairSet {
    pub pairs: Vec<HopPair>,
    pub seed: u64,
    pub k_pairs: usize,
    pub source_digest: [u8; 32],
    /// Pairs requested but not found, per hop class 1..=4.
    pub shortfall: [usize; MAX_HOP],
}

impl HopPairSet {
    pub fn count(&self, hop: u8) -> usize {
        self.pairs.iter().filter(|p| p.hop == hop).count()
    }

    pub fn is_short(&self) -> bool {
        self.shortfall.iter().any(|&s| s > 0)
    }
}

/// `k_pairs` pairs per hop class over the whole graph.
pub fn sample_hop_pairs(graph: &CitationGraph, k_pairs: usize, seed: u64) -> Result<HopPairSet> {
    sample_hop_pairs_where(graph, k_pairs, seed, |_| true, |_| true)
}

/// Stratified rejection sampling: draw an eligible anchor, run BFS to depth
/// 4, and take one random eligible partner from each unfilled hop level.
/// Unordered pairs are never repeated. Classes that cannot be filled within
/// the draw budget are reported in `shortfall`.
pub fn sample_hop_pairs_where(
    graph: &CitationGraph,
    k_pairs: usize,
    seed: u64,
    anchor_ok: impl Fn(usize) -> bool,
    partner_ok: impl Fn(usize) -> bool,
) -> Result<HopPairSet> {
    if k_pairs == 0 {
        return Err(Error::InvalidArgument("k_pairs must be >= 1".into()));
    }
    let n = graph.node_count();
    let anchors: Vec<usize> = (0..n).filter(|&a| graph.total_degree(a) > 0 && anchor_ok(a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; MAX_HOP];
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    let mut search = HopSearch::new(n);
    let budget = 20 * k_pairs + 200;
    let mut draws = 0;
    let mut cands = Vec::new();
    while !anchors.is_empty() && draws < budget && counts.iter().any(|&c| c < k_pairs) {
        draws += 1;
        let a = anchors[rng.random_range(0..anchors.len())];
        let levels = search.levels(graph, a, MAX_HOP);
        for hop in 1..=MAX_HOP {
            if counts[hop - 1] >= k_pairs || hop >= levels.len() {
                continue;
            }
            cands.clear();
            cands.extend(levels[hop].iter().map(|&v| v as usize).filter(|&v| partner_ok(v)));
            if cands.is_empty() {
                continue;
            }
            let b = cands[rng.random_range(0..cands.len())];
            if seen.insert((a.min(b), a.max(b))) {
                pairs.push(HopPair { a, b, hop: hop as u8 });
                counts[hop - 1] += 1;
            }
        }
    }
    let mut shortfall = [0; MAX_HOP];
    for h in 0..MAX_HOP {
        shortfall[h] = k_pairs - counts[h];
    }
    Ok(HopPairSet { pairs, seed, k_pairs, source_digest: graph.digest(), shortfall })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredPairs {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// Pairs dropped because an endpoint has no vector.
    pub excluded: usize,
}

/// Cosine of each pair's rows; pairs touching the missing-set are excluded.
pub fn score_pairs(emb: &EmbeddingMatrix, pairs: &HopPairSet) -> ScoredPairs {
    score_pairs_by(pairs, |p| emb.vector(p.a).map(<[f32]>::to_vec), |b| emb.vector(b))
}

/// Like `score_pairs`, with caller-supplied vector lookups for each side.
pub fn score_pairs_by<'a>(
    pairs: &HopPairSet,
    anchor: impl Fn(&HopPair) -> Option<Vec<f32>>,
    partner: impl Fn(usize) -> Option<&'a [f32]>,
) -> ScoredPairs {
    let mut out = ScoredPairs::default();
    for p in &pairs.pairs {
        match (anchor(p), partner(p.b)) {
            (Some(u), Some(v)) => {
                out.scores.push(cosine(&u, v) as f64);
                out.labels.push(p.label());
            }
            _ => out.excluded += 1,
        }
    }
    out
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), got: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("pair scores"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counted half. Rank-sum computation with midranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scored(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Best accuracy of the rule `score ≥ threshold ⇒ positive`, with the
/// threshold achieving it.
pub fn accuracy_at_best_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    check_scored(scores, labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let neg_total = labels.iter().filter(|&&l| !l).count();
    // Threshold above every score: everything negative.
    let mut best = (neg_total as f64 / n as f64, f64::INFINITY);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let s = scores[order[i]];
        while i < n && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let acc = (tp + neg_total - fp) as f64 / n as f64;
        if acc > best.0 {
            best = (acc, s);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    pub auc: f64,
    pub accuracy: f64,
    pub n_pairs: usize,
    pub excluded: usize,
}

impl CellScore {
    pub fn from_scored(s: &ScoredPairs) -> Result<Self> {
        Ok(CellScore {
            auc: auc(&s.scores, &s.labels)?,
            accuracy: accuracy_at_best_threshold(&s.scores, &s.labels)?.0,
            n_pairs: s.scores.len(),
            excluded: s.excluded,
        })
    }
}

/// One evaluation cell: train on bins `0..t`, test on anchors in `eval_bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub t: u32,
    pub h: u32,
    pub eval_bin: u32,
    pub k_pairs: usize,
}

impl EvalConfig {
    pub fn validate(&self, n_bins: u32) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidArgument("t must be >= 1".into()));
        }
        if self.eval_bin < self.t {
            return Err(Error::InvalidArgument(alloc::format!(
                "eval bin {} lies inside the training bins 0..{}",
                self.eval_bin, self.t
            )));
        }
        if self.eval_bin >= n_bins {
            return Err(Error::InvalidArgument(alloc::format!(
                "eval bin {} beyond last bin {}",
                self.eval_bin,
                n_bins - 1
            )));
        }
        if self.k_pairs == 0 {
            return Err(Error::InvalidArgument("k_pairs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub seed: u64,
    pub spectral: SpectralParams,
    /// Build a positive pair's anchor vector without the partner itself.
    pub leave_partner_out: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions { seed: 0, spectral: SpectralParams::default(), leave_partner_out: true }
    }
}

/// Graph and (optionally) content scores on one shared pair set.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub t: u32,
    pub h: u32,
    /// `None` for the degenerate full-graph cell.
    pub eval_bin: Option<u32>,
    pub train_nodes: usize,
    pub pairs: HopPairSet,
    pub gb: CellScore,
    pub cbf: Option<CellScore>,
}

/// Embeds the subgraph induced by bins `0..t`. Anchors come from
/// `eval_bin`; an anchor's graph vector is the normalized mean of the
/// training rows of its full-graph neighbors. Partners are training nodes
/// with a row. Hops are measured on the full graph. Content scores, when
/// given, use each paper's own row on the same pairs.
pub fn evaluate_cell(
    graph: &CitationGraph,
    bins: &BinAssignment,
    cfg: &EvalConfig,
    opts: &CellOptions,
    cbf: Option<&EmbeddingMatrix>,
) -> Result<CellResult> {
    cfg.validate(bins.n_bins())?;
    if bins.labels().len() != graph.node_count() {
        return Err(Error::DimensionMismatch { expected: graph.node_count(), got: bins.labels().len() });
    }
    let mask: Vec<bool> = bins.labels().iter().map(|&l| l < cfg.t).collect();
    let (train, map) = induced_by_mask(graph, &mask);
    if train.edge_count() == 0 {
        return Err(Error::Empty("training subgraph has no edges"));
    }
    let spectral = SpectralParams { dim: opts.spectral.dim.min(train.node_count() - 1).max(1), ..opts.spectral };
    let (emb, _) = embed_graph(&train, &spectral)?;
    let row = |old: usize| map.to_new(old).and_then(|j| emb.vector(j));
    let anchor_ok = |a: usize| bins.label(a) == cfg.eval_bin && graph.undirected_neighbors(a).any(|v| row(v as usize).is_some());
    let pairs = sample_hop_pairs_where(graph, cfg.k_pairs, opts.seed, anchor_ok, |b| row(b).is_some())?;
    let anchor = |p: &HopPair| {
        let nbrs = graph
            .undirected_neighbors(p.a)
            .map(|v| v as usize)
            .filter(|&v| !(opts.leave_partner_out && v == p.b))
            .filter_map(row);
        normalized_mean(emb.dim(), nbrs)
    };
    let gb = CellScore::from_scored(&score_pairs_by(&pairs, anchor, row))?;
    let cbf = cbf.map(|c| CellScore::from_scored(&score_pairs(c, &pairs))).transpose()?;
    Ok(CellResult { t: cfg.t, h: cfg.h, eval_bin: Some(cfg.eval_bin), train_nodes: map.len(), pairs, gb, cbf })
}

/// Embeds the full graph and scores pairs sampled anywhere in it, each
/// paper by its own row.
pub fn evaluate_direct(
    graph: &CitationGraph,
    k_pairs: usize,
    opts: &CellOptions,
    cbf: Option<&EmbeddingMatrix>,
) -> Result<(HopPairSet, CellScore, Option<CellScore>)> {
    let (emb, _) = embed_graph(graph, &opts.spectral)?;
    let pairs = sample_hop_pairs_where(graph, k_pairs, opts.seed, |a| emb.vector(a).is_some(), |b| emb.vector(b).is_some())?;
    let gb = CellScore::from_scored(&score_pairs(&emb, &pairs))?;
    let cbf = cbf.map(|c| CellScore::from_scored(&score_pairs(c, &pairs))).transpose()?;
    Ok((pairs, gb, cbf))
}

/// Training-size sweep. Each `t` trains on bins `0..t` and evaluates on
/// `eval_bin`, or on bin `t + h` when none is fixed. `t == n_bins` with
/// `h == 0` and no fixed bin is the full-graph cell.
#[allow(clippy::too_many_arguments)]
pub fn scaling_curve(
    graph: &CitationGraph,
    bins: &BinAssignment,
    t_values: &[u32],
    h: u32,
    eval_bin: Option<u32>,
    k_pairs: usize,
    opts: &CellOptions,
    cbf: Option<&EmbeddingMatrix>,
) -> Result<Vec<CellResult>> {
    if t_values.is_empty() {
        return Err(Error::Empty("t values"));
    }
    let n_bins = bins.n_bins();
    for &t in t_values {
        let full = t == n_bins && h == 0 && eval_bin.is_none();
        if !full {
            EvalConfig { t, h, eval_bin: eval_bin.unwrap_or(t + h), k_pairs }.validate(n_bins)?;
        }
    }
    let cells: Vec<Result<CellResult>> = crate::linalg::map_range(t_values.len(), |i| {
        let t = t_values[i];
        if t == n_bins && h == 0 && eval_bin.is_none() {
            let (pairs, gb, cbf) = evaluate_direct(graph, k_pairs, opts, cbf)?;
            return Ok(CellResult { t, h, eval_bin: None, train_nodes: graph.node_count(), pairs, gb, cbf });
        }
        let cfg = EvalConfig { t, h, eval_bin: eval_bin.unwrap_or(t + h), k_pairs };
        evaluate_cell(graph, bins, &cfg, opts, cbf)
    });
    cells.into_iter().collect()
}

/// Horizon sweep at fixed `t`: each `h` evaluates on bin `t + h`.
pub fn horizon_sweep(
    graph: &CitationGraph,
    bins: &BinAssignment,
    t: u32,
    h_values: &[u32],
    k_pairs: usize,
    opts: &CellOptions,
    cbf: Option<&EmbeddingMatrix>,
) -> Result<Vec<CellResult>> {
    if h_values.is_empty() {
        return Err(Error::Empty("h values"));
    }
    for &h in h_values {
        EvalConfig { t, h, eval_bin: t + h, k_pairs }.validate(bins.n_bins())?;
    }
    let cells: Vec<Result<CellResult>> = crate::linalg::map_range(h_values.len(), |i| {
        let h = h_values[i];
        evaluate_cell(graph, bins, &EvalConfig { t, h, eval_bin: t + h, k_pairs }, opts, cbf)
    });
    cells.into_iter().collect()
}
