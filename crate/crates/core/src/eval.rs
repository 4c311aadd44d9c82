//! Ranking-quality metrics and routing-policy evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocId, PositionalIndex};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::formats::Qrels;
use crate::rankers::{Query, RankerKind, ScoringParams};
use crate::selector::{route, SelectorModel};

pub const PRECISION_CUTOFFS: [usize; 3] = [1, 3, 10];

/// Average precision over the top `depth` ranks; relevant documents that
/// are never retrieved contribute zero.
pub fn average_precision(ranked: &[DocId], relevant: &HashSet<DocId>, depth: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::invalid(
            "average precision needs at least one relevant document",
        ));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranked.iter().take(depth).enumerate() {
        if relevant.contains(doc) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Relevant documents in the top `k`, divided by `k` even when the list is
/// shorter.
pub fn precision_at_k(ranked: &[DocId], relevant: &HashSet<DocId>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|d| relevant.contains(d))
        .count();
    hits as f64 / k as f64
}

fn dcg(gains: impl Iterator<Item = u32>) -> f64 {
    gains
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG at `cutoff` with exponential gain `2^rel - 1` and `log2(i + 1)`
/// discount. Unjudged documents have grade 0. Zero when no judged document
/// has a positive grade.
pub fn ndcg(ranked: &[DocId], grades: &BTreeMap<DocId, u32>, cutoff: usize) -> f64 {
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let ideal_dcg = dcg(ideal.into_iter().take(cutoff));
    if ideal_dcg == 0.0 {
        return 0.0;
    }
    let actual = dcg(ranked
        .iter()
        .take(cutoff)
        .map(|d| grades.get(d).copied().unwrap_or(0)));
    actual / ideal_dcg
}

/// Metric depths and throughput measurement settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ap_depth: usize,
    pub ndcg_cutoff: usize,
    /// Throughput runs per measurement; the median is reported.
    pub throughput_repeats: usize,
    /// Each throughput run replays the query batch until this much time
    /// has passed.
    pub throughput_min_time: Duration,
    pub measure_throughput: bool,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ap_depth: 1000,
            ndcg_cutoff: 10,
            throughput_repeats: 5,
            throughput_min_time: Duration::from_millis(20),
            measure_throughput: true,
            seed: 0,
        }
    }
}

/// When to apply the proximity ranker.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    TpNo,
    TpAll,
    /// Per the classifier's prediction.
    TpS(&'a SelectorModel),
    /// Per known benefit labels; unlabeled queries use the base ranker.
    Oracle(&'a HashMap<String, u8>),
}

impl Policy<'_> {
    pub fn suffix(&self) -> &'static str {
        match self {
            Policy::TpNo => "tpNo",
            Policy::TpAll => "tpAll",
            Policy::TpS(_) => "tpS",
            Policy::Oracle(_) => "oracle",
        }
    }

    pub fn method_name(&self, kind: RankerKind) -> String {
        format!("{}_{}", kind.name(), self.suffix())
    }

    pub fn uses_tp(&self, index: &PositionalIndex, query: &Query) -> bool {
        match self {
            Policy::TpNo => false,
            Policy::TpAll => true,
            Policy::TpS(model) => route(model, index, query).use_tp,
            Policy::Oracle(labels) => labels.get(&query.id).copied() == Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_id: String,
    pub length: usize,
    pub used_tp: bool,
    pub ap: f64,
    pub ndcg: f64,
    pub precision: [f64; 3],
}

/// Aggregated metrics for one method over one query-length group.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    /// `None` for all lengths together.
    pub length: Option<usize>,
    pub queries: usize,
    pub map: f64,
    pub mean_ndcg: f64,
    pub precision: [f64; 3],
    pub tp_query_count: usize,
    pub throughput_qps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub method: String,
    pub outcomes: Vec<QueryOutcome>,
    pub rows: Vec<MetricRow>,
}

impl PolicyEvaluation {
    pub fn overall(&self) -> &MetricRow {
        self.rows
            .iter()
            .find(|r| r.length.is_none())
            .expect("overall row")
    }

    pub fn map(&self) -> f64 {
        self.overall().map
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean of per-query average precisions.
pub fn mean_average_precision(aps: &[f64]) -> f64 {
    mean(aps.iter().copied())
}

fn aggregate(method: &str, length: Option<usize>, outcomes: &[&QueryOutcome]) -> MetricRow {
    let mut precision = [0.0; 3];
    for (k, slot) in precision.iter_mut().enumerate() {
        *slot = mean(outcomes.iter().map(|o| o.precision[k]));
    }
    MetricRow {
        method: method.to_string(),
        length,
        queries: outcomes.len(),
        map: mean(outcomes.iter().map(|o| o.ap)),
        mean_ndcg: mean(outcomes.iter().map(|o| o.ndcg)),
        precision,
        tp_query_count: outcomes.iter().filter(|o| o.used_tp).count(),
        throughput_qps: None,
    }
}

/// Queries per second of one policy over `queries`, scoring only: the
/// batch is replayed in a shuffled order until `min_time` elapses, once per
/// repeat, and the median rate is returned. Always single-threaded.
pub fn measure_throughput(
    index: &PositionalIndex,
    queries: &[&Query],
    kind: RankerKind,
    policy: Policy<'_>,
    params: &ScoringParams,
    options: &EvalOptions,
) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let mut order: Vec<&Query> = queries.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    let mut rates: Vec<f64> = (0..options.throughput_repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            let mut done = 0usize;
            loop {
                for q in &order {
                    let use_tp = policy.uses_tp(index, q);
                    std::hint::black_box(kind.score(use_tp, index, q, params));
                }
                done += order.len();
                if start.elapsed() >= options.throughput_min_time {
                    break;
                }
            }
            done as f64 / start.elapsed().as_secs_f64()
        })
        .collect();
    rates.sort_by(f64::total_cmp);
    rates[rates.len() / 2]
}

fn timed_pass(
    index: &PositionalIndex,
    order: &[&Query],
    kind: RankerKind,
    policy: Policy<'_>,
    params: &ScoringParams,
) -> Duration {
    let start = Instant::now();
    for q in order {
        let use_tp = policy.uses_tp(index, q);
        std::hint::black_box(kind.score(use_tp, index, q, params));
    }
    start.elapsed()
}

/// Throughput of two policies measured side by side: within each repeat the
/// batch is replayed alternately under `a` and `b` until their combined time
/// reaches `min_time`, so both see the same machine conditions. Returns the
/// median rates `(a, b)` over the repeats.
pub fn compare_throughput(
    index: &PositionalIndex,
    queries: &[&Query],
    kind: RankerKind,
    a: Policy<'_>,
    b: Policy<'_>,
    params: &ScoringParams,
    options: &EvalOptions,
) -> (f64, f64) {
    if queries.is_empty() {
        return (0.0, 0.0);
    }
    let mut order: Vec<&Query> = queries.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    let (mut rates_a, mut rates_b) = (Vec::new(), Vec::new());
    for _ in 0..options.throughput_repeats.max(1) {
        let (mut time_a, mut time_b) = (Duration::ZERO, Duration::ZERO);
        let mut passes = 0usize;
        while passes == 0 || time_a + time_b < options.throughput_min_time {
            time_a += timed_pass(index, &order, kind, a, params);
            time_b += timed_pass(index, &order, kind, b, params);
            passes += 1;
        }
        let done = (passes * order.len()) as f64;
        rates_a.push(done / time_a.as_secs_f64());
        rates_b.push(done / time_b.as_secs_f64());
    }
    rates_a.sort_by(f64::total_cmp);
    rates_b.sort_by(f64::total_cmp);
    (rates_a[rates_a.len() / 2], rates_b[rates_b.len() / 2])
}

/// Runs every query through the policy's ranker choice and aggregates the
/// metrics overall and per query length. Queries without relevant
/// judgments are skipped.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    index: &PositionalIndex,
    queries: &[Query],
    qrels: &Qrels,
    kind: RankerKind,
    policy: Policy<'_>,
    params: &ScoringParams,
    options: &EvalOptions,
    exec: Execution,
) -> PolicyEvaluation {
    let method = policy.method_name(kind);
    let judged: Vec<&Query> = queries
        .iter()
        .filter(|q| !qrels.relevant(&q.id).is_empty())
        .collect();
    let outcomes: Vec<QueryOutcome> = exec.map(&judged, |q| {
        let used_tp = policy.uses_tp(index, q);
        let ranked = kind.score(used_tp, index, q, params).doc_ids();
        let relevant = qrels.relevant(&q.id);
        let mut precision = [0.0; 3];
        for (slot, &k) in precision.iter_mut().zip(&PRECISION_CUTOFFS) {
            *slot = precision_at_k(&ranked, &relevant, k);
        }
        QueryOutcome {
            query_id: q.id.clone(),
            length: q.len(),
            used_tp,
            ap: average_precision(&ranked, &relevant, options.ap_depth).expect("judged query"),
            ndcg: ndcg(&ranked, &qrels.grades(&q.id), options.ndcg_cutoff),
            precision,
        }
    });

    let lengths: BTreeSet<usize> = outcomes.iter().map(|o| o.length).collect();
    let mut rows = Vec::new();
    for &len in &lengths {
        let group: Vec<&QueryOutcome> = outcomes.iter().filter(|o| o.length == len).collect();
        let mut row = aggregate(&method, Some(len), &group);
        if options.measure_throughput {
            let qs: Vec<&Query> = judged.iter().copied().filter(|q| q.len() == len).collect();
            row.throughput_qps = Some(measure_throughput(
                index, &qs, kind, policy, params, options,
            ));
        }
        rows.push(row);
    }
    let all: Vec<&QueryOutcome> = outcomes.iter().collect();
    let mut overall = aggregate(&method, None, &all);
    if options.measure_throughput {
        overall.throughput_qps = Some(measure_throughput(
            index, &judged, kind, policy, params, options,
        ));
    }
    rows.push(overall);
    PolicyEvaluation {
        method,
        outcomes,
        rows,
    }
}

/// MAP as the proportion of queries given the proximity ranker grows, most
/// beneficial first. Point `m` applies TP to the first `m` queries of that
/// order; proportions are `m / n` for `m = 0..=n`.
pub fn proportion_curve(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = pairs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ga = pairs[a].1 - pairs[a].0;
        let gb = pairs[b].1 - pairs[b].0;
        gb.total_cmp(&ga).then(a.cmp(&b))
    });
    let mut use_tp = vec![false; n];
    let mut curve = Vec::with_capacity(n + 1);
    for m in 0..=n {
        if m > 0 {
            use_tp[order[m - 1]] = true;
        }
        let map = mean(
            pairs
                .iter()
                .zip(&use_tp)
                .map(|(&(base, tp), &t)| if t { tp } else { base }),
        );
        curve.push((m as f64 / n as f64, map));
    }
    curve
}

/// Mean AP loss per (true label, predicted label) cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MispredictionCell {
    pub count: usize,
    /// Mean of achieved AP minus the better of the two APs; 0 when empty.
    pub mean_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MispredictionTable {
    /// Indexed `[true_label][predicted_label]`.
    pub cells: [[MispredictionCell; 2]; 2],
}

/// `entries` holds `(ap_base, ap_tp, true_label, predicted_label)`.
pub fn misprediction_costs(entries: &[(f64, f64, u8, u8)]) -> MispredictionTable {
    let mut sums = [[0.0f64; 2]; 2];
    let mut table = MispredictionTable::default();
    for &(base, tp, truth, pred) in entries {
        let best = if truth == 1 { tp } else { base };
        let achieved = if pred == 1 { tp } else { base };
        let (t, p) = (truth.min(1) as usize, pred.min(1) as usize);
        sums[t][p] += achieved - best;
        table.cells[t][p].count += 1;
    }
    for t in 0..2 {
        for p in 0..2 {
            let c = &mut table.cells[t][p];
            if c.count > 0 {
                c.mean_delta = sums[t][p] / c.count as f64;
            }
        }
    }
    table
}

impl MispredictionTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("true_label\tpredicted_label\tcount\tmean_ap_delta\n");
        for t in 0..2 {
            for p in 0..2 {
                let c = self.cells[t][p];
                let _ = writeln!(out, "{t}\t{p}\t{}\t{:.6}", c.count, c.mean_delta);
            }
        }
        out
    }
}

pub const REPORT_HEADER: &str =
    "method\tquery_len\tqueries\tMAP\tmean_NDCG\tP@1\tP@3\tP@10\tTP_queries\tthroughput_qps(measured)";

/// Table of metric rows; the throughput column is the only
/// non-deterministic field and is always last.
pub fn format_report(rows: &[MetricRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let len = r.length.map_or("all".to_string(), |l| l.to_string());
        let qps = r
            .throughput_qps
            .map_or("-".to_string(), |v| format!("{v:.1}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            r.method,
            len,
            r.queries,
            r.map,
            r.mean_ndcg,
            r.precision[0],
            r.precision[1],
            r.precision[2],
            r.tp_query_count,
            qps
        );
    }
    out
}

pub fn format_curve(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("proportion\tmap\n");
    for (p, m) in curve {
        let _ = writeln!(out, "{p:.6}\t{m:.6}");
    }
    out
}
