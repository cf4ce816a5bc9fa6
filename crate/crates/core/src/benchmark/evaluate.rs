use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ratio_f64, ratio_string, recall_at_k, BenchError, Benchmark, Gate, Recall};
use crate::agent_runtime::{check_fairness, AgentRunner, AgentSpec, RetrievalResult};

pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    /// Exact recall per K as `num/den`.
    pub recall: BTreeMap<usize, String>,
    pub ranked_ids: Vec<String>,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub agent_name: String,
    pub benchmark_name: String,
    pub benchmark_digest: String,
    pub gate: Gate,
    pub n: usize,
    pub ks: Vec<usize>,
    pub k_retrieve: usize,
    /// Fairness hash: model, catalog, tool schemas, orchestration and depth.
    pub config_hash: String,
    /// Set when the run happened before the benchmark gate was approved.
    #[serde(default)]
    pub pre_gate: bool,
    /// Mean Recall@K as a float, for display.
    pub mean_recall: BTreeMap<usize, f64>,
    /// Mean Recall@K exactly, as `num/den`.
    pub mean_recall_exact: BTreeMap<usize, String>,
    pub per_query: Vec<QueryOutcome>,
}

impl EvaluationReport {
    /// Exact mean at `k`.
    pub fn mean(&self, k: usize) -> Result<Recall, BenchError> {
        let s = self.mean_recall_exact.get(&k).ok_or(BenchError::MissingK(k))?;
        parse_ratio(s).ok_or_else(|| BenchError::InvalidBenchmark(format!("bad ratio {s:?} in report")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::InvalidBenchmark(format!("report: {e}")))
    }
}

pub(crate) fn parse_ratio(s: &str) -> Option<Recall> {
    let (n, d) = s.split_once('/')?;
    let d: u64 = d.trim().parse().ok()?;
    if d == 0 {
        return None;
    }
    Some(Ratio::new(n.trim().parse().ok()?, d))
}

fn normalize_ks(ks: &[usize]) -> Result<Vec<usize>, BenchError> {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(BenchError::InvalidK);
    }
    Ok(ks)
}

/// Run every benchmark query once at `k_retrieve = max(ks)` and score each
/// prefix. Queries run concurrently; aggregation folds in query-id order.
/// When `trace_dir` is given each query's trace is written there.
pub fn evaluate(
    runner: &AgentRunner,
    agent: &AgentSpec,
    benchmark: &Benchmark,
    ks: &[usize],
    trace_dir: Option<&Path>,
) -> Result<EvaluationReport, BenchError> {
    let ks = normalize_ks(ks)?;
    if benchmark.is_empty() {
        return Err(BenchError::EmptyBenchmark);
    }
    let k_retrieve = *ks.last().expect("non-empty");
    let mut results: Vec<(usize, RetrievalResult)> = benchmark
        .queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| runner.run_query(agent, &q.query_id, &q.text, k_retrieve).map(|r| (i, r)))
        .collect::<Result<_, _>>()?;
    results.sort_by(|(a, ra), (b, rb)| ra.query_id.cmp(&rb.query_id).then(a.cmp(b)));

    if let Some(dir) = trace_dir {
        for (_, r) in &results {
            AgentRunner::write_trace(dir, r)?;
        }
    }
    let scored: Vec<(usize, &[String], bool)> = results.iter().map(|(i, r)| (*i, r.ranked_ids.as_slice(), r.partial)).collect();
    aggregate(&agent.name, &runner.config_hash(agent, k_retrieve), benchmark, ks, &scored)
}

/// Score ranked lists produced elsewhere, keyed by query id. Every benchmark
/// query needs a ranking.
pub fn score_rankings(
    agent_name: &str,
    config_hash: &str,
    benchmark: &Benchmark,
    ks: &[usize],
    rankings: &BTreeMap<String, Vec<String>>,
) -> Result<EvaluationReport, BenchError> {
    let ks = normalize_ks(ks)?;
    if benchmark.is_empty() {
        return Err(BenchError::EmptyBenchmark);
    }
    let mut scored = Vec::with_capacity(benchmark.len());
    for (i, q) in benchmark.queries.iter().enumerate() {
        let ranked = rankings
            .get(&q.query_id)
            .ok_or_else(|| BenchError::InvalidBenchmark(format!("no ranking for query {}", q.query_id)))?;
        scored.push((i, ranked.as_slice(), false));
    }
    scored.sort_by(|a, b| benchmark.queries[a.0].query_id.cmp(&benchmark.queries[b.0].query_id).then(a.0.cmp(&b.0)));
    aggregate(agent_name, config_hash, benchmark, ks, &scored)
}

/// Exact per-query recall and means. `scored` holds (query index, ranking,
/// partial) in query-id order.
fn aggregate(
    agent_name: &str,
    config_hash: &str,
    benchmark: &Benchmark,
    ks: Vec<usize>,
    scored: &[(usize, &[String], bool)],
) -> Result<EvaluationReport, BenchError> {
    let k_retrieve = *ks.last().expect("non-empty");
    let mut sums: BTreeMap<usize, Recall> = ks.iter().map(|&k| (k, Ratio::from_integer(0))).collect();
    let mut per_query = Vec::with_capacity(scored.len());
    for &(i, ranked, partial) in scored {
        let q = &benchmark.queries[i];
        let ranked: Vec<String> = ranked.iter().take(k_retrieve).cloned().collect();
        let mut recall = BTreeMap::new();
        for &k in &ks {
            let v = recall_at_k(&q.expected_ids, &ranked, k)?;
            *sums.get_mut(&k).expect("k present") += v;
            recall.insert(k, ratio_string(&v));
        }
        per_query.push(QueryOutcome {
            query_id: q.query_id.clone(),
            recall,
            ranked_ids: ranked,
            partial,
        });
    }
    let n = per_query.len();
    let means: BTreeMap<usize, Recall> = sums.into_iter().map(|(k, s)| (k, s / Ratio::from_integer(n as u64))).collect();
    Ok(EvaluationReport {
        agent_name: agent_name.to_string(),
        benchmark_name: benchmark.name.clone(),
        benchmark_digest: benchmark.digest(),
        gate: benchmark.gate,
        n,
        ks,
        k_retrieve,
        config_hash: config_hash.to_string(),
        pre_gate: false,
        mean_recall: means.iter().map(|(k, v)| (*k, ratio_f64(v))).collect(),
        mean_recall_exact: means.iter().map(|(k, v)| (*k, ratio_string(v))).collect(),
        per_query,
    })
}

/// Evaluate two agents after checking they share model and tool access.
/// Nothing runs when the check fails.
pub fn evaluate_pair(
    care: (&AgentRunner, &AgentSpec),
    baseline: (&AgentRunner, &AgentSpec),
    benchmark: &Benchmark,
    ks: &[usize],
) -> Result<(EvaluationReport, EvaluationReport), BenchError> {
    let k_retrieve = *normalize_ks(ks)?.last().expect("non-empty");
    check_fairness(care.0, care.1, baseline.0, baseline.1, k_retrieve)?;
    let a = evaluate(care.0, care.1, benchmark, ks, None)?;
    let b = evaluate(baseline.0, baseline.1, benchmark, ks, None)?;
    Ok((a, b))
}
