//! Retrieval benchmarks: data model, Recall@K, evaluation, the two-gate
//! decision, synthetic generation and Table-1 style reports.

mod evaluate;
mod gate;
mod generate;
mod report;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

pub use self::evaluate::{evaluate, evaluate_pair, score_rankings, EvaluationReport, QueryOutcome, DEFAULT_KS};
pub use self::gate::{decide, from_permille, two_gate, GoldOutcome, SyntheticOutcome, TwoGateDecision, DEFAULT_GOLD_PRIMARY_K, SYNTHETIC_PRIMARY_K};
pub use self::generate::{generate_synthetic, load_corpus, revalidate, CorpusDoc, Discard, GenerationConfig, GenerationResult};
pub use self::report::{format_percent, render_report, render_run_table, render_two_gate_table, GateRow, TABLE_CAPTION};
use crate::agent_runtime::AgentError;
use crate::cmr::{validate_concept_id, CmrError};
use crate::transport::TransportError;
use crate::ErrorCode;

/// Exact recall value.
pub type Recall = Ratio<u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Synthetic,
    Gold,
}

impl Gate {
    pub fn label(self) -> &'static str {
        match self {
            Gate::Synthetic => "Synthetic",
            Gate::Gold => "Gold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_type: Option<QueryType>,
}

impl Annotations {
    fn is_empty(&self) -> bool {
        self.difficulty.is_none() && self.query_type.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkQuery {
    pub query_id: String,
    pub text: String,
    pub expected_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc: Option<String>,
    #[serde(default, skip_serializing_if = "Annotations::is_empty")]
    pub annotations: Annotations,
}

impl BenchmarkQuery {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>, expected: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
            expected_ids: expected.into_iter().map(Into::into).collect(),
            source_doc: None,
            annotations: Annotations::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub gate: Gate,
    pub queries: Vec<BenchmarkQuery>,
}

/// First line of a benchmark file.
#[derive(Debug, Serialize, Deserialize)]
struct Header {
    benchmark: String,
    gate: Gate,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("expected id set is empty")]
    EmptyExpectedSet,
    #[error("k must be >= 1")]
    InvalidK,
    #[error("invalid benchmark: {0}")]
    InvalidBenchmark(String),
    #[error("benchmark has no queries")]
    EmptyBenchmark,
    #[error("reports cover different benchmarks ({0} vs {1})")]
    DifferentBenchmarks(String, String),
    #[error("report is for the {found:?} gate, expected {expected:?}")]
    WrongGate { expected: Gate, found: Gate },
    #[error("runs are not comparable: {0}")]
    FairnessViolation(String),
    #[error("report has no Recall@{0}")]
    MissingK(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Catalog(#[from] CmrError),
    #[error("i/o: {0}")]
    Io(String),
}

impl ErrorCode for BenchError {
    fn code(&self) -> &'static str {
        match self {
            BenchError::EmptyExpectedSet => "empty_expected_set",
            BenchError::InvalidK => "invalid_k",
            BenchError::InvalidBenchmark(_) => "invalid_benchmark",
            BenchError::EmptyBenchmark => "empty_benchmark",
            BenchError::DifferentBenchmarks(..) => "different_benchmarks",
            BenchError::WrongGate { .. } => "wrong_gate",
            BenchError::FairnessViolation(_) => "fairness_violation",
            BenchError::MissingK(_) => "missing_k",
            BenchError::EmptyCorpus => "empty_corpus",
            BenchError::InvalidCorpus(_) => "invalid_corpus",
            BenchError::Agent(e) => e.code(),
            BenchError::Transport(e) => e.code(),
            BenchError::Catalog(e) => e.code(),
            BenchError::Io(_) => "storage_error",
        }
    }
}

/// `|E ∩ first_k(T)| / |E|`, exactly. When `T` is shorter than `k` all of it is used.
pub fn recall_at_k(expected: &BTreeSet<String>, ranked: &[String], k: usize) -> Result<Recall, BenchError> {
    if expected.is_empty() {
        return Err(BenchError::EmptyExpectedSet);
    }
    if k == 0 {
        return Err(BenchError::InvalidK);
    }
    let top: HashSet<&str> = ranked.iter().take(k).map(String::as_str).collect();
    let hits = expected.iter().filter(|e| top.contains(e.as_str())).count();
    Ok(Ratio::new(hits as u64, expected.len() as u64))
}

/// `num/den` in lowest terms.
pub fn ratio_string(r: &Recall) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn ratio_f64(r: &Recall) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl Benchmark {
    pub fn new(name: impl Into<String>, gate: Gate, queries: Vec<BenchmarkQuery>) -> Result<Self, BenchError> {
        let b = Self {
            name: name.into(),
            gate,
            queries,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |m: String| Err(BenchError::InvalidBenchmark(m));
        if self.name.trim().is_empty() {
            return invalid("name is empty".into());
        }
        let mut seen = HashSet::new();
        for q in &self.queries {
            if !seen.insert(q.query_id.as_str()) {
                return invalid(format!("duplicate query_id {}", q.query_id));
            }
            if q.query_id.trim().is_empty() || q.query_id.contains(['/', '\\']) {
                return invalid(format!("bad query_id {:?}", q.query_id));
            }
            if q.text.trim().is_empty() {
                return invalid(format!("{}: query text is empty", q.query_id));
            }
            if q.expected_ids.is_empty() {
                return invalid(format!("{}: expected ids are empty", q.query_id));
            }
            if let Some(bad) = q.expected_ids.iter().find(|id| !validate_concept_id(id)) {
                return invalid(format!("{}: {bad:?} is not a concept id", q.query_id));
            }
            if self.gate == Gate::Synthetic && q.expected_ids.len() != 1 {
                return invalid(format!("{}: synthetic queries target exactly one dataset", q.query_id));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// JSON lines: a `{"benchmark", "gate"}` header, then one query per line.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            benchmark: self.name.clone(),
            gate: self.gate,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for q in &self.queries {
            out.push_str(&serde_json::to_string(q).expect("query serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse the file format. Without a header line the name is `default_name`
    /// and the gate is synthetic when every query has exactly one expected id.
    pub fn from_jsonl(text: &str, default_name: &str) -> Result<Self, BenchError> {
        let mut header: Option<Header> = None;
        let mut queries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                if let Ok(h) = serde_json::from_str::<Header>(line) {
                    header = Some(h);
                    continue;
                }
            }
            let q: BenchmarkQuery = serde_json::from_str(line)
                .map_err(|e| BenchError::InvalidBenchmark(format!("line {}: {e}", i + 1)))?;
            queries.push(q);
        }
        let (name, gate) = match header {
            Some(h) => (h.benchmark, h.gate),
            None => {
                let gate = if queries.iter().all(|q| q.expected_ids.len() == 1) {
                    Gate::Synthetic
                } else {
                    Gate::Gold
                };
                (default_name.to_string(), gate)
            }
        };
        Self::new(name, gate, queries)
    }

    /// SHA-256 of the canonical file form.
    pub fn digest(&self) -> String {
        crate::sha256_hex(self.to_jsonl().as_bytes())
    }
}

pub fn save_benchmark(benchmark: &Benchmark, path: &Path) -> Result<(), BenchError> {
    fs::write(path, benchmark.to_jsonl()).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

pub fn load_benchmark(path: &Path) -> Result<Benchmark, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("benchmark");
    Benchmark::from_jsonl(&text, stem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn list(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn formula_examples() {
        assert_eq!(recall_at_k(&set(&["C1-A"]), &list(&["C1-A", "C2-A"]), 1).unwrap(), Ratio::from_integer(1));
        let e = set(&["C1-A", "C2-A"]);
        let t = list(&["C2-A", "C3-A", "C1-A"]);
        assert_eq!(recall_at_k(&e, &t, 1).unwrap(), Ratio::new(1, 2));
        assert_eq!(recall_at_k(&e, &t, 3).unwrap(), Ratio::from_integer(1));
        for k in 1..10 {
            assert_eq!(recall_at_k(&set(&["C1-A"]), &[], k).unwrap(), Ratio::from_integer(0));
        }
    }

    #[test]
    fn preconditions() {
        assert_eq!(recall_at_k(&set(&[]), &[], 1).unwrap_err().code(), "empty_expected_set");
        assert_eq!(recall_at_k(&set(&["C1-A"]), &[], 0).unwrap_err().code(), "invalid_k");
    }

    proptest! {
        #[test]
        fn bounded_monotone_and_singleton(e in proptest::collection::btree_set(0u8..12, 1..5),
                                          t in proptest::collection::vec(0u8..12, 0..12),
                                          k1 in 1usize..12, dk in 0usize..6) {
            let e: BTreeSet<String> = e.into_iter().map(|i| format!("C{i}-X")).collect();
            let mut ranked: Vec<String> = Vec::new();
            for i in t {
                let id = format!("C{i}-X");
                if !ranked.contains(&id) { ranked.push(id); }
            }
            let r1 = recall_at_k(&e, &ranked, k1).unwrap();
            let r2 = recall_at_k(&e, &ranked, k1 + dk).unwrap();
            prop_assert!(r1 <= r2);
            prop_assert!(r2 <= Ratio::from_integer(1));
            if e.len() == 1 {
                let id = e.iter().next().unwrap();
                let hit = ranked.iter().take(k1).any(|x| x == id);
                prop_assert_eq!(r1, Ratio::from_integer(hit as u64));
            }
        }
    }

    fn bench() -> Benchmark {
        let mut q = BenchmarkQuery::new("q2", "sea ice", ["C2-A", "C1-B"]);
        q.annotations.difficulty = Some(3);
        q.annotations.query_type = Some(QueryType::Indirect);
        q.source_doc = Some("doc-7".into());
        Benchmark::new("gold-mini", Gate::Gold, vec![BenchmarkQuery::new("q1", "sst", ["C1-A"]), q]).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.jsonl");
        let b = bench();
        save_benchmark(&b, &path).unwrap();
        assert_eq!(load_benchmark(&path).unwrap(), b);
        assert_eq!(b.digest(), load_benchmark(&path).unwrap().digest());
    }

    #[test]
    fn headerless_file_infers_gate() {
        let text = "{\"query_id\":\"a\",\"text\":\"x\",\"expected_ids\":[\"C1-A\"]}\n";
        let b = Benchmark::from_jsonl(text, "synth").unwrap();
        assert_eq!((b.name.as_str(), b.gate), ("synth", Gate::Synthetic));
    }

    #[test]
    fn invariants_enforced() {
        let dup = vec![BenchmarkQuery::new("a", "x", ["C1-A"]), BenchmarkQuery::new("a", "y", ["C2-A"])];
        assert!(Benchmark::new("b", Gate::Gold, dup).is_err());
        let two = vec![BenchmarkQuery::new("a", "x", ["C1-A", "C2-A"])];
        assert!(Benchmark::new("b", Gate::Synthetic, two.clone()).is_err());
        assert!(Benchmark::new("b", Gate::Gold, two).is_ok());
        assert!(Benchmark::new("b", Gate::Gold, vec![BenchmarkQuery::new("a", "x", ["bad"])]).is_err());
        assert!(Benchmark::new("b", Gate::Gold, vec![BenchmarkQuery::new("a", "x", Vec::<String>::new())]).is_err());
    }
}
