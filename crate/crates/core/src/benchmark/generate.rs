use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BenchError, Benchmark, BenchmarkQuery, Gate};
use crate::cmr::{validate_concept_id, CollectionQuery, CollectionSearch};
use crate::helper_agent::prompts::{self, Blocks};
use crate::transport::{complete_with_retry, CompletionRequest, Message, ModelTransport, RetryPolicy};

/// A source document and the datasets it cites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub doc_id: String,
    pub text: String,
    pub cited_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub name: String,
    /// Search attempts per citation, counting the first draft.
    pub max_attempts: usize,
    /// Results inspected per validation search.
    pub page_size: u32,
    pub retry: RetryPolicy,
}

impl GenerationConfig {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            max_attempts: 5,
            page_size: 10,
            retry: RetryPolicy::default(),
        }
    }
}

/// A citation that did not become a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub doc_id: String,
    pub cited_id: String,
    pub reason: String,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub benchmark: Benchmark,
    pub discards: Vec<Discard>,
}

impl GenerationResult {
    /// Discards as JSON lines.
    pub fn discards_jsonl(&self) -> String {
        self.discards
            .iter()
            .map(|d| serde_json::to_string(d).expect("discard serializes") + "\n")
            .collect()
    }
}

/// Read a corpus file: one [`CorpusDoc`] per line.
pub fn load_corpus(path: &Path) -> Result<Vec<CorpusDoc>, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| BenchError::InvalidCorpus(format!("line {}: {e}", i + 1))))
        .collect()
}

fn check_corpus(corpus: &[CorpusDoc]) -> Result<(), BenchError> {
    if corpus.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    let mut seen = HashSet::new();
    for d in corpus {
        if d.doc_id.trim().is_empty() || d.doc_id.contains(['/', '\\']) {
            return Err(BenchError::InvalidCorpus(format!("bad doc_id {:?}", d.doc_id)));
        }
        if !seen.insert(d.doc_id.as_str()) {
            return Err(BenchError::InvalidCorpus(format!("duplicate doc_id {}", d.doc_id)));
        }
        if d.text.trim().is_empty() {
            return Err(BenchError::InvalidCorpus(format!("{}: text is empty", d.doc_id)));
        }
        if d.cited_ids.is_empty() {
            return Err(BenchError::InvalidCorpus(format!("{}: no cited datasets", d.doc_id)));
        }
    }
    Ok(())
}

/// First non-empty line, without surrounding quotes.
fn clean_query(reply: &str) -> String {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    line.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim().to_string()
}

enum Outcome {
    Emitted(BenchmarkQuery),
    Discarded(Discard),
}

struct Generator<'a> {
    transport: &'a dyn ModelTransport,
    search: &'a dyn CollectionSearch,
    config: &'a GenerationConfig,
}

impl Generator<'_> {
    fn ask(&self, module: &str, blocks: Blocks) -> Result<String, String> {
        let request = CompletionRequest::new(prompts::module(module).text, vec![Message::user(blocks.render())]);
        complete_with_retry(self.transport, &request, &self.config.retry)
            .map(|r| clean_query(&r))
            .map_err(|e| format!("model call failed: {e}"))
    }

    fn one(&self, doc: &CorpusDoc, cited: &str) -> Outcome {
        let discard = |reason: String, attempts: usize| {
            Outcome::Discarded(Discard {
                doc_id: doc.doc_id.clone(),
                cited_id: cited.to_string(),
                reason,
                attempts,
            })
        };
        if !validate_concept_id(cited) {
            return discard(format!("{cited:?} is not a concept id"), 0);
        }
        let first = Blocks::new().add("DOCUMENT", doc.text.as_str()).add("TARGET", cited);
        let mut query = match self.ask(prompts::DRAFT_QUERY, first) {
            Ok(q) => q,
            Err(e) => return discard(e, 0),
        };
        let mut earlier: Vec<String> = Vec::new();
        for attempt in 1..=self.config.max_attempts {
            let leaked = query.contains(cited);
            let results = if query.is_empty() || leaked {
                Vec::new()
            } else {
                match self.search.search(&CollectionQuery::keyword(query.as_str(), self.config.page_size)) {
                    Ok(r) => r,
                    Err(e) => return discard(format!("catalog search failed: {e}"), attempt),
                }
            };
            if results.iter().any(|r| r.concept_id == cited) {
                let mut q = BenchmarkQuery::new(format!("syn-{}-{cited}", doc.doc_id), query, [cited]);
                q.source_doc = Some(doc.doc_id.clone());
                return Outcome::Emitted(q);
            }
            if attempt == self.config.max_attempts {
                break;
            }
            let missed: String = if leaked {
                "(the query named the concept id and was not searched)".into()
            } else if results.is_empty() {
                "(no results)".into()
            } else {
                results.iter().map(|r| format!("- {}\n", r.title)).collect()
            };
            let blocks = Blocks::new()
                .add("DOCUMENT", doc.text.as_str())
                .add("TARGET", cited)
                .add("PREVIOUS QUERY", query.as_str())
                .add("EARLIER QUERIES", earlier.iter().map(|q| format!("- {q}\n")).collect::<String>())
                .add("MISSED RESULTS", missed)
                .add("ATTEMPT", attempt.to_string());
            earlier.push(std::mem::take(&mut query));
            query = match self.ask(prompts::REFORMULATE_QUERY, blocks) {
                Ok(q) => q,
                Err(e) => return discard(e, attempt),
            };
        }
        discard(
            format!("target not in the top {} results after {} attempts", self.config.page_size, self.config.max_attempts),
            self.config.max_attempts,
        )
    }
}

/// Draft one query per (document, cited dataset) pair and keep it only when a
/// catalog search for it returns the cited dataset, reformulating on misses.
pub fn generate_synthetic(
    corpus: &[CorpusDoc],
    transport: &dyn ModelTransport,
    search: &dyn CollectionSearch,
    config: &GenerationConfig,
) -> Result<GenerationResult, BenchError> {
    check_corpus(corpus)?;
    if config.max_attempts == 0 || config.page_size == 0 {
        return Err(BenchError::InvalidCorpus("max_attempts and page_size must be >= 1".into()));
    }
    let mut pairs: Vec<(&CorpusDoc, &str)> = corpus
        .iter()
        .flat_map(|d| d.cited_ids.iter().map(move |c| (d, c.as_str())))
        .collect();
    pairs.sort_by(|a, b| (a.0.doc_id.as_str(), a.1).cmp(&(b.0.doc_id.as_str(), b.1)));
    let generator = Generator { transport, search, config };
    let outcomes: Vec<Outcome> = pairs.par_iter().map(|(d, c)| generator.one(d, c)).collect();
    let mut queries = Vec::new();
    let mut discards = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Emitted(q) => queries.push(q),
            Outcome::Discarded(d) => {
                tracing::info!(doc = %d.doc_id, cited = %d.cited_id, reason = %d.reason, "citation discarded");
                discards.push(d);
            }
        }
    }
    Ok(GenerationResult {
        benchmark: Benchmark::new(config.name.as_str(), Gate::Synthetic, queries)?,
        discards,
    })
}

/// Query ids whose expected dataset is missing from a fresh search of their text.
pub fn revalidate(benchmark: &Benchmark, search: &dyn CollectionSearch, page_size: u32) -> Result<Vec<String>, BenchError> {
    let mut failing = Vec::new();
    for q in &benchmark.queries {
        let found: HashSet<String> = search
            .search(&CollectionQuery::keyword(q.text.as_str(), page_size))?
            .into_iter()
            .map(|r| r.concept_id)
            .collect();
        if !q.expected_ids.iter().all(|id| found.contains(id)) {
            failing.push(q.query_id.clone());
        }
    }
    Ok(failing)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::cmr::{CollectionRecord, FixtureCatalog};
    use crate::transport::{FnTransport, SimulatedModel};

    fn catalog() -> FixtureCatalog {
        let rec = |id: &str, title: &str| CollectionRecord {
            concept_id: id.into(),
            short_name: String::new(),
            title: title.into(),
            summary: String::new(),
            provider: "P".into(),
            time_start: None,
            time_end: None,
        };
        FixtureCatalog::new(
            "fixture:g",
            vec![
                rec("C1-P", "MODIS Aqua sea surface temperature"),
                rec("C2-P", "Pacific basin precipitation near Hawaii islands"),
                rec("C3-P", "Arctic sea ice extent"),
            ],
        )
        .unwrap()
    }

    fn doc(id: &str, text: &str, cited: &[&str]) -> CorpusDoc {
        CorpusDoc {
            doc_id: id.into(),
            text: text.into(),
            cited_ids: cited.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn emits_solvable_and_discards_the_rest() {
        let corpus = vec![
            doc("d2", "Arctic sea ice extent shrank", &["C3-P", "C404-P"]),
            doc("d1", "We used MODIS Aqua sea surface temperature product for 2015 over the Pacific basin near Hawaii islands", &["C2-P", "C1-P"]),
        ];
        let cat = catalog();
        let r = generate_synthetic(&corpus, &SimulatedModel, &cat, &GenerationConfig::new("syn")).unwrap();
        let ids: Vec<_> = r.benchmark.queries.iter().map(|q| q.query_id.as_str()).collect();
        assert_eq!(ids, ["syn-d1-C1-P", "syn-d1-C2-P", "syn-d2-C3-P"]);
        assert_eq!(r.discards.len(), 1);
        assert_eq!((r.discards[0].cited_id.as_str(), r.discards[0].attempts), ("C404-P", 5));
        assert!(revalidate(&r.benchmark, &cat, 10).unwrap().is_empty());
        // C2-P needed the reformulated second window of the document
        assert_eq!(r.benchmark.queries[1].text, "pacific basin near hawaii islands datasets");
    }

    #[test]
    fn leaked_ids_are_never_searched() {
        let calls = AtomicUsize::new(0);
        let t = FnTransport::new("leaky", |_| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("\"C1-P\"".to_string())
        });
        let mut cfg = GenerationConfig::new("syn");
        cfg.max_attempts = 3;
        let r = generate_synthetic(&[doc("d", "text", &["C1-P"])], &t, &catalog(), &cfg).unwrap();
        assert!(r.benchmark.is_empty());
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn corpus_preconditions() {
        let cat = catalog();
        let cfg = GenerationConfig::new("syn");
        let code = |c: &[CorpusDoc]| crate::ErrorCode::code(&generate_synthetic(c, &SimulatedModel, &cat, &cfg).unwrap_err());
        assert_eq!(code(&[]), "empty_corpus");
        assert_eq!(code(&[doc("d", "x", &[])]), "invalid_corpus");
        assert_eq!(code(&[doc("d", "x", &["C1-P"]), doc("d", "y", &["C1-P"])]), "invalid_corpus");
    }
}
