//! Tool-using retrieval agents over the CMR collection search.
//!
//! The runtime is behaviorally neutral: a model turn either calls tools or
//! answers. Clarifying, reformulating and verifying are prompt behavior.

mod answer;
mod prompt;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use self::answer::{parse_answer, parse_final_answer, ParsedAnswer};
pub use self::prompt::{
    assemble_care_prompt, baseline_prompt, tool_protocol, CONTEXT_SLOT, GUARDRAILS_SLOT, TOOL_CALL_CLOSE,
    TOOL_CALL_OPEN, TOOL_PROTOCOL_HEADING,
};
use crate::cmr::{validate_concept_id, CmrError, CollectionQuery, CollectionRecord, CollectionSearch};
use crate::domain::ArtifactKind;
use crate::phase_engine::GateStatus;
use crate::transport::{complete_with_retry, CompletionRequest, Message, ModelTransport, RetryPolicy, TransportError};
use crate::ErrorCode;

pub const CARE_AGENT: &str = "cmr_care_v1";
pub const BASELINE_AGENT: &str = "cmr_simple";
pub const SEARCH_TOOL: &str = "cmr_collection_search";
pub const AGENT_SPEC_FORMAT: &str = "care-agent-spec/1";

/// Results returned to the model per search call unless it asks otherwise.
pub const DEFAULT_TOOL_PAGE_SIZE: u32 = 10;
const MAX_TOOL_PAGE_SIZE: u32 = 50;
const SUMMARY_CHARS: usize = 240;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParameter {
    pub name: String,
    pub semantic_type: String,
    pub required: bool,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub tool_name: String,
    pub description: String,
    pub parameters: Vec<ToolParameter>,
}

fn param(name: &str, semantic_type: &str, required: bool, description: &str) -> ToolParameter {
    ToolParameter {
        name: name.into(),
        semantic_type: semantic_type.into(),
        required,
        description: description.into(),
    }
}

/// The single case-study tool: CMR collection search.
pub fn cmr_tool_schemas() -> Vec<ToolSchema> {
    vec![ToolSchema {
        tool_name: SEARCH_TOOL.into(),
        description: "Search NASA CMR collections. Returns concept_id, short_name, title, provider and a summary excerpt per collection.".into(),
        parameters: vec![
            param("keyword", "string", true, "free-text keywords"),
            param("provider", "string", false, "CMR provider id, e.g. PODAAC"),
            param("start_date", "date (YYYY-MM-DD)", false, "temporal coverage start"),
            param("end_date", "date (YYYY-MM-DD)", false, "temporal coverage end"),
            param("page_size", "integer", false, "results to return (1-50, default 10)"),
        ],
    }]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnExhaustion {
    ReturnPartial,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orchestration {
    pub max_tool_calls: u32,
    pub retries_per_call: u32,
    pub on_exhaustion: OnExhaustion,
}

impl Default for Orchestration {
    fn default() -> Self {
        Self {
            max_tool_calls: 8,
            retries_per_call: 2,
            on_exhaustion: OnExhaustion::ReturnPartial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub system_prompt: String,
    pub tool_schemas: Vec<ToolSchema>,
    pub orchestration: Orchestration,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentSpecFile {
    format: String,
    #[serde(flatten)]
    spec: AgentSpec,
}

impl AgentSpec {
    pub fn baseline() -> Self {
        Self {
            name: BASELINE_AGENT.into(),
            system_prompt: baseline_prompt(),
            tool_schemas: cmr_tool_schemas(),
            orchestration: Orchestration::default(),
        }
    }

    pub fn care(system_prompt: impl Into<String>) -> Self {
        Self {
            name: CARE_AGENT.into(),
            system_prompt: system_prompt.into(),
            tool_schemas: cmr_tool_schemas(),
            orchestration: Orchestration::default(),
        }
    }

    /// The CARE agent for a project whose prompt gate has passed.
    pub fn care_from_project(project: &crate::artifact_store::Project) -> Result<Self, AgentError> {
        Ok(Self::care(assemble_care_prompt(project)?))
    }

    /// Full system text sent to the model: the agent prompt plus the tool protocol.
    pub fn system_text(&self) -> String {
        format!("{}\n\n{}", self.system_prompt.trim_end(), tool_protocol(&self.tool_schemas))
    }

    pub fn to_json(&self) -> String {
        let file = AgentSpecFile {
            format: AGENT_SPEC_FORMAT.into(),
            spec: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("agent spec serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let file: AgentSpecFile = serde_json::from_str(text).map_err(|e| AgentError::InvalidSpec(e.to_string()))?;
        if file.format != AGENT_SPEC_FORMAT {
            return Err(AgentError::InvalidSpec(format!("unsupported format {}", file.format)));
        }
        Ok(file.spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        fs::write(path, self.to_json()).map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = fs::read_to_string(path).map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("gate for {} is not satisfied", .0.phase)]
    GateNotSatisfied(GateStatus),
    #[error("{kind} is missing sections: {}", missing.join(", "))]
    TemplateViolation { kind: ArtifactKind, missing: Vec<String> },
    #[error("tool failed after {attempts} attempts: {last}")]
    ToolFailure { attempts: u32, last: CmrError },
    #[error("tool budget of {0} calls exhausted")]
    BudgetExhausted(u32),
    #[error("invalid run request: {0}")]
    InvalidRequest(String),
    #[error("agents differ in {0}; runs are not comparable")]
    FairnessViolation(String),
    #[error("invalid agent spec: {0}")]
    InvalidSpec(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl ErrorCode for AgentError {
    fn code(&self) -> &'static str {
        match self {
            AgentError::Transport(e) => e.code(),
            AgentError::GateNotSatisfied(_) => "gate_not_satisfied",
            AgentError::TemplateViolation { .. } => "template_violation",
            AgentError::ToolFailure { .. } => "tool_failure",
            AgentError::BudgetExhausted(_) => "tool_budget_exhausted",
            AgentError::InvalidRequest(_) => "invalid_request",
            AgentError::FairnessViolation(_) => "fairness_violation",
            AgentError::InvalidSpec(_) => "invalid_agent_spec",
            AgentError::Io(_) => "storage_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    ModelTurn {
        turn: u32,
        request_hash: String,
        response_sha256: String,
    },
    ToolCall {
        index: u32,
        name: String,
        arguments: Value,
        attempts: u32,
        result_sha256: String,
        result_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Note {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub agent_name: String,
    pub ranked_ids: Vec<String>,
    pub trace: Vec<TraceEvent>,
    pub partial: bool,
}

impl RetrievalResult {
    pub fn tool_calls(&self) -> usize {
        self.trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::ToolCall { .. }))
            .count()
    }

    /// The trace as JSON lines, one event per line after a header line.
    pub fn trace_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&json!({
            "query_id": self.query_id,
            "agent_name": self.agent_name,
            "ranked_ids": self.ranked_ids,
            "partial": self.partial,
        }))
        .expect("header serializes");
        out.push('\n');
        for e in &self.trace {
            out.push_str(&serde_json::to_string(e).expect("trace serializes"));
            out.push('\n');
        }
        out
    }
}

/// Hash of everything two agents must share to be compared: model identity,
/// catalog identity, tool schemas, orchestration limits and retrieval depth.
pub fn fairness_hash(agent: &AgentSpec, transport_identity: &str, catalog_identity: &str, k: usize) -> String {
    let doc = json!({
        "transport": transport_identity,
        "catalog": catalog_identity,
        "tool_schemas": agent.tool_schemas,
        "orchestration": agent.orchestration,
        "k": k,
    });
    crate::sha256_hex(doc.to_string().as_bytes())
}

/// Refuse to compare two configured runs that differ in model or tool access.
pub fn check_fairness(a: &AgentRunner, a_spec: &AgentSpec, b: &AgentRunner, b_spec: &AgentSpec, k: usize) -> Result<String, AgentError> {
    let mut differs = Vec::new();
    if a.transport.identity() != b.transport.identity() {
        differs.push("transport identity");
    }
    if a.search.identity() != b.search.identity() {
        differs.push("catalog");
    }
    if a_spec.tool_schemas != b_spec.tool_schemas {
        differs.push("tool schemas");
    }
    if a_spec.orchestration != b_spec.orchestration {
        differs.push("orchestration limits");
    }
    if !differs.is_empty() {
        return Err(AgentError::FairnessViolation(differs.join(", ")));
    }
    Ok(a.config_hash(a_spec, k))
}

#[derive(Debug, Clone, PartialEq)]
struct ToolCall {
    name: String,
    arguments: Value,
}

fn parse_tool_calls(text: &str) -> Vec<Result<ToolCall, String>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(TOOL_CALL_OPEN) {
        let after = &rest[start + TOOL_CALL_OPEN.len()..];
        let (body, next) = match after.find(TOOL_CALL_CLOSE) {
            Some(end) => (&after[..end], &after[end + TOOL_CALL_CLOSE.len()..]),
            None => (after, ""),
        };
        out.push(
            serde_json::from_str::<Value>(body.trim())
                .map_err(|e| format!("tool call is not JSON: {e}"))
                .and_then(|v| {
                    let name = v.get("name").and_then(Value::as_str).ok_or("tool call without name")?;
                    Ok(ToolCall {
                        name: name.to_string(),
                        arguments: v.get("arguments").cloned().unwrap_or_else(|| json!({})),
                    })
                }),
        );
        rest = next;
    }
    out
}

fn date_arg(args: &Value, name: &str) -> Result<Option<NaiveDate>, String> {
    match args.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Some)
            .map_err(|_| format!("{name} must be YYYY-MM-DD")),
        Some(_) => Err(format!("{name} must be a string")),
    }
}

fn search_query(args: &Value) -> Result<CollectionQuery, String> {
    let keyword = args.get("keyword").and_then(Value::as_str).unwrap_or("").to_string();
    let provider = args.get("provider").and_then(Value::as_str).map(str::to_string);
    let start = date_arg(args, "start_date")?;
    let end = date_arg(args, "end_date")?;
    let temporal = match (start, end) {
        (None, None) => None,
        (s, e) => Some((
            s.unwrap_or(NaiveDate::MIN),
            e.unwrap_or(NaiveDate::from_ymd_opt(9999, 12, 31).expect("valid date")),
        )),
    };
    let page_size = match args.get("page_size") {
        None | Some(Value::Null) => DEFAULT_TOOL_PAGE_SIZE,
        Some(v) => v
            .as_u64()
            .filter(|n| (1..=MAX_TOOL_PAGE_SIZE as u64).contains(n))
            .ok_or_else(|| format!("page_size must be an integer in 1..={MAX_TOOL_PAGE_SIZE}"))? as u32,
    };
    let query = CollectionQuery {
        keyword,
        provider,
        temporal,
        page_size,
        page_num: 1,
    };
    query.validate().map_err(|e| e.to_string())?;
    Ok(query)
}

fn tool_result_json(records: &[CollectionRecord]) -> String {
    let results: Vec<Value> = records
        .iter()
        .map(|r| {
            let summary: String = r.summary.chars().take(SUMMARY_CHARS).collect();
            json!({
                "concept_id": r.concept_id,
                "short_name": r.short_name,
                "title": r.title,
                "provider": r.provider,
                "summary": summary,
            })
        })
        .collect();
    json!({ "tool": SEARCH_TOOL, "results": results }).to_string()
}

fn tool_error_json(message: &str) -> String {
    json!({ "tool": SEARCH_TOOL, "error": message }).to_string()
}

/// Runs agents against one transport and one catalog.
#[derive(Clone)]
pub struct AgentRunner {
    pub transport: Arc<dyn ModelTransport>,
    pub search: Arc<dyn CollectionSearch>,
    pub retry: RetryPolicy,
}

impl AgentRunner {
    pub fn new(transport: Arc<dyn ModelTransport>, search: Arc<dyn CollectionSearch>) -> Self {
        Self {
            transport,
            search,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config_hash(&self, agent: &AgentSpec, k: usize) -> String {
        fairness_hash(agent, &self.transport.identity(), &self.search.identity(), k)
    }

    fn search_with_retries(&self, agent: &AgentSpec, query: &CollectionQuery) -> (u32, Result<Vec<CollectionRecord>, CmrError>) {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.search.search(query) {
                Ok(r) => return (attempts, Ok(r)),
                // a bad query will not get better by retrying
                Err(e @ CmrError::InvalidQuery(_)) => return (attempts, Err(e)),
                Err(e) if attempts > agent.orchestration.retries_per_call => return (attempts, Err(e)),
                Err(_) => continue,
            }
        }
    }

    /// One query through the agent loop. Returns at most `k` ranked ids.
    pub fn run_query(&self, agent: &AgentSpec, query_id: &str, query: &str, k: usize) -> Result<RetrievalResult, AgentError> {
        if k == 0 {
            return Err(AgentError::InvalidRequest("k must be >= 1".into()));
        }
        if query.trim().is_empty() {
            return Err(AgentError::InvalidRequest("query is empty".into()));
        }
        let system = agent.system_text();
        let budget = agent.orchestration.max_tool_calls;
        let mut messages = vec![Message::user(query)];
        let mut trace = Vec::new();
        let mut gathered: Vec<String> = Vec::new();
        let mut calls = 0u32;
        let mut budget_warned = false;
        let mut turn = 0u32;

        let exhausted = |trace: &mut Vec<TraceEvent>, gathered: &[String], err: AgentError| {
            match agent.orchestration.on_exhaustion {
                OnExhaustion::Fail => Err(err),
                OnExhaustion::ReturnPartial => {
                    trace.push(TraceEvent::Note {
                        text: format!("returning partial result: {err}"),
                    });
                    let ranked_ids = gathered.iter().take(k).cloned().collect();
                    Ok(RetrievalResult {
                        query_id: query_id.to_string(),
                        agent_name: agent.name.clone(),
                        ranked_ids,
                        trace: std::mem::take(trace),
                        partial: true,
                    })
                }
            }
        };

        loop {
            let request = CompletionRequest::new(system.clone(), messages.clone());
            let reply = complete_with_retry(self.transport.as_ref(), &request, &self.retry)?;
            trace.push(TraceEvent::ModelTurn {
                turn,
                request_hash: request.request_hash(),
                response_sha256: crate::sha256_hex(reply.as_bytes()),
            });
            turn += 1;
            let tool_calls = parse_tool_calls(&reply);
            if tool_calls.is_empty() {
                let parsed = parse_answer(&reply);
                for token in &parsed.invalid {
                    trace.push(TraceEvent::Note {
                        text: format!("dropped invalid concept id token {token:?}"),
                    });
                }
                let mut ranked_ids = parsed.ids;
                if ranked_ids.len() > k {
                    trace.push(TraceEvent::Note {
                        text: format!("truncated {} ids to k={k}", ranked_ids.len()),
                    });
                    ranked_ids.truncate(k);
                }
                return Ok(RetrievalResult {
                    query_id: query_id.to_string(),
                    agent_name: agent.name.clone(),
                    ranked_ids,
                    trace,
                    partial: false,
                });
            }
            messages.push(Message::assistant(reply));
            if calls >= budget {
                if budget_warned {
                    return exhausted(&mut trace, &gathered, AgentError::BudgetExhausted(budget));
                }
                budget_warned = true;
                trace.push(TraceEvent::Note {
                    text: format!("tool budget of {budget} calls exhausted; asked for a final answer"),
                });
                messages.push(Message::tool(tool_error_json(
                    "tool budget exhausted; answer now with the concept IDs you have",
                )));
                continue;
            }
            let mut results = Vec::new();
            for call in tool_calls {
                if calls >= budget {
                    results.push(tool_error_json("tool budget exhausted; answer now with the concept IDs you have"));
                    budget_warned = true;
                    continue;
                }
                let index = calls;
                calls += 1;
                let call = match call {
                    Ok(c) if c.name == SEARCH_TOOL => c,
                    Ok(c) => {
                        let msg = format!("unknown tool {}", c.name);
                        trace.push(tool_event(index, &c.name, c.arguments, 0, &msg, 0, Some(msg.clone())));
                        results.push(tool_error_json(&msg));
                        continue;
                    }
                    Err(msg) => {
                        trace.push(tool_event(index, "", Value::Null, 0, &msg, 0, Some(msg.clone())));
                        results.push(tool_error_json(&msg));
                        continue;
                    }
                };
                let query = match search_query(&call.arguments) {
                    Ok(q) => q,
                    Err(msg) => {
                        trace.push(tool_event(index, &call.name, call.arguments, 0, &msg, 0, Some(msg.clone())));
                        results.push(tool_error_json(&msg));
                        continue;
                    }
                };
                let (attempts, outcome) = self.search_with_retries(agent, &query);
                match outcome {
                    Ok(records) => {
                        let body = tool_result_json(&records);
                        for r in &records {
                            if validate_concept_id(&r.concept_id) && !gathered.contains(&r.concept_id) {
                                gathered.push(r.concept_id.clone());
                            }
                        }
                        trace.push(tool_event(index, &call.name, call.arguments, attempts, &body, records.len(), None));
                        results.push(body);
                    }
                    Err(CmrError::InvalidQuery(msg)) => {
                        trace.push(tool_event(index, &call.name, call.arguments, attempts, &msg, 0, Some(msg.clone())));
                        results.push(tool_error_json(&msg));
                    }
                    Err(e) => {
                        let msg = e.to_string();
                        trace.push(tool_event(index, &call.name, call.arguments, attempts, &msg, 0, Some(msg.clone())));
                        return exhausted(&mut trace, &gathered, AgentError::ToolFailure { attempts, last: e });
                    }
                }
            }
            messages.push(Message::tool(results.join("\n")));
        }
    }

    /// Write a result's trace to `<dir>/<query_id>.jsonl`.
    pub fn write_trace(dir: &Path, result: &RetrievalResult) -> Result<(), AgentError> {
        fs::create_dir_all(dir).map_err(|e| AgentError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.jsonl", result.query_id));
        fs::write(&path, result.trace_jsonl()).map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))
    }
}

fn tool_event(
    index: u32,
    name: &str,
    arguments: Value,
    attempts: u32,
    body: &str,
    result_count: usize,
    error: Option<String>,
) -> TraceEvent {
    TraceEvent::ToolCall {
        index,
        name: name.to_string(),
        arguments,
        attempts,
        result_sha256: crate::sha256_hex(body.as_bytes()),
        result_count,
        error,
    }
}
