//! REST API over [`Workbench`]. Every route needs a bearer token; the token's
//! role is what approvals, answers and authored artifacts are recorded under.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use axum::extract::{FromRequestParts, Path as UrlPath, Query, State};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use care_core::artifact_store::{Decision, Verdict};
use care_core::benchmark::{Benchmark, CorpusDoc, GenerationConfig, DEFAULT_GOLD_PRIMARY_K, DEFAULT_KS};
use care_core::phase_engine::ProjectConfig;
use care_core::{ArtifactKind, PhaseId, Role};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::workbench::{AgentChoice, Caller, Workbench};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

/// Bearer tokens and the caller each one stands for.
#[derive(Debug, Clone, Default)]
pub struct Tokens {
    by_token: HashMap<String, Caller>,
}

impl Tokens {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: impl Into<String>, caller: Caller) {
        self.by_token.insert(token.into(), caller);
    }

    /// Parse `token role actor` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ApiError> {
        let mut tokens = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [token, role, actor] = parts[..] else {
                return Err(ApiError::bad_request(format!("token file line {}: expected `token role actor`", i + 1)));
            };
            let role = Role::from_str(role).map_err(|e| ApiError::bad_request(format!("token file line {}: {e}", i + 1)))?;
            tokens.insert(token, Caller::new(role, actor));
        }
        Ok(tokens)
    }

    pub fn load(path: &Path) -> Result<Self, ApiError> {
        let text = fs::read_to_string(path).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }

    fn caller(&self, headers: &HeaderMap) -> Option<Caller> {
        let value = headers.get("authorization")?.to_str().ok()?;
        let token = value.strip_prefix("Bearer ").or_else(|| value.strip_prefix("bearer "))?;
        self.by_token.get(token.trim()).cloned()
    }
}

/// A stored response for a repeated `Idempotency-Key`.
type Replay = (u16, Value);

pub struct AppState {
    pub workbench: Workbench,
    pub tokens: Tokens,
    idempotent: Mutex<HashMap<(String, String, String), Replay>>,
}

impl AppState {
    pub fn new(workbench: Workbench, tokens: Tokens) -> Arc<Self> {
        Arc::new(Self {
            workbench,
            tokens,
            idempotent: Mutex::new(HashMap::new()),
        })
    }
}

type Shared = Arc<AppState>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// The authenticated caller.
pub struct Auth(pub Caller);

impl FromRequestParts<Shared> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, ApiError> {
        state
            .tokens
            .caller(&parts.headers)
            .map(Auth)
            .ok_or_else(|| ApiError::new("unauthorized", "missing or unknown bearer token"))
    }
}

/// JSON body whose parse failures come back as `invalid_request`.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned + Send> axum::extract::FromRequest<Shared> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &Shared) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::bad_request(e.body_text())),
        }
    }
}

fn idempotency_key(headers: &HeaderMap) -> Option<String> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(str::to_string)
}

/// Run blocking service work off the async executor.
async fn blocking<T: Serialize + Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&Workbench) -> Result<T, ApiError> + Send + 'static,
) -> Result<Value, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state.workbench).and_then(|v| serde_json::to_value(v).map_err(ApiError::storage)))
        .await
        .map_err(|e| ApiError::storage(format!("worker failed: {e}")))?
}

/// A mutating call. A repeated `Idempotency-Key` from the same actor on the
/// same project replays the first successful response without running again.
async fn mutate<T: Serialize + Send + 'static>(
    state: &Shared,
    project: &str,
    caller: &Caller,
    headers: &HeaderMap,
    created: bool,
    f: impl FnOnce(&Workbench) -> Result<T, ApiError> + Send + 'static,
) -> Result<Response, ApiError> {
    let key = idempotency_key(headers).map(|k| (project.to_string(), caller.actor.clone(), k));
    if let Some(k) = &key {
        if let Some((status, body)) = state.idempotent.lock().unwrap_or_else(|p| p.into_inner()).get(k).cloned() {
            return Ok((StatusCode::from_u16(status).unwrap_or(StatusCode::OK), Json(body)).into_response());
        }
    }
    let body = blocking(state, f).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    if let Some(k) = key {
        state
            .idempotent
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(k, (status.as_u16(), body.clone()));
    }
    Ok((status, Json(body)).into_response())
}

fn parse<T: FromStr>(what: &str, s: &str) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| ApiError::bad_request(format!("{what}: {e}")))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/projects", get(list_projects).post(create_project))
        .route("/api/projects/{project}", get(project))
        .route("/api/projects/{project}/artifacts", get(artifacts).post(create_artifact))
        .route("/api/projects/{project}/artifacts/{artifact}", get(artifact))
        .route("/api/projects/{project}/artifacts/{artifact}/lineage", get(lineage))
        .route("/api/projects/{project}/artifacts/{artifact}/revisions", get(proposals).post(propose))
        .route("/api/projects/{project}/artifacts/{artifact}/feedback", post(feedback))
        .route("/api/projects/{project}/artifacts/{artifact}/approvals", post(approve))
        .route("/api/projects/{project}/revisions/{proposal}/decision", post(decide))
        .route("/api/projects/{project}/gate-status", get(gate_status))
        .route("/api/projects/{project}/advance", post(advance))
        .route("/api/projects/{project}/revisit", post(revisit))
        .route("/api/projects/{project}/sessions", get(sessions).post(open_session))
        .route("/api/projects/{project}/sessions/{session}", get(session))
        .route("/api/projects/{project}/sessions/{session}/next-questions", get(next_questions))
        .route("/api/projects/{project}/sessions/{session}/answers", post(answer))
        .route("/api/projects/{project}/sessions/{session}/summary", post(summarize))
        .route("/api/projects/{project}/sessions/{session}/draft", post(draft))
        .route("/api/projects/{project}/benchmarks/generate", post(generate))
        .route("/api/projects/{project}/benchmarks/{name}", get(benchmark).put(put_benchmark))
        .route("/api/projects/{project}/runs", get(runs).post(run))
        .route("/api/projects/{project}/runs/two-gate", get(two_gate))
        .route("/api/projects/{project}/runs/{run}/report", get(report))
        .fallback(|| async { ApiError::new("unknown_route", "no such endpoint") })
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct NewProject {
    project_id: String,
    #[serde(default)]
    config: ProjectConfig,
}

async fn list_projects(State(s): State<Shared>, _: Auth) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, |w| w.list_projects()).await?))
}

async fn create_project(State(s): State<Shared>, Auth(c): Auth, h: HeaderMap, Body(b): Body<NewProject>) -> Result<Response, ApiError> {
    c.require_human()?;
    let id = b.project_id.clone();
    mutate(&s, &id, &c, &h, true, move |w| w.create_project(&b.project_id, b.config)).await
}

async fn project(State(s): State<Shared>, _: Auth, UrlPath(p): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.project(&p)).await?))
}

async fn artifacts(State(s): State<Shared>, _: Auth, UrlPath(p): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.artifacts(&p)).await?))
}

#[derive(Deserialize)]
struct NewArtifact {
    phase: String,
    #[serde(default)]
    kind: Option<String>,
    content: String,
}

async fn create_artifact(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath(p): UrlPath<String>,
    Body(b): Body<NewArtifact>,
) -> Result<Response, ApiError> {
    let phase: PhaseId = parse("phase", &b.phase)?;
    let kind: ArtifactKind = match &b.kind {
        Some(k) => parse("kind", k)?,
        None => phase.artifact_kind(),
    };
    let caller = c.clone();
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.create_artifact(&p, phase, kind, &b.content, &caller)).await
}

async fn artifact(State(s): State<Shared>, _: Auth, UrlPath((p, a)): UrlPath<(String, String)>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.artifact(&p, &a)).await?))
}

async fn lineage(State(s): State<Shared>, _: Auth, UrlPath((p, a)): UrlPath<(String, String)>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.lineage(&p, &a)).await?))
}

async fn proposals(State(s): State<Shared>, _: Auth, UrlPath((p, a)): UrlPath<(String, String)>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.proposals(&p, &a)).await?))
}

#[derive(Deserialize)]
struct NewRevision {
    base_version: u32,
    diff: String,
    #[serde(default)]
    rationale: String,
}

async fn propose(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, a)): UrlPath<(String, String)>,
    Body(b): Body<NewRevision>,
) -> Result<Response, ApiError> {
    let caller = c.clone();
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.propose(&p, &a, b.base_version, &b.diff, &b.rationale, &caller)).await
}

#[derive(Deserialize)]
struct Feedback {
    feedback: String,
}

async fn feedback(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, a)): UrlPath<(String, String)>,
    Body(b): Body<Feedback>,
) -> Result<Response, ApiError> {
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.feedback(&p, &a, &b.feedback)).await
}

#[derive(Deserialize)]
struct NewDecision {
    decision: Decision,
}

async fn decide(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, r)): UrlPath<(String, String)>,
    Body(b): Body<NewDecision>,
) -> Result<Response, ApiError> {
    let caller = c.clone();
    mutate(&s, &p.clone(), &c, &h, false, move |w| w.apply(&p, &r, b.decision, &caller)).await
}

#[derive(Deserialize)]
struct NewApproval {
    #[serde(default)]
    version: Option<u32>,
    verdict: Verdict,
    #[serde(default)]
    note: String,
}

async fn approve(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, a)): UrlPath<(String, String)>,
    Body(b): Body<NewApproval>,
) -> Result<Response, ApiError> {
    let caller = c.clone();
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.approve(&p, &a, b.version, b.verdict, &b.note, &caller)).await
}

#[derive(Deserialize)]
struct PhaseQuery {
    #[serde(default)]
    phase: Option<String>,
}

async fn gate_status(
    State(s): State<Shared>,
    _: Auth,
    UrlPath(p): UrlPath<String>,
    Query(q): Query<PhaseQuery>,
) -> Result<Json<Value>, ApiError> {
    let phase = q.phase.as_deref().map(|v| parse::<PhaseId>("phase", v)).transpose()?;
    Ok(Json(blocking(&s, move |w| w.gate_status(&p, phase)).await?))
}

async fn advance(State(s): State<Shared>, Auth(c): Auth, h: HeaderMap, UrlPath(p): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let key = idempotency_key(&h);
    Ok(Json(blocking(&s, move |w| w.advance(&p, key.as_deref(), &c)).await?))
}

#[derive(Deserialize)]
struct Revisit {
    target: String,
}

async fn revisit(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath(p): UrlPath<String>,
    Body(b): Body<Revisit>,
) -> Result<Json<Value>, ApiError> {
    let target: PhaseId = parse("target", &b.target)?;
    let key = idempotency_key(&h);
    Ok(Json(blocking(&s, move |w| w.revisit(&p, target, key.as_deref(), &c)).await?))
}

#[derive(Deserialize)]
struct NewSession {
    phase: String,
}

async fn sessions(State(s): State<Shared>, _: Auth, UrlPath(p): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.sessions(&p)).await?))
}

async fn open_session(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath(p): UrlPath<String>,
    Body(b): Body<NewSession>,
) -> Result<Response, ApiError> {
    let phase: PhaseId = parse("phase", &b.phase)?;
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.open_session(&p, phase)).await
}

async fn session(State(s): State<Shared>, _: Auth, UrlPath((p, id)): UrlPath<(String, String)>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.session(&p, &id)).await?))
}

async fn next_questions(
    State(s): State<Shared>,
    _: Auth,
    UrlPath((p, id)): UrlPath<(String, String)>,
) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.next_questions(&p, &id)).await?))
}

#[derive(Deserialize)]
struct NewAnswer {
    question_id: String,
    text: String,
}

async fn answer(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, id)): UrlPath<(String, String)>,
    Body(b): Body<NewAnswer>,
) -> Result<Response, ApiError> {
    let caller = c.clone();
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.answer(&p, &id, &b.question_id, &b.text, &caller)).await
}

async fn summarize(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, id)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    mutate(&s, &p.clone(), &c, &h, false, move |w| w.summarize(&p, &id)).await
}

#[derive(Deserialize, Default)]
struct NewDraft {
    #[serde(default)]
    rationale: String,
}

async fn draft(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, id)): UrlPath<(String, String)>,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let b: NewDraft = if body.iter().all(u8::is_ascii_whitespace) {
        NewDraft::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.draft(&p, &id, &b.rationale)).await
}

#[derive(Deserialize)]
struct NewGeneration {
    name: String,
    corpus: Vec<CorpusDoc>,
    #[serde(default)]
    max_attempts: Option<usize>,
    #[serde(default)]
    page_size: Option<u32>,
}

async fn generate(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath(p): UrlPath<String>,
    Body(b): Body<NewGeneration>,
) -> Result<Response, ApiError> {
    let mut config = GenerationConfig::new(b.name);
    if let Some(m) = b.max_attempts {
        config.max_attempts = m;
    }
    if let Some(ps) = b.page_size {
        config.page_size = ps;
    }
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.generate_benchmark(&p, &b.corpus, &config)).await
}

async fn benchmark(State(s): State<Shared>, _: Auth, UrlPath((p, n)): UrlPath<(String, String)>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.benchmark(&p, &n)).await?))
}

async fn put_benchmark(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath((p, n)): UrlPath<(String, String)>,
    Body(b): Body<Benchmark>,
) -> Result<Response, ApiError> {
    if b.name != n {
        return Err(ApiError::bad_request(format!("body names benchmark {:?}, URL names {n:?}", b.name)));
    }
    mutate(&s, &p.clone(), &c, &h, true, move |w| {
        b.validate()?;
        w.put_benchmark(&p, &b).map(|digest| json!({ "benchmark": b.name, "digest": digest, "n": b.len() }))
    })
    .await
}

#[derive(Deserialize)]
struct NewRun {
    agent: String,
    benchmark: String,
    #[serde(default)]
    ks: Option<Vec<usize>>,
}

async fn runs(State(s): State<Shared>, _: Auth, UrlPath(p): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.runs(&p)).await?))
}

async fn run(
    State(s): State<Shared>,
    Auth(c): Auth,
    h: HeaderMap,
    UrlPath(p): UrlPath<String>,
    Body(b): Body<NewRun>,
) -> Result<Response, ApiError> {
    let agent: AgentChoice = b.agent.parse()?;
    let ks = b.ks.unwrap_or_else(|| DEFAULT_KS.to_vec());
    mutate(&s, &p.clone(), &c, &h, true, move |w| w.run(&p, agent, &b.benchmark, &ks)).await
}

async fn report(State(s): State<Shared>, _: Auth, UrlPath((p, r)): UrlPath<(String, String)>) -> Result<Json<Value>, ApiError> {
    Ok(Json(blocking(&s, move |w| w.report(&p, &r)).await?))
}

#[derive(Deserialize)]
struct TwoGateQuery {
    care_synthetic: String,
    baseline_synthetic: String,
    #[serde(default)]
    care_gold: Option<String>,
    #[serde(default)]
    baseline_gold: Option<String>,
    #[serde(default)]
    k: Option<usize>,
}

async fn two_gate(
    State(s): State<Shared>,
    _: Auth,
    UrlPath(p): UrlPath<String>,
    Query(q): Query<TwoGateQuery>,
) -> Result<Json<Value>, ApiError> {
    let k = q.k.unwrap_or(DEFAULT_GOLD_PRIMARY_K);
    Ok(Json(
        blocking(&s, move |w| {
            let gold = match (&q.care_gold, &q.baseline_gold) {
                (Some(c), Some(b)) => Some((c.as_str(), b.as_str())),
                (None, None) => None,
                _ => return Err(ApiError::bad_request("give both care_gold and baseline_gold, or neither")),
            };
            w.two_gate(&p, (&q.care_synthetic, &q.baseline_synthetic), gold, k)
        })
        .await?,
    ))
}
