//! HTTP API behaviour through the router, without a socket.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use care_control::{router, AppState, Caller, Tokens, Workbench};
use care_core::benchmark::load_corpus;
use care_core::clock::SteppingClock;
use care_core::cmr::FixtureCatalog;
use care_core::transport::SimulatedModel;
use care_core::Role;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const SME: &str = "sme-token";
const DEV: &str = "dev-token";
const HELPER: &str = "helper-token";

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures"))
}

struct Api {
    app: Router,
    _dir: TempDir,
}

struct Reply {
    status: StatusCode,
    body: Value,
}

impl Reply {
    fn code(&self) -> &str {
        self.body["code"].as_str().unwrap_or_default()
    }
}

impl Api {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let catalog = FixtureCatalog::load(&fixtures().join("catalog.jsonl")).unwrap();
        let workbench = Workbench::new(dir.path(), Arc::new(SimulatedModel), Arc::new(catalog))
            .deterministic(Arc::new(SteppingClock::epoch()), 7);
        let mut tokens = Tokens::new();
        tokens.insert(SME, Caller::new(Role::Sme, "alice"));
        tokens.insert(DEV, Caller::new(Role::Developer, "bob"));
        tokens.insert(HELPER, Caller::new(Role::HelperAgent, "helper"));
        Self {
            app: router(AppState::new(workbench, tokens)),
            _dir: dir,
        }
    }

    async fn send(&self, method: Method, uri: &str, token: Option<&str>, key: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if let Some(k) = key {
            req = req.header("idempotency-key", k);
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        Reply { status, body }
    }

    async fn get(&self, uri: &str, token: &str) -> Reply {
        self.send(Method::GET, uri, Some(token), None, None).await
    }

    async fn post(&self, uri: &str, token: &str, body: Value) -> Reply {
        self.send(Method::POST, uri, Some(token), None, Some(body)).await
    }

    async fn project(&self, id: &str) {
        let r = self.post("/api/projects", SME, json!({ "project_id": id })).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    }

    /// Elicit, draft and approve the current phase, then advance.
    async fn complete_phase(&self, p: &str, phase: &str) -> String {
        let s = self.post(&format!("/api/projects/{p}/sessions"), SME, json!({ "phase": phase })).await;
        assert_eq!(s.status, StatusCode::CREATED, "{}", s.body);
        let sid = s.body["session_id"].as_str().unwrap().to_string();
        loop {
            let q = self.get(&format!("/api/projects/{p}/sessions/{sid}/next-questions"), SME).await;
            assert_eq!(q.status, StatusCode::OK, "{}", q.body);
            let questions = q.body.as_array().unwrap().clone();
            if questions.is_empty() {
                break;
            }
            for question in questions {
                let dim = question["dimension_id"].as_str().unwrap_or("general");
                let a = self
                    .post(
                        &format!("/api/projects/{p}/sessions/{sid}/answers"),
                        SME,
                        json!({ "question_id": question["entry_id"], "text": format!("For {dim}: the agent must use CMR collection search only.") }),
                    )
                    .await;
                assert_eq!(a.status, StatusCode::CREATED, "{}", a.body);
            }
        }
        let d = self.post(&format!("/api/projects/{p}/sessions/{sid}/draft"), DEV, json!({})).await;
        assert_eq!(d.status, StatusCode::CREATED, "{}", d.body);
        assert_eq!(d.body["submission"]["outcome"], "created");
        let aid = d.body["submission"]["artifact"]["artifact_id"].as_str().unwrap().to_string();
        assert_eq!(d.body["submission"]["artifact"]["authored_by"], "helper_agent");

        let approvals = format!("/api/projects/{p}/artifacts/{aid}/approvals");
        let h = self.post(&approvals, HELPER, json!({ "verdict": "approve" })).await;
        assert_eq!(h.status, StatusCode::FORBIDDEN);
        assert_eq!(h.code(), "helper_agent_cannot_approve");
        for token in [SME, DEV] {
            let r = self.post(&approvals, token, json!({ "verdict": "approve" })).await;
            assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        }
        let g = self.get(&format!("/api/projects/{p}/gate-status"), DEV).await;
        assert_eq!(g.body["satisfied"], true, "{}", g.body);
        let a = self
            .send(Method::POST, &format!("/api/projects/{p}/advance"), Some(DEV), Some(&format!("adv-{phase}")), None)
            .await;
        assert_eq!(a.status, StatusCode::OK, "{}", a.body);
        aid
    }
}

#[tokio::test]
async fn every_route_needs_a_known_token() {
    let api = Api::new();
    let r = api.send(Method::GET, "/api/projects", None, None, None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(r.code(), "unauthorized");
    let r = api.send(Method::GET, "/api/projects", Some("nope"), None, None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let r = api.get("/api/health", SME).await;
    assert_eq!(r.body["status"], "ok");
    let r = api.get("/api/nowhere", SME).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.code(), "unknown_route");
}

#[tokio::test]
async fn fresh_project_gate_and_blocked_advance() {
    let api = Api::new();
    api.project("demo").await;
    let dup = api.post("/api/projects", SME, json!({ "project_id": "demo" })).await;
    assert_eq!(dup.status, StatusCode::CONFLICT);
    assert_eq!(dup.code(), "project_exists");

    let g = api.get("/api/projects/demo/gate-status", DEV).await;
    assert_eq!(g.body["phase"], "P1_scope");
    assert_eq!(g.body["satisfied"], false);
    assert_eq!(g.body["missing"][0]["kind"], "scope_spec");

    let a = api.send(Method::POST, "/api/projects/demo/advance", Some(DEV), None, None).await;
    assert_eq!(a.status, StatusCode::CONFLICT);
    assert_eq!(a.code(), "gate_not_satisfied");
    assert_eq!(a.body["details"]["missing"][0]["kind"], "scope_spec");

    let h = api.send(Method::POST, "/api/projects/demo/advance", Some(HELPER), None, None).await;
    assert_eq!(h.status, StatusCode::FORBIDDEN);

    let missing = api.get("/api/projects/ghost", DEV).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.code(), "unknown_project");
}

#[tokio::test]
async fn revisions_need_a_current_base() {
    let api = Api::new();
    api.project("demo").await;
    let a = api
        .post("/api/projects/demo/artifacts", DEV, json!({ "phase": "P1", "content": "# Scope\n\nfirst line\nsecond line\n" }))
        .await;
    assert_eq!(a.status, StatusCode::CREATED, "{}", a.body);
    assert_eq!(a.body["version"], 1);
    assert_eq!(a.body["kind"], "scope_spec");
    let aid = a.body["artifact_id"].as_str().unwrap().to_string();
    let revisions = format!("/api/projects/demo/artifacts/{aid}/revisions");
    let diff = "--- a\n+++ b\n@@ -1,4 +1,4 @@\n # Scope\n \n-first line\n+first line, edited\n second line\n";

    // A reviewer rejects the first proposal; the edited resubmission is accepted.
    let p1 = api.post(&revisions, DEV, json!({ "base_version": 1, "diff": diff, "rationale": "wording" })).await;
    assert_eq!(p1.status, StatusCode::CREATED, "{}", p1.body);
    assert_eq!(p1.body["state"], "pending");
    let pid = p1.body["proposal_id"].as_str().unwrap().to_string();
    let r = api.post(&format!("/api/projects/demo/revisions/{pid}/decision"), SME, json!({ "decision": "reject" })).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let again = api.post(&format!("/api/projects/demo/revisions/{pid}/decision"), SME, json!({ "decision": "accept" })).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    assert_eq!(again.code(), "proposal_not_pending");

    let edited = diff.replace("first line, edited", "first line, reworded");
    let p2 = api.post(&revisions, DEV, json!({ "base_version": 1, "diff": edited })).await;
    assert_eq!(p2.status, StatusCode::CREATED, "{}", p2.body);
    let pid2 = p2.body["proposal_id"].as_str().unwrap().to_string();
    let accepted = api.post(&format!("/api/projects/demo/revisions/{pid2}/decision"), SME, json!({ "decision": "accept" })).await;
    assert_eq!(accepted.status, StatusCode::OK, "{}", accepted.body);
    assert_eq!(accepted.body["version"], 2);
    assert_eq!(accepted.body["parent_version"], 1);
    assert!(accepted.body["content"].as_str().unwrap().contains("first line, reworded"));

    let stale = api.post(&revisions, DEV, json!({ "base_version": 1, "diff": diff })).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    assert_eq!(stale.code(), "stale_base");

    let lineage = api.get(&format!("/api/projects/demo/artifacts/{aid}/lineage"), DEV).await;
    assert_eq!(lineage.body.as_array().unwrap().len(), 2);
    let proposals = api.get(&revisions, DEV).await;
    let states: Vec<&str> = proposals.body.as_array().unwrap().iter().map(|p| p["state"].as_str().unwrap()).collect();
    assert_eq!(states, ["rejected", "accepted"]);

    let old = api.post(&format!("/api/projects/demo/artifacts/{aid}/approvals"), SME, json!({ "version": 1, "verdict": "approve" })).await;
    assert_eq!(old.status, StatusCode::CONFLICT);
    assert_eq!(old.code(), "version_not_head");

    let bad = api.post(&revisions, DEV, json!({ "diff": diff })).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(bad.code(), "invalid_request");
}

#[tokio::test]
async fn idempotency_keys_replay_the_first_response() {
    let api = Api::new();
    api.project("demo").await;
    let body = json!({ "phase": "P1", "content": "# Scope\n\ntext\n" });
    let first = api.send(Method::POST, "/api/projects/demo/artifacts", Some(DEV), Some("k1"), Some(body.clone())).await;
    let second = api.send(Method::POST, "/api/projects/demo/artifacts", Some(DEV), Some("k1"), Some(body.clone())).await;
    assert_eq!(first.status, StatusCode::CREATED);
    assert_eq!(first.body, second.body);
    let listed = api.get("/api/projects/demo/artifacts", DEV).await;
    assert_eq!(listed.body.as_array().unwrap().len(), 1);

    let third = api.send(Method::POST, "/api/projects/demo/artifacts", Some(DEV), Some("k2"), Some(body)).await;
    assert_ne!(third.body["artifact_id"], first.body["artifact_id"]);
}

#[tokio::test]
async fn full_workflow_through_benchmark_runs() {
    let api = Api::new();
    api.project("demo").await;
    let phases = ["P1", "P2_1", "P2_2", "P2_3", "P3_1", "P3_2", "P4"];
    let mut ids = Vec::new();
    for phase in phases {
        ids.push(api.complete_phase("demo", phase).await);
    }
    let state = api.get("/api/projects/demo", DEV).await;
    assert_eq!(state.body["current_phase"], "P5_benchmark", "{}", state.body);

    // Retrying advance with a used key is a no-op.
    let retry = api.send(Method::POST, "/api/projects/demo/advance", Some(DEV), Some("adv-P4"), None).await;
    assert_eq!(retry.status, StatusCode::OK, "{}", retry.body);
    assert_eq!(retry.body["current_phase"], "P5_benchmark");

    let corpus = load_corpus(&fixtures().join("corpus_20.jsonl")).unwrap();
    let g = api
        .post("/api/projects/demo/benchmarks/generate", DEV, json!({ "name": "synth", "corpus": corpus }))
        .await;
    assert_eq!(g.status, StatusCode::CREATED, "{}", g.body);
    let n = g.body["benchmark"]["queries"].as_array().unwrap().len();
    assert!(n > 0);
    let stored = api.get("/api/projects/demo/benchmarks/synth", DEV).await;
    assert_eq!(stored.body["queries"].as_array().unwrap().len(), n);

    let mut runs = Vec::new();
    for agent in ["care", "baseline"] {
        let r = api.post("/api/projects/demo/runs", DEV, json!({ "agent": agent, "benchmark": "synth" })).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        assert_eq!(r.body["report"]["pre_gate"], true);
        assert_eq!(r.body["report"]["n"], n);
        runs.push(r.body["run_id"].as_str().unwrap().to_string());
    }
    let report = api.get(&format!("/api/projects/demo/runs/{}/report", runs[0]), DEV).await;
    assert_eq!(report.body["report"]["agent_name"], "cmr_care_v1");
    let listed = api.get("/api/projects/demo/runs", DEV).await;
    assert_eq!(listed.body.as_array().unwrap().len(), 2);

    let tg = api
        .get(&format!("/api/projects/demo/runs/two-gate?care_synthetic={}&baseline_synthetic={}", runs[0], runs[1]), DEV)
        .await;
    assert_eq!(tg.status, StatusCode::OK, "{}", tg.body);
    assert!(tg.body["decision"]["synthetic_outcome"].is_string());
    assert!(tg.body["table"].as_str().unwrap().starts_with("Gate\tAgent\tRecall@1\tRecall@3\tRecall@5\n"));

    let half = api
        .get(&format!("/api/projects/demo/runs/two-gate?care_synthetic={}&baseline_synthetic={}&care_gold={}", runs[0], runs[1], runs[0]), DEV)
        .await;
    assert_eq!(half.status, StatusCode::BAD_REQUEST);

    // Revisiting P2_2 stales everything from P2_2 through P4.
    let rv = api.post("/api/projects/demo/revisit", SME, json!({ "target": "P2_2" })).await;
    assert_eq!(rv.status, StatusCode::OK, "{}", rv.body);
    assert_eq!(rv.body["current_phase"], "P2_2_context");
    for (phase, id) in phases.iter().zip(&ids) {
        let a = api.get(&format!("/api/projects/demo/artifacts/{id}"), DEV).await;
        let expected = if ["P1", "P2_1", "P2_2"].contains(phase) { "approved" } else { "stale" };
        assert_eq!(a.body["status"], expected, "{phase}: {}", a.body);
    }
}
