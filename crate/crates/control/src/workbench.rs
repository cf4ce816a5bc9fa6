//! The service layer shared by the HTTP API and the CLI. Each project is
//! guarded by its own mutex, so a gate check and the advance that depends on
//! it never interleave with another writer.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use care_core::agent_runtime::{AgentRunner, AgentSpec, BASELINE_AGENT, CARE_AGENT};
use care_core::artifact_store::{
    validate_project_id, ApprovalRecord, Artifact, Decision, FsBackend, LineageEntry, Project, RevisionProposal, Verdict,
};
use care_core::benchmark::{
    evaluate, generate_synthetic, load_benchmark, render_report, render_run_table, render_two_gate_table, save_benchmark, two_gate, Benchmark,
    CorpusDoc, EvaluationReport, GateRow, GenerationConfig, TwoGateDecision,
};
use care_core::clock::{Clock, IdGen, SystemClock};
use care_core::cmr::CollectionSearch;
use care_core::helper_agent::{
    check_faithfulness, prior_artifacts, ElicitationSession, HelperAgent, IntentSummary, Submission, TranscriptEntry, Violation,
};
use care_core::phase_engine::{GateStatus, ProjectConfig, ProjectState};
use care_core::transport::ModelTransport;
use care_core::{ArtifactKind, PhaseId, Role};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Who is making a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caller {
    pub role: Role,
    pub actor: String,
}

impl Caller {
    pub fn new(role: Role, actor: impl Into<String>) -> Self {
        Self { role, actor: actor.into() }
    }

    pub fn require_human(&self) -> Result<(), ApiError> {
        if self.role.is_human() {
            Ok(())
        } else {
            Err(ApiError::new("forbidden", "this action needs an sme or developer token"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectView {
    pub project_id: String,
    pub current_phase: PhaseId,
    pub config: ProjectConfig,
    pub state: ProjectState,
    pub gate: GateStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftOutcome {
    pub submission: Submission,
    /// Structural faithfulness findings for reviewers. They do not block submission.
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub report: EvaluationReport,
}

/// Whether a stored run is for the CARE or the baseline agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentChoice {
    Care,
    Baseline,
}

impl std::str::FromStr for AgentChoice {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, ApiError> {
        match s {
            "care" | CARE_AGENT => Ok(AgentChoice::Care),
            "baseline" | BASELINE_AGENT => Ok(AgentChoice::Baseline),
            _ => Err(ApiError::bad_request(format!("unknown agent {s:?}; expected care or baseline"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGateView {
    pub decision: TwoGateDecision,
    pub table: String,
}

type Shared = Arc<Mutex<Project>>;

pub struct Workbench {
    root: PathBuf,
    transport: Arc<dyn ModelTransport>,
    catalog: Arc<dyn CollectionSearch>,
    clock: Arc<dyn Clock>,
    seed: Option<u64>,
    projects: Mutex<HashMap<String, Shared>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn safe_name(kind: &str, name: &str) -> Result<(), ApiError> {
    validate_project_id(name).map_err(|_| ApiError::bad_request(format!("invalid {kind} name {name:?}")))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ApiError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(ApiError::storage)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(ApiError::storage)?;
    text.push('\n');
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(ApiError::storage)?;
    fs::rename(&tmp, path).map_err(ApiError::storage)
}

/// `<prefix>NNNN`, one past the highest such entry in `dir`.
fn next_name(dir: &Path, prefix: &str) -> Result<String, ApiError> {
    let mut max = 0u32;
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.filter_map(Result::ok) {
            let name = e.file_name().to_string_lossy().into_owned();
            let stem = name.strip_suffix(".json").unwrap_or(&name);
            if let Some(n) = stem.strip_prefix(prefix).and_then(|n| n.parse::<u32>().ok()) {
                max = max.max(n);
            }
        }
    }
    fs::create_dir_all(dir).map_err(ApiError::storage)?;
    Ok(format!("{prefix}{:04}", max + 1))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str, id: &str) -> Result<T, ApiError> {
    let text = fs::read_to_string(path).map_err(|_| ApiError::not_found(what, id))?;
    serde_json::from_str(&text).map_err(ApiError::storage)
}

impl Workbench {
    pub fn new(root: impl Into<PathBuf>, transport: Arc<dyn ModelTransport>, catalog: Arc<dyn CollectionSearch>) -> Self {
        Self {
            root: root.into(),
            transport,
            catalog,
            clock: Arc::new(SystemClock),
            seed: None,
            projects: Mutex::new(HashMap::new()),
        }
    }

    /// Use a fixed clock and id seed, for reproducible stores.
    pub fn deterministic(mut self, clock: Arc<dyn Clock>, seed: u64) -> Self {
        self.clock = clock;
        self.seed = Some(seed);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn ids(&self) -> Arc<IdGen> {
        Arc::new(match self.seed {
            Some(s) => IdGen::seeded(s),
            None => IdGen::random(),
        })
    }

    fn project_dir(&self, project_id: &str) -> PathBuf {
        self.root.join(project_id)
    }

    fn shared(&self, project_id: &str) -> Result<Shared, ApiError> {
        validate_project_id(project_id).map_err(|_| ApiError::not_found("project", project_id))?;
        let mut map = lock(&self.projects);
        if let Some(p) = map.get(project_id) {
            return Ok(p.clone());
        }
        if !FsBackend::exists(&self.root, project_id) {
            return Err(ApiError::not_found("project", project_id));
        }
        let backend = FsBackend::open(&self.root, project_id)?;
        let project = Project::open(Box::new(backend), self.clock.clone(), self.ids())?;
        let shared = Arc::new(Mutex::new(project));
        map.insert(project_id.to_string(), shared.clone());
        Ok(shared)
    }

    /// Run `f` with exclusive access to one project.
    pub fn with_project<R>(&self, project_id: &str, f: impl FnOnce(&mut Project) -> Result<R, ApiError>) -> Result<R, ApiError> {
        let shared = self.shared(project_id)?;
        let mut project = lock(&shared);
        f(&mut project)
    }

    fn view(project: &Project) -> ProjectView {
        let state = project.state().clone();
        ProjectView {
            project_id: project.id().to_string(),
            current_phase: state.current_phase,
            config: project.config().clone(),
            gate: project.gate_status(state.current_phase),
            state,
        }
    }

    // projects

    pub fn create_project(&self, project_id: &str, config: ProjectConfig) -> Result<ProjectView, ApiError> {
        validate_project_id(project_id)?;
        let mut map = lock(&self.projects);
        if map.contains_key(project_id) || FsBackend::exists(&self.root, project_id) {
            return Err(ApiError::new("project_exists", format!("project {project_id} already exists")));
        }
        let backend = FsBackend::open(&self.root, project_id)?;
        let project = Project::create(project_id, config, Box::new(backend), self.clock.clone(), self.ids())?;
        let view = Self::view(&project);
        map.insert(project_id.to_string(), Arc::new(Mutex::new(project)));
        Ok(view)
    }

    pub fn list_projects(&self) -> Result<Vec<String>, ApiError> {
        let Ok(entries) = fs::read_dir(&self.root) else {
            return Ok(Vec::new());
        };
        let mut out: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|name| FsBackend::exists(&self.root, name))
            .collect();
        out.sort();
        Ok(out)
    }

    pub fn project(&self, project_id: &str) -> Result<ProjectView, ApiError> {
        self.with_project(project_id, |p| Ok(Self::view(p)))
    }

    // artifacts

    pub fn artifacts(&self, project_id: &str) -> Result<Vec<Artifact>, ApiError> {
        self.with_project(project_id, |p| Ok(p.artifacts()))
    }

    pub fn artifact(&self, project_id: &str, artifact_id: &str) -> Result<Artifact, ApiError> {
        self.with_project(project_id, |p| Ok(p.artifact(artifact_id)?))
    }

    pub fn lineage(&self, project_id: &str, artifact_id: &str) -> Result<Vec<LineageEntry>, ApiError> {
        self.with_project(project_id, |p| Ok(p.artifact_lineage(artifact_id)?))
    }

    pub fn proposals(&self, project_id: &str, artifact_id: &str) -> Result<Vec<RevisionProposal>, ApiError> {
        self.with_project(project_id, |p| {
            p.artifact(artifact_id)?;
            Ok(p.proposals_for(artifact_id))
        })
    }

    pub fn create_artifact(
        &self,
        project_id: &str,
        phase: PhaseId,
        kind: ArtifactKind,
        content: &str,
        caller: &Caller,
    ) -> Result<Artifact, ApiError> {
        self.with_project(project_id, |p| Ok(p.create_artifact(phase, kind, content, caller.role)?))
    }

    pub fn propose(
        &self,
        project_id: &str,
        artifact_id: &str,
        base_version: u32,
        diff: &str,
        rationale: &str,
        caller: &Caller,
    ) -> Result<RevisionProposal, ApiError> {
        self.with_project(project_id, |p| {
            Ok(p.propose_revision(artifact_id, base_version, diff, rationale, caller.role)?)
        })
    }

    /// Accept or reject a pending proposal. Only people decide.
    pub fn apply(&self, project_id: &str, proposal_id: &str, decision: Decision, caller: &Caller) -> Result<Artifact, ApiError> {
        caller.require_human()?;
        self.with_project(project_id, |p| Ok(p.apply_revision(proposal_id, decision)?))
    }

    /// Let the helper agent turn review feedback into a proposal.
    pub fn feedback(&self, project_id: &str, artifact_id: &str, feedback: &str) -> Result<RevisionProposal, ApiError> {
        let helper = HelperAgent::new(self.transport.clone());
        self.with_project(project_id, |p| Ok(helper.propose_diff(p, artifact_id, feedback)?))
    }

    pub fn approve(
        &self,
        project_id: &str,
        artifact_id: &str,
        version: Option<u32>,
        verdict: Verdict,
        note: &str,
        caller: &Caller,
    ) -> Result<ApprovalRecord, ApiError> {
        self.with_project(project_id, |p| {
            let version = match version {
                Some(v) => v,
                None => p.artifact(artifact_id)?.version,
            };
            Ok(p.record_approval(artifact_id, version, caller.role, &caller.actor, verdict, note)?)
        })
    }

    // gates

    pub fn gate_status(&self, project_id: &str, phase: Option<PhaseId>) -> Result<GateStatus, ApiError> {
        self.with_project(project_id, |p| Ok(p.gate_status(phase.unwrap_or(p.state().current_phase))))
    }

    pub fn advance(&self, project_id: &str, key: Option<&str>, caller: &Caller) -> Result<ProjectState, ApiError> {
        caller.require_human()?;
        self.with_project(project_id, |p| Ok(p.advance(key)?))
    }

    pub fn revisit(&self, project_id: &str, target: PhaseId, key: Option<&str>, caller: &Caller) -> Result<ProjectState, ApiError> {
        caller.require_human()?;
        self.with_project(project_id, |p| Ok(p.revisit(target, key)?))
    }

    // elicitation

    fn session_path(&self, project_id: &str, session_id: &str) -> PathBuf {
        self.project_dir(project_id).join("sessions").join(format!("{session_id}.json"))
    }

    fn load_session(&self, project_id: &str, session_id: &str) -> Result<ElicitationSession, ApiError> {
        safe_name("session", session_id).map_err(|_| ApiError::not_found("session", session_id))?;
        read_json(&self.session_path(project_id, session_id), "session", session_id)
    }

    fn save_session(&self, session: &ElicitationSession) -> Result<(), ApiError> {
        write_json(&self.session_path(&session.project_id, &session.session_id), session)
    }

    pub fn open_session(&self, project_id: &str, phase: PhaseId) -> Result<ElicitationSession, ApiError> {
        self.with_project(project_id, |p| {
            let session_id = next_name(&self.project_dir(project_id).join("sessions"), "s")?;
            let session = ElicitationSession::new(session_id, p.id(), phase);
            self.save_session(&session)?;
            Ok(session)
        })
    }

    pub fn sessions(&self, project_id: &str) -> Result<Vec<ElicitationSession>, ApiError> {
        self.with_project(project_id, |_| {
            let dir = self.project_dir(project_id).join("sessions");
            let Ok(entries) = fs::read_dir(&dir) else {
                return Ok(Vec::new());
            };
            let mut names: Vec<String> = entries
                .filter_map(Result::ok)
                .filter_map(|e| e.file_name().into_string().ok())
                .filter_map(|n| n.strip_suffix(".json").map(str::to_string))
                .collect();
            names.sort();
            names.iter().map(|n| self.load_session(project_id, n)).collect()
        })
    }

    pub fn session(&self, project_id: &str, session_id: &str) -> Result<ElicitationSession, ApiError> {
        self.with_project(project_id, |_| self.load_session(project_id, session_id))
    }

    /// Open questions for the session. When none are pending the helper agent
    /// asks about every dimension that still has no answer.
    pub fn next_questions(&self, project_id: &str, session_id: &str) -> Result<Vec<TranscriptEntry>, ApiError> {
        let helper = HelperAgent::new(self.transport.clone());
        self.with_project(project_id, |p| {
            let mut session = self.load_session(project_id, session_id)?;
            if session.pending_questions().is_empty() && !session.unanswered_dimensions().is_empty() {
                let prior = prior_artifacts(p, session.phase);
                helper.ask(&mut session, &prior)?;
                self.save_session(&session)?;
            }
            Ok(session.pending_questions().into_iter().cloned().collect())
        })
    }

    pub fn answer(
        &self,
        project_id: &str,
        session_id: &str,
        question_id: &str,
        text: &str,
        caller: &Caller,
    ) -> Result<TranscriptEntry, ApiError> {
        self.with_project(project_id, |_| {
            let mut session = self.load_session(project_id, session_id)?;
            let entry = session.answer(question_id, text, caller.role)?.clone();
            self.save_session(&session)?;
            Ok(entry)
        })
    }

    pub fn summarize(&self, project_id: &str, session_id: &str) -> Result<IntentSummary, ApiError> {
        let helper = HelperAgent::new(self.transport.clone());
        self.with_project(project_id, |_| {
            let mut session = self.load_session(project_id, session_id)?;
            let summary = helper.summarize_intent(&session)?;
            session.note_module(care_core::helper_agent::prompts::module(
                care_core::helper_agent::prompts::SUMMARIZE_INTENT,
            ));
            if !summary.text.is_empty() {
                session.add_summary(&summary.text);
            }
            self.save_session(&session)?;
            Ok(summary)
        })
    }

    /// Draft the session's phase artifact and submit it as version 1 or as a
    /// revision proposal against the current head of that kind.
    pub fn draft(&self, project_id: &str, session_id: &str, rationale: &str) -> Result<DraftOutcome, ApiError> {
        let helper = HelperAgent::new(self.transport.clone());
        self.with_project(project_id, |p| {
            let mut session = self.load_session(project_id, session_id)?;
            let prior = prior_artifacts(p, session.phase);
            let draft = helper.draft_artifact(&session, session.phase.artifact_kind(), &prior)?;
            session.note_module(care_core::helper_agent::prompts::module(care_core::helper_agent::prompts::DRAFT_ARTIFACT));
            self.save_session(&session)?;
            let violations = check_faithfulness(&draft, &session);
            let rationale = if rationale.trim().is_empty() {
                format!("Drafted from elicitation session {session_id}")
            } else {
                rationale.to_string()
            };
            let submission = helper.submit_draft(p, &draft, &rationale)?;
            Ok(DraftOutcome { submission, violations })
        })
    }

    // benchmarks

    fn benchmark_path(&self, project_id: &str, name: &str) -> PathBuf {
        self.project_dir(project_id).join("benchmarks").join(format!("{name}.jsonl"))
    }

    pub fn put_benchmark(&self, project_id: &str, benchmark: &Benchmark) -> Result<String, ApiError> {
        safe_name("benchmark", &benchmark.name)?;
        self.with_project(project_id, |_| {
            let path = self.benchmark_path(project_id, &benchmark.name);
            fs::create_dir_all(path.parent().expect("has parent")).map_err(ApiError::storage)?;
            save_benchmark(benchmark, &path)?;
            Ok(benchmark.digest())
        })
    }

    pub fn benchmark(&self, project_id: &str, name: &str) -> Result<Benchmark, ApiError> {
        safe_name("benchmark", name).map_err(|_| ApiError::not_found("benchmark", name))?;
        self.with_project(project_id, |_| {
            let path = self.benchmark_path(project_id, name);
            if !path.is_file() {
                return Err(ApiError::not_found("benchmark", name));
            }
            let mut b = load_benchmark(&path)?;
            b.name = name.to_string();
            Ok(b)
        })
    }

    /// Generate a synthetic benchmark with the configured model and catalog and
    /// store it, with its discard log, under the project.
    pub fn generate_benchmark(
        &self,
        project_id: &str,
        corpus: &[CorpusDoc],
        config: &GenerationConfig,
    ) -> Result<care_core::benchmark::GenerationResult, ApiError> {
        safe_name("benchmark", &config.name)?;
        self.shared(project_id)?;
        let result = generate_synthetic(corpus, self.transport.as_ref(), self.catalog.as_ref(), config)?;
        self.put_benchmark(project_id, &result.benchmark)?;
        let discards = self.project_dir(project_id).join("benchmarks").join(format!("{}.discards.jsonl", config.name));
        fs::write(discards, result.discards_jsonl()).map_err(ApiError::storage)?;
        Ok(result)
    }

    fn run_dir(&self, project_id: &str, run_id: &str) -> PathBuf {
        self.project_dir(project_id).join("runs").join(run_id)
    }

    /// Evaluate one agent on a stored benchmark. The CARE agent needs an
    /// approved prompt architecture; runs before the benchmark gate passes are
    /// marked `pre_gate`.
    pub fn run(&self, project_id: &str, agent: AgentChoice, benchmark: &str, ks: &[usize]) -> Result<RunRecord, ApiError> {
        let bench = self.benchmark(project_id, benchmark)?;
        let (spec, pre_gate, run_id) = self.with_project(project_id, |p| {
            let spec = match agent {
                AgentChoice::Care => AgentSpec::care_from_project(p)?,
                AgentChoice::Baseline => AgentSpec::baseline(),
            };
            let pre_gate = !p.gate_status(PhaseId::P5Benchmark).satisfied;
            let run_id = next_name(&self.project_dir(project_id).join("runs"), "r")?;
            fs::create_dir_all(self.run_dir(project_id, &run_id).join("traces")).map_err(ApiError::storage)?;
            Ok((spec, pre_gate, run_id))
        })?;
        let runner = AgentRunner::new(self.transport.clone(), self.catalog.clone());
        let dir = self.run_dir(project_id, &run_id);
        let traces = dir.join("traces");
        spec.save(&dir.join("agent.json"))?;
        let mut report = evaluate(&runner, &spec, &bench, ks, Some(&traces))?;
        report.pre_gate = pre_gate;
        fs::write(dir.join("report.json"), report.to_json()).map_err(ApiError::storage)?;
        fs::write(dir.join("report.txt"), render_run_table(&report)?).map_err(ApiError::storage)?;
        Ok(RunRecord { run_id, report })
    }

    pub fn runs(&self, project_id: &str) -> Result<Vec<RunRecord>, ApiError> {
        self.shared(project_id)?;
        let Ok(entries) = fs::read_dir(self.project_dir(project_id).join("runs")) else {
            return Ok(Vec::new());
        };
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().join("report.json").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        ids.iter().map(|id| self.report(project_id, id)).collect()
    }

    pub fn report(&self, project_id: &str, run_id: &str) -> Result<RunRecord, ApiError> {
        self.shared(project_id)?;
        safe_name("run", run_id).map_err(|_| ApiError::not_found("run", run_id))?;
        let path = self.run_dir(project_id, run_id).join("report.json");
        let text = fs::read_to_string(&path).map_err(|_| ApiError::not_found("run", run_id))?;
        Ok(RunRecord {
            run_id: run_id.to_string(),
            report: EvaluationReport::from_json(&text)?,
        })
    }

    /// One gate's rows for a CARE run and a baseline run.
    pub fn report_table(&self, project_id: &str, care_run: &str, base_run: &str) -> Result<String, ApiError> {
        let c = self.report(project_id, care_run)?.report;
        let b = self.report(project_id, base_run)?.report;
        Ok(render_report(&c, &b, c.gate.label())?)
    }

    /// The two-gate decision and the combined table.
    pub fn two_gate(
        &self,
        project_id: &str,
        synthetic: (&str, &str),
        gold: Option<(&str, &str)>,
        gold_k: usize,
    ) -> Result<TwoGateView, ApiError> {
        let cs = self.report(project_id, synthetic.0)?.report;
        let bs = self.report(project_id, synthetic.1)?.report;
        let gold = match gold {
            Some((c, b)) => Some((self.report(project_id, c)?.report, self.report(project_id, b)?.report)),
            None => None,
        };
        let decision = two_gate(&cs, &bs, gold.as_ref().map(|g| &g.0), gold.as_ref().map(|g| &g.1), gold_k)?;
        let mut rows = vec![GateRow::from_reports(&cs, &bs, cs.gate.label())?];
        if let Some((c, b)) = &gold {
            rows.push(GateRow::from_reports(c, b, c.gate.label())?);
        }
        Ok(TwoGateView {
            decision,
            table: render_two_gate_table(&rows)?,
        })
    }
}
