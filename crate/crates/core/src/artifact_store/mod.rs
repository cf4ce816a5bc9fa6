//! Versioned artifact storage with diff-based revisions and role-attributed approvals.
//!
//! A [`Project`] is the unit of serialization: every mutation validates against
//! in-memory state, appends one [`LogEvent`], and then folds that event into
//! state through the same code path used when reopening a project from its log.

mod diff;
mod log;
pub mod snapshot;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use self::diff::{apply as apply_diff, unified_diff, validate as validate_diff, DiffError};
pub use self::log::{Backend, FsBackend, LogEvent, MemoryBackend};
use crate::clock::{Clock, IdGen};
use crate::domain::{ArtifactKind, PhaseId, Role};
use crate::phase_engine::{ProjectConfig, ProjectState, Transition, TransitionCause};
use crate::ErrorCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactStatus {
    Draft,
    UnderReview,
    Approved,
    Rejected,
    Superseded,
    Stale,
}

impl fmt::Display for ArtifactStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArtifactStatus::Draft => "draft",
            ArtifactStatus::UnderReview => "under_review",
            ArtifactStatus::Approved => "approved",
            ArtifactStatus::Rejected => "rejected",
            ArtifactStatus::Superseded => "superseded",
            ArtifactStatus::Stale => "stale",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalState {
    Pending,
    Accepted,
    Rejected,
}

/// The head (or a chosen version) of an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub artifact_id: String,
    pub project_id: String,
    pub phase: PhaseId,
    pub kind: ArtifactKind,
    pub version: u32,
    pub content: String,
    pub status: ArtifactStatus,
    pub authored_by: Role,
    pub parent_version: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionProposal {
    pub proposal_id: String,
    pub artifact_id: String,
    pub base_version: u32,
    pub diff: String,
    pub rationale: String,
    pub proposed_by: Role,
    pub state: ProposalState,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalRecord {
    pub artifact_id: String,
    pub version: u32,
    pub role: Role,
    pub actor: String,
    pub verdict: Verdict,
    pub note: String,
    pub timestamp: DateTime<Utc>,
    /// Approval round. Revisiting an earlier phase opens a new round for
    /// downstream artifacts; only the current round counts toward a gate.
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub version: u32,
    pub content: String,
    pub status: ArtifactStatus,
    pub approvals: Vec<ApprovalRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("artifact kind {kind} is not legal in phase {phase}")]
    IllegalKindForPhase { kind: ArtifactKind, phase: PhaseId },
    #[error("artifact content is empty")]
    EmptyContent,
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("unknown proposal {0}")]
    UnknownProposal(String),
    #[error("proposal {0} is no longer pending")]
    ProposalNotPending(String),
    #[error("base version {base} is stale; head is v{head}")]
    StaleBase { base: u32, head: u32 },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("helper agents cannot approve or reject artifacts")]
    HelperAgentCannotApprove,
    #[error("version {version} is not the head (v{head})")]
    VersionNotHead { version: u32, head: u32 },
    #[error("version {0} was rejected; propose a revision instead")]
    VersionRejected(u32),
    #[error("invalid project id {0:?}")]
    InvalidProjectId(String),
    #[error("corrupt project store: {0}")]
    Corrupt(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl ErrorCode for StoreError {
    fn code(&self) -> &'static str {
        match self {
            StoreError::IllegalKindForPhase { .. } => "illegal_kind_for_phase",
            StoreError::EmptyContent => "empty_content",
            StoreError::UnknownArtifact(_) => "unknown_artifact",
            StoreError::UnknownProposal(_) => "unknown_proposal",
            StoreError::ProposalNotPending(_) => "proposal_not_pending",
            StoreError::StaleBase { .. } => "stale_base",
            StoreError::Diff(DiffError::Malformed(_)) => "malformed_diff",
            StoreError::Diff(DiffError::Conflict(_)) => "diff_conflict",
            StoreError::HelperAgentCannotApprove => "helper_agent_cannot_approve",
            StoreError::VersionNotHead { .. } => "version_not_head",
            StoreError::VersionRejected(_) => "version_rejected",
            StoreError::InvalidProjectId(_) => "invalid_project_id",
            StoreError::Corrupt(_) => "corrupt_store",
            StoreError::Io(_) | StoreError::Json(_) => "storage_error",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct VersionRecord {
    pub(crate) version: u32,
    pub(crate) content: String,
    pub(crate) parent_version: Option<u32>,
    pub(crate) authored_by: Role,
    /// Proposal that produced this version (none for v1).
    pub(crate) proposal_id: Option<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct ArtifactRecord {
    pub(crate) artifact_id: String,
    pub(crate) phase: PhaseId,
    pub(crate) kind: ArtifactKind,
    pub(crate) versions: Vec<VersionRecord>,
    pub(crate) status: ArtifactStatus,
    /// Status to restore when the last pending proposal is rejected.
    pub(crate) status_before_review: Option<ArtifactStatus>,
    pub(crate) round: u32,
    pub(crate) approvals: Vec<ApprovalRecord>,
}

impl ArtifactRecord {
    pub(crate) fn head(&self) -> &VersionRecord {
        self.versions.last().expect("artifact has at least one version")
    }

    pub(crate) fn head_version(&self) -> u32 {
        self.head().version
    }

    /// Approvals of the head in the current round.
    pub(crate) fn current_approvals(&self) -> impl Iterator<Item = &ApprovalRecord> {
        let head = self.head_version();
        let round = self.round;
        self.approvals
            .iter()
            .filter(move |a| a.version == head && a.round == round)
    }

    /// Status an under-review artifact would fall back to.
    pub(crate) fn effective_status(&self) -> ArtifactStatus {
        match self.status {
            ArtifactStatus::UnderReview => self.status_before_review.unwrap_or(ArtifactStatus::Draft),
            s => s,
        }
    }
}

/// One project's artifacts, proposals, approvals and phase state.
pub struct Project {
    pub(crate) id: String,
    pub(crate) config: ProjectConfig,
    pub(crate) artifacts: BTreeMap<String, ArtifactRecord>,
    pub(crate) proposals: BTreeMap<String, RevisionProposal>,
    pub(crate) state: ProjectState,
    pub(crate) idempotency: BTreeMap<String, ProjectState>,
    backend: Box<dyn Backend>,
    clock: Arc<dyn Clock>,
    ids: Arc<IdGen>,
    last_ts: DateTime<Utc>,
}

impl fmt::Debug for Project {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Project")
            .field("id", &self.id)
            .field("current_phase", &self.state.current_phase)
            .field("artifacts", &self.artifacts.len())
            .finish()
    }
}

pub fn validate_project_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with(['.', '-'])
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidProjectId(id.to_string()))
    }
}

impl Project {
    pub fn create(
        project_id: &str,
        config: ProjectConfig,
        backend: Box<dyn Backend>,
        clock: Arc<dyn Clock>,
        ids: Arc<IdGen>,
    ) -> Result<Self, StoreError> {
        validate_project_id(project_id)?;
        if !backend.events()?.is_empty() {
            return Err(StoreError::Corrupt(format!("project {project_id} already has a log")));
        }
        let now = clock.now();
        let mut project = Self::empty(project_id, config.clone(), backend, clock, ids, now);
        project.commit(
            LogEvent::ProjectCreated {
                project_id: project_id.to_string(),
                config,
                ts: now,
            },
            None,
        )?;
        Ok(project)
    }

    /// Rebuild a project by replaying its log against its snapshots.
    pub fn open(backend: Box<dyn Backend>, clock: Arc<dyn Clock>, ids: Arc<IdGen>) -> Result<Self, StoreError> {
        let events = backend.events()?;
        let (project_id, config, ts) = match events.first() {
            Some(LogEvent::ProjectCreated { project_id, config, ts }) => (project_id.clone(), config.clone(), *ts),
            _ => return Err(StoreError::Corrupt("log does not start with project_created".into())),
        };
        ids.advance(events.len() as u64);
        let mut project = Self::empty(&project_id, config, backend, clock, ids, ts);
        for event in events.into_iter().skip(1) {
            let content = match &event {
                LogEvent::Create {
                    artifact_id,
                    content_sha256,
                    ..
                } => Some(project.load_snapshot(artifact_id, 1, content_sha256)?),
                _ => None,
            };
            project.last_ts = project.last_ts.max(event.timestamp());
            project.fold(&event, content)?;
        }
        Ok(project)
    }

    fn empty(
        id: &str,
        config: ProjectConfig,
        backend: Box<dyn Backend>,
        clock: Arc<dyn Clock>,
        ids: Arc<IdGen>,
        created: DateTime<Utc>,
    ) -> Self {
        Self {
            id: id.to_string(),
            config,
            artifacts: BTreeMap::new(),
            proposals: BTreeMap::new(),
            state: ProjectState {
                project_id: id.to_string(),
                current_phase: PhaseId::FIRST,
                history: Vec::new(),
            },
            idempotency: BTreeMap::new(),
            backend,
            clock,
            ids,
            last_ts: created,
        }
    }

    fn load_snapshot(&self, artifact_id: &str, version: u32, sha: &str) -> Result<String, StoreError> {
        let text = self
            .backend
            .get_snapshot(artifact_id, version)?
            .ok_or_else(|| StoreError::Corrupt(format!("missing snapshot {artifact_id} v{version}")))?;
        let snap = snapshot::parse(&text)
            .ok_or_else(|| StoreError::Corrupt(format!("unparseable snapshot {artifact_id} v{version}")))?;
        if snapshot::content_sha256(&snap.content) != sha {
            return Err(StoreError::Corrupt(format!("snapshot hash mismatch {artifact_id} v{version}")));
        }
        Ok(snap.content)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn state(&self) -> &ProjectState {
        &self.state
    }

    pub fn events(&self) -> Result<Vec<LogEvent>, StoreError> {
        self.backend.events()
    }

    /// Non-decreasing timestamp for the next event.
    pub(crate) fn tick(&mut self) -> DateTime<Utc> {
        let now = self.clock.now().max(self.last_ts);
        self.last_ts = now;
        now
    }

    fn next_id(&self, prefix: &str, at: DateTime<Utc>) -> String {
        self.ids.next(prefix, at)
    }

    /// Persist then fold. `content` is the body of a newly created version.
    pub(crate) fn commit(&mut self, event: LogEvent, content: Option<String>) -> Result<(), StoreError> {
        match (&event, &content) {
            (
                LogEvent::Create {
                    artifact_id, phase, kind, ..
                },
                Some(body),
            ) => {
                let text = snapshot::render(artifact_id, *kind, *phase, 1, body);
                self.backend.put_snapshot(artifact_id, 1, &text)?;
            }
            (
                LogEvent::Apply {
                    artifact_id,
                    new_version: Some(v),
                    ..
                },
                Some(body),
            ) => {
                let rec = self.record(artifact_id)?;
                let text = snapshot::render(artifact_id, rec.kind, rec.phase, *v, body);
                self.backend.put_snapshot(artifact_id, *v, &text)?;
            }
            _ => {}
        }
        self.backend.append(&event)?;
        self.fold(&event, content)
    }

    /// Apply an already-validated event to in-memory state.
    fn fold(&mut self, event: &LogEvent, content: Option<String>) -> Result<(), StoreError> {
        match event {
            LogEvent::ProjectCreated { .. } => {}
            LogEvent::Create {
                artifact_id,
                phase,
                kind,
                authored_by,
                ..
            } => {
                let content = content.ok_or_else(|| StoreError::Corrupt("create without content".into()))?;
                self.artifacts.insert(
                    artifact_id.clone(),
                    ArtifactRecord {
                        artifact_id: artifact_id.clone(),
                        phase: *phase,
                        kind: *kind,
                        versions: vec![VersionRecord {
                            version: 1,
                            content,
                            parent_version: None,
                            authored_by: *authored_by,
                            proposal_id: None,
                        }],
                        status: ArtifactStatus::Draft,
                        status_before_review: None,
                        round: 0,
                        approvals: Vec::new(),
                    },
                );
            }
            LogEvent::Propose {
                proposal_id,
                artifact_id,
                base_version,
                diff,
                rationale,
                proposed_by,
                ts,
            } => {
                self.proposals.insert(
                    proposal_id.clone(),
                    RevisionProposal {
                        proposal_id: proposal_id.clone(),
                        artifact_id: artifact_id.clone(),
                        base_version: *base_version,
                        diff: diff.clone(),
                        rationale: rationale.clone(),
                        proposed_by: *proposed_by,
                        state: ProposalState::Pending,
                        created_at: *ts,
                    },
                );
                let rec = self.record_mut(artifact_id)?;
                if rec.status != ArtifactStatus::UnderReview {
                    rec.status_before_review = Some(rec.status);
                    rec.status = ArtifactStatus::UnderReview;
                }
            }
            LogEvent::Apply {
                proposal_id,
                artifact_id,
                decision,
                new_version,
                content_sha256,
                ..
            } => {
                let proposal = self
                    .proposals
                    .get(proposal_id)
                    .cloned()
                    .ok_or_else(|| StoreError::UnknownProposal(proposal_id.clone()))?;
                match decision {
                    Decision::Accept => {
                        let rec = self.record(artifact_id)?;
                        let head = rec.head();
                        let new_content = apply_diff(&head.content, &proposal.diff)?;
                        if let Some(expected) = content_sha256 {
                            if &snapshot::content_sha256(&new_content) != expected {
                                return Err(StoreError::Corrupt(format!(
                                    "replayed content hash mismatch for {artifact_id}"
                                )));
                            }
                        }
                        let version = new_version.unwrap_or(head.version + 1);
                        let parent = head.version;
                        let rec = self.record_mut(artifact_id)?;
                        rec.versions.push(VersionRecord {
                            version,
                            content: new_content,
                            parent_version: Some(parent),
                            authored_by: proposal.proposed_by,
                            proposal_id: Some(proposal_id.clone()),
                        });
                        rec.status = ArtifactStatus::Draft;
                        rec.status_before_review = None;
                        self.proposals.get_mut(proposal_id).expect("checked").state = ProposalState::Accepted;
                    }
                    Decision::Reject => {
                        self.proposals.get_mut(proposal_id).expect("checked").state = ProposalState::Rejected;
                        let head = self.record(artifact_id)?.head_version();
                        let pending_on_head = self.proposals.values().any(|p| {
                            p.artifact_id == *artifact_id && p.state == ProposalState::Pending && p.base_version == head
                        });
                        let rec = self.record_mut(artifact_id)?;
                        if rec.status == ArtifactStatus::UnderReview && !pending_on_head {
                            rec.status = rec.status_before_review.take().unwrap_or(ArtifactStatus::Draft);
                        }
                    }
                }
            }
            LogEvent::Approve {
                artifact_id,
                version,
                role,
                actor,
                verdict,
                note,
                ts,
            } => {
                let policy = self.config.gate;
                let rec = self.record_mut(artifact_id)?;
                rec.approvals.push(ApprovalRecord {
                    artifact_id: artifact_id.clone(),
                    version: *version,
                    role: *role,
                    actor: actor.clone(),
                    verdict: *verdict,
                    note: note.clone(),
                    timestamp: *ts,
                    round: rec.round,
                });
                let new_status = match verdict {
                    Verdict::Reject => Some(ArtifactStatus::Rejected),
                    Verdict::Approve if policy.quorum_met(rec.current_approvals()) => Some(ArtifactStatus::Approved),
                    Verdict::Approve => None,
                };
                if let Some(s) = new_status {
                    if rec.status == ArtifactStatus::UnderReview {
                        rec.status_before_review = Some(s);
                    } else {
                        rec.status = s;
                    }
                }
            }
            LogEvent::Advance {
                from,
                to,
                idempotency_key,
                ts,
            } => {
                self.state.current_phase = *to;
                self.state.history.push(Transition {
                    from_phase: *from,
                    to_phase: *to,
                    cause: TransitionCause::Advance,
                    timestamp: *ts,
                });
                if let Some(key) = idempotency_key {
                    self.idempotency.insert(key.clone(), self.state.clone());
                }
            }
            LogEvent::Revisit {
                from,
                to,
                stale: _,
                idempotency_key,
                ts,
            } => {
                let (lo, hi) = (*to, *from);
                for rec in self.artifacts.values_mut() {
                    if rec.phase > lo && rec.phase <= hi {
                        rec.round += 1;
                        match rec.status {
                            ArtifactStatus::Approved => rec.status = ArtifactStatus::Stale,
                            ArtifactStatus::UnderReview
                                if rec.status_before_review == Some(ArtifactStatus::Approved) =>
                            {
                                rec.status_before_review = Some(ArtifactStatus::Stale)
                            }
                            _ => {}
                        }
                    }
                }
                self.state.current_phase = *to;
                self.state.history.push(Transition {
                    from_phase: *from,
                    to_phase: *to,
                    cause: TransitionCause::Revisit,
                    timestamp: *ts,
                });
                if let Some(key) = idempotency_key {
                    self.idempotency.insert(key.clone(), self.state.clone());
                }
            }
        }
        Ok(())
    }

    pub(crate) fn record(&self, artifact_id: &str) -> Result<&ArtifactRecord, StoreError> {
        self.artifacts
            .get(artifact_id)
            .ok_or_else(|| StoreError::UnknownArtifact(artifact_id.to_string()))
    }

    fn record_mut(&mut self, artifact_id: &str) -> Result<&mut ArtifactRecord, StoreError> {
        self.artifacts
            .get_mut(artifact_id)
            .ok_or_else(|| StoreError::UnknownArtifact(artifact_id.to_string()))
    }

    fn view(&self, rec: &ArtifactRecord) -> Artifact {
        let head = rec.head();
        Artifact {
            artifact_id: rec.artifact_id.clone(),
            project_id: self.id.clone(),
            phase: rec.phase,
            kind: rec.kind,
            version: head.version,
            content: head.content.clone(),
            status: rec.status,
            authored_by: head.authored_by,
            parent_version: head.parent_version,
        }
    }

    pub fn create_artifact(
        &mut self,
        phase: PhaseId,
        kind: ArtifactKind,
        content: &str,
        authored_by: Role,
    ) -> Result<Artifact, StoreError> {
        if !kind.is_legal_for(phase) {
            return Err(StoreError::IllegalKindForPhase { kind, phase });
        }
        if content.trim().is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let ts = self.tick();
        let artifact_id = self.next_id("art", ts);
        self.commit(
            LogEvent::Create {
                artifact_id: artifact_id.clone(),
                phase,
                kind,
                authored_by,
                content_sha256: snapshot::content_sha256(content),
                ts,
            },
            Some(content.to_string()),
        )?;
        self.artifact(&artifact_id)
    }

    pub fn propose_revision(
        &mut self,
        artifact_id: &str,
        base_version: u32,
        diff: &str,
        rationale: &str,
        proposed_by: Role,
    ) -> Result<RevisionProposal, StoreError> {
        let rec = self.record(artifact_id)?;
        let head = rec.head();
        if base_version != head.version {
            return Err(StoreError::StaleBase {
                base: base_version,
                head: head.version,
            });
        }
        let revised = apply_diff(&head.content, diff)?;
        if revised.trim().is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let ts = self.tick();
        let proposal_id = self.next_id("rev", ts);
        self.commit(
            LogEvent::Propose {
                proposal_id: proposal_id.clone(),
                artifact_id: artifact_id.to_string(),
                base_version,
                diff: diff.to_string(),
                rationale: rationale.to_string(),
                proposed_by,
                ts,
            },
            None,
        )?;
        Ok(self.proposals[&proposal_id].clone())
    }

    pub fn apply_revision(&mut self, proposal_id: &str, decision: Decision) -> Result<Artifact, StoreError> {
        let proposal = self
            .proposals
            .get(proposal_id)
            .ok_or_else(|| StoreError::UnknownProposal(proposal_id.to_string()))?
            .clone();
        if proposal.state != ProposalState::Pending {
            return Err(StoreError::ProposalNotPending(proposal_id.to_string()));
        }
        let head = self.record(&proposal.artifact_id)?.head();
        if decision == Decision::Accept && proposal.base_version != head.version {
            return Err(StoreError::StaleBase {
                base: proposal.base_version,
                head: head.version,
            });
        }
        let (new_version, new_content) = match decision {
            Decision::Accept => (Some(head.version + 1), Some(apply_diff(&head.content, &proposal.diff)?)),
            Decision::Reject => (None, None),
        };
        let ts = self.tick();
        self.commit(
            LogEvent::Apply {
                proposal_id: proposal_id.to_string(),
                artifact_id: proposal.artifact_id.clone(),
                decision,
                new_version,
                content_sha256: new_content.as_deref().map(snapshot::content_sha256),
                ts,
            },
            new_content,
        )?;
        self.artifact(&proposal.artifact_id)
    }

    pub fn record_approval(
        &mut self,
        artifact_id: &str,
        version: u32,
        role: Role,
        actor: &str,
        verdict: Verdict,
        note: &str,
    ) -> Result<ApprovalRecord, StoreError> {
        if !role.is_human() {
            return Err(StoreError::HelperAgentCannotApprove);
        }
        let rec = self.record(artifact_id)?;
        let head = rec.head_version();
        if version != head {
            return Err(StoreError::VersionNotHead { version, head });
        }
        if rec.effective_status() == ArtifactStatus::Rejected {
            return Err(StoreError::VersionRejected(version));
        }
        let ts = self.tick();
        self.commit(
            LogEvent::Approve {
                artifact_id: artifact_id.to_string(),
                version,
                role,
                actor: actor.to_string(),
                verdict,
                note: note.to_string(),
                ts,
            },
            None,
        )?;
        Ok(self.record(artifact_id)?.approvals.last().cloned().expect("just appended"))
    }

    pub fn artifact(&self, artifact_id: &str) -> Result<Artifact, StoreError> {
        Ok(self.view(self.record(artifact_id)?))
    }

    /// All artifact heads, ordered by phase then artifact id.
    pub fn artifacts(&self) -> Vec<Artifact> {
        let mut out: Vec<_> = self.artifacts.values().map(|r| self.view(r)).collect();
        out.sort_by(|a, b| (a.phase, &a.artifact_id).cmp(&(b.phase, &b.artifact_id)));
        out
    }

    pub fn proposal(&self, proposal_id: &str) -> Result<&RevisionProposal, StoreError> {
        self.proposals
            .get(proposal_id)
            .ok_or_else(|| StoreError::UnknownProposal(proposal_id.to_string()))
    }

    pub fn proposals_for(&self, artifact_id: &str) -> Vec<RevisionProposal> {
        self.proposals
            .values()
            .filter(|p| p.artifact_id == artifact_id)
            .cloned()
            .collect()
    }

    pub fn approvals(&self, artifact_id: &str) -> Result<Vec<ApprovalRecord>, StoreError> {
        Ok(self.record(artifact_id)?.approvals.clone())
    }

    /// Every version of an artifact, rebuilt from v1 by replaying accepted diffs
    /// and checked byte-for-byte against the stored versions and snapshots.
    pub fn artifact_lineage(&self, artifact_id: &str) -> Result<Vec<LineageEntry>, StoreError> {
        let rec = self.record(artifact_id)?;
        let mut out = Vec::with_capacity(rec.versions.len());
        let mut content = rec.versions[0].content.clone();
        for (i, v) in rec.versions.iter().enumerate() {
            if let Some(pid) = &v.proposal_id {
                let proposal = self.proposal(pid)?;
                content = apply_diff(&content, &proposal.diff)?;
            }
            if content != v.content {
                return Err(StoreError::Corrupt(format!("{artifact_id} v{} does not replay", v.version)));
            }
            if let Some(text) = self.backend.get_snapshot(artifact_id, v.version)? {
                let snap = snapshot::parse(&text)
                    .ok_or_else(|| StoreError::Corrupt(format!("unparseable snapshot {artifact_id} v{}", v.version)))?;
                if snap.content != content {
                    return Err(StoreError::Corrupt(format!("snapshot {artifact_id} v{} differs", v.version)));
                }
            }
            let status = if i + 1 == rec.versions.len() {
                rec.status
            } else {
                ArtifactStatus::Superseded
            };
            out.push(LineageEntry {
                version: v.version,
                content: content.clone(),
                status,
                approvals: rec.approvals.iter().filter(|a| a.version == v.version).cloned().collect(),
            });
        }
        Ok(out)
    }

    /// Approved heads of every artifact in phases up to and including `up_to_phase`.
    pub fn approved_context(&self, up_to_phase: PhaseId) -> Vec<Artifact> {
        self.artifacts()
            .into_iter()
            .filter(|a| a.phase <= up_to_phase && a.status == ArtifactStatus::Approved)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SteppingClock;
    use std::collections::HashSet;

    fn project() -> Project {
        Project::create(
            "demo",
            ProjectConfig::default(),
            Box::new(MemoryBackend::new()),
            Arc::new(SteppingClock::epoch()),
            Arc::new(IdGen::seeded(1)),
        )
        .unwrap()
    }

    fn scope(p: &mut Project) -> Artifact {
        p.create_artifact(PhaseId::P1Scope, ArtifactKind::ScopeSpec, "# Scope\n- one\n", Role::HelperAgent)
            .unwrap()
    }

    #[test]
    fn create_starts_at_v1_draft() {
        let mut p = project();
        let a = scope(&mut p);
        assert_eq!((a.version, a.status, a.parent_version), (1, ArtifactStatus::Draft, None));
        assert_eq!(a.authored_by, Role::HelperAgent);
    }

    #[test]
    fn create_rejects_illegal_kind_and_empty_content() {
        let mut p = project();
        let err = p
            .create_artifact(PhaseId::P1Scope, ArtifactKind::PromptArchitecture, "x", Role::Developer)
            .unwrap_err();
        assert_eq!(err.code(), "illegal_kind_for_phase");
        let err = p
            .create_artifact(PhaseId::P1Scope, ArtifactKind::ScopeSpec, "  \n", Role::Developer)
            .unwrap_err();
        assert_eq!(err.code(), "empty_content");
    }

    #[test]
    fn creating_same_kind_twice_yields_distinct_ids() {
        let mut p = project();
        let ids: HashSet<_> = (0..5).map(|_| scope(&mut p).artifact_id).collect();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn accept_supersedes_and_reject_keeps_head() {
        let mut p = project();
        let a = scope(&mut p);
        let d = unified_diff(&a.content, "# Scope\n- one\n- two\n");
        let prop = p.propose_revision(&a.artifact_id, 1, &d, "add two", Role::HelperAgent).unwrap();
        assert_eq!(p.artifact(&a.artifact_id).unwrap().status, ArtifactStatus::UnderReview);
        let v2 = p.apply_revision(&prop.proposal_id, Decision::Accept).unwrap();
        assert_eq!(v2.version, 2);
        let lineage = p.artifact_lineage(&a.artifact_id).unwrap();
        assert_eq!(lineage[0].status, ArtifactStatus::Superseded);
        assert_eq!(lineage[1].content, "# Scope\n- one\n- two\n");

        let d = unified_diff(&v2.content, "# Scope\n");
        let prop = p.propose_revision(&a.artifact_id, 2, &d, "trim", Role::Sme).unwrap();
        let after = p.apply_revision(&prop.proposal_id, Decision::Reject).unwrap();
        assert_eq!((after.version, after.status), (2, ArtifactStatus::Draft));
        assert_eq!(
            p.apply_revision(&prop.proposal_id, Decision::Accept).unwrap_err().code(),
            "proposal_not_pending"
        );
    }

    #[test]
    fn second_proposal_on_same_base_goes_stale() {
        let mut p = project();
        let a = scope(&mut p);
        let first = p
            .propose_revision(&a.artifact_id, 1, &unified_diff(&a.content, "# Scope\n- A\n"), "a", Role::Sme)
            .unwrap();
        let second = p
            .propose_revision(&a.artifact_id, 1, &unified_diff(&a.content, "# Scope\n- B\n"), "b", Role::Developer)
            .unwrap();
        p.apply_revision(&first.proposal_id, Decision::Accept).unwrap();
        let err = p.apply_revision(&second.proposal_id, Decision::Accept).unwrap_err();
        assert_eq!(err.code(), "stale_base");
        let err = p
            .propose_revision(&a.artifact_id, 1, &unified_diff(&a.content, "# Scope\n- C\n"), "c", Role::Sme)
            .unwrap_err();
        assert_eq!(err.code(), "stale_base");
    }

    #[test]
    fn malformed_diff_is_refused() {
        let mut p = project();
        let a = scope(&mut p);
        let err = p
            .propose_revision(&a.artifact_id, 1, "this is not a diff", "?", Role::Sme)
            .unwrap_err();
        assert_eq!(err.code(), "malformed_diff");
    }

    #[test]
    fn dual_role_approval_required() {
        let mut p = project();
        let a = scope(&mut p);
        p.record_approval(&a.artifact_id, 1, Role::Sme, "ana", Verdict::Approve, "")
            .unwrap();
        p.record_approval(&a.artifact_id, 1, Role::Sme, "bo", Verdict::Approve, "")
            .unwrap();
        assert_eq!(p.artifact(&a.artifact_id).unwrap().status, ArtifactStatus::Draft);
        p.record_approval(&a.artifact_id, 1, Role::Developer, "dev", Verdict::Approve, "")
            .unwrap();
        assert_eq!(p.artifact(&a.artifact_id).unwrap().status, ArtifactStatus::Approved);
    }

    #[test]
    fn helper_agent_can_never_approve() {
        let mut p = project();
        let a = scope(&mut p);
        for verdict in [Verdict::Approve, Verdict::Reject] {
            let err = p
                .record_approval(&a.artifact_id, 1, Role::HelperAgent, "bot", verdict, "")
                .unwrap_err();
            assert_eq!(err.code(), "helper_agent_cannot_approve");
        }
        assert!(p.approvals(&a.artifact_id).unwrap().is_empty());
    }

    #[test]
    fn approval_must_target_head() {
        let mut p = project();
        let a = scope(&mut p);
        let prop = p
            .propose_revision(&a.artifact_id, 1, &unified_diff(&a.content, "x\n"), "", Role::Sme)
            .unwrap();
        p.apply_revision(&prop.proposal_id, Decision::Accept).unwrap();
        let err = p
            .record_approval(&a.artifact_id, 1, Role::Sme, "ana", Verdict::Approve, "")
            .unwrap_err();
        assert_eq!(err.code(), "version_not_head");
    }

    #[test]
    fn rejection_requires_a_new_revision() {
        let mut p = project();
        let a = scope(&mut p);
        p.record_approval(&a.artifact_id, 1, Role::Developer, "dev", Verdict::Reject, "no")
            .unwrap();
        assert_eq!(p.artifact(&a.artifact_id).unwrap().status, ArtifactStatus::Rejected);
        let err = p
            .record_approval(&a.artifact_id, 1, Role::Sme, "ana", Verdict::Approve, "")
            .unwrap_err();
        assert_eq!(err.code(), "version_rejected");
        let prop = p
            .propose_revision(&a.artifact_id, 1, &unified_diff(&a.content, "# Better\n"), "fix", Role::HelperAgent)
            .unwrap();
        let v2 = p.apply_revision(&prop.proposal_id, Decision::Accept).unwrap();
        assert_eq!(v2.status, ArtifactStatus::Draft);
    }

    #[test]
    fn rejected_proposal_restores_approved_status() {
        let mut p = project();
        let a = scope(&mut p);
        p.record_approval(&a.artifact_id, 1, Role::Sme, "s", Verdict::Approve, "").unwrap();
        p.record_approval(&a.artifact_id, 1, Role::Developer, "d", Verdict::Approve, "").unwrap();
        let prop = p
            .propose_revision(&a.artifact_id, 1, &unified_diff(&a.content, "y\n"), "", Role::HelperAgent)
            .unwrap();
        assert_eq!(p.artifact(&a.artifact_id).unwrap().status, ArtifactStatus::UnderReview);
        let back = p.apply_revision(&prop.proposal_id, Decision::Reject).unwrap();
        assert_eq!(back.status, ArtifactStatus::Approved);
    }

    #[test]
    fn approved_context_orders_by_phase() {
        let mut p = project();
        let tools = p
            .create_artifact(PhaseId::P2_1Tools, ArtifactKind::ToolsSpec, "tools", Role::Developer)
            .unwrap();
        let sc = scope(&mut p);
        let _draft = p
            .create_artifact(PhaseId::P2_2Context, ArtifactKind::ContextSpec, "ctx", Role::Developer)
            .unwrap();
        for id in [&tools.artifact_id, &sc.artifact_id] {
            p.record_approval(id, 1, Role::Sme, "s", Verdict::Approve, "").unwrap();
            p.record_approval(id, 1, Role::Developer, "d", Verdict::Approve, "").unwrap();
        }
        let ctx: Vec<_> = p.approved_context(PhaseId::P3_2Reasoning).into_iter().map(|a| a.kind).collect();
        assert_eq!(ctx, vec![ArtifactKind::ScopeSpec, ArtifactKind::ToolsSpec]);
        assert_eq!(p.approved_context(PhaseId::P1Scope).len(), 1);
    }

    #[test]
    fn filesystem_project_reopens_identically() {
        let dir = tempfile::tempdir().unwrap();
        let clock: Arc<dyn Clock> = Arc::new(SteppingClock::epoch());
        let ids = Arc::new(IdGen::seeded(3));
        let backend = FsBackend::open(dir.path(), "demo").unwrap();
        let mut p = Project::create("demo", ProjectConfig::default(), Box::new(backend), clock.clone(), ids.clone())
            .unwrap();
        let a = scope(&mut p);
        let prop = p
            .propose_revision(&a.artifact_id, 1, &unified_diff(&a.content, "# Scope\n- two\n"), "r", Role::Sme)
            .unwrap();
        p.apply_revision(&prop.proposal_id, Decision::Accept).unwrap();
        p.record_approval(&a.artifact_id, 2, Role::Sme, "s", Verdict::Approve, "ok").unwrap();
        let before = p.artifact_lineage(&a.artifact_id).unwrap();

        assert!(dir.path().join("demo/log.jsonl").is_file());
        let v2 = dir.path().join("demo/artifacts").join(&a.artifact_id).join("v2.md");
        let snap = snapshot::parse(&std::fs::read_to_string(v2).unwrap()).unwrap();
        assert_eq!(snap.content, "# Scope\n- two\n");
        assert_eq!(snap.field("version"), Some("2"));

        drop(p);
        let backend = FsBackend::open(dir.path(), "demo").unwrap();
        let reopened = Project::open(Box::new(backend), clock, ids).unwrap();
        assert_eq!(reopened.artifact_lineage(&a.artifact_id).unwrap(), before);
    }

    #[test]
    fn tampered_snapshot_is_detected_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let clock: Arc<dyn Clock> = Arc::new(SteppingClock::epoch());
        let ids = Arc::new(IdGen::seeded(3));
        let mut p = Project::create(
            "demo",
            ProjectConfig::default(),
            Box::new(FsBackend::open(dir.path(), "demo").unwrap()),
            clock.clone(),
            ids.clone(),
        )
        .unwrap();
        let a = scope(&mut p);
        drop(p);
        let path = dir.path().join("demo/artifacts").join(&a.artifact_id).join("v1.md");
        let text = std::fs::read_to_string(&path).unwrap().replace("- one", "- forged");
        std::fs::write(&path, text).unwrap();
        let err = Project::open(Box::new(FsBackend::open(dir.path(), "demo").unwrap()), clock, ids).unwrap_err();
        assert_eq!(err.code(), "corrupt_store");
    }
}
