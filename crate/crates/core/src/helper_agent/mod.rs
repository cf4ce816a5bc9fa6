//! The helper agent: phase-aligned questions, intent summaries, artifact
//! drafts and revision proposals. It writes drafts and proposals; it never
//! records approvals.

pub mod checklist;
pub mod faithfulness;
pub mod prompts;
pub mod session;
pub mod templates;

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use self::checklist::{checklist, dimension, ElicitationDimension};
pub use self::faithfulness::{check_faithfulness, BulletProvenance, DraftProposal, Violation};
pub use self::prompts::{ModuleRef, PromptModule};
pub use self::session::{ElicitationQuestion, ElicitationSession, EntryKind, SessionError, TranscriptEntry};
pub use self::templates::{missing_sections, template, Template};

use crate::artifact_store::{unified_diff, Artifact, Project, RevisionProposal, StoreError};
use crate::domain::{ArtifactKind, PhaseId, Role};
use crate::transport::{complete_with_retry, CompletionRequest, Message, ModelTransport, RetryPolicy, TransportError};
use crate::ErrorCode;

#[derive(Debug, thiserror::Error)]
pub enum HelperError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{kind} draft is missing sections: {}", missing.join(", "))]
    TemplateViolation { kind: ArtifactKind, missing: Vec<String> },
    #[error("artifact kind {kind} is not legal in phase {phase}")]
    IllegalKindForPhase { kind: ArtifactKind, phase: PhaseId },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("the proposed revision is identical to the head")]
    NoChange,
    #[error("feedback text is empty")]
    EmptyFeedback,
    #[error("the model returned an empty response")]
    EmptyResponse,
}

impl ErrorCode for HelperError {
    fn code(&self) -> &'static str {
        match self {
            HelperError::Transport(e) => e.code(),
            HelperError::TemplateViolation { .. } => "template_violation",
            HelperError::IllegalKindForPhase { .. } => "illegal_kind_for_phase",
            HelperError::Session(e) => e.code(),
            HelperError::Store(e) => e.code(),
            HelperError::NoChange => "no_change",
            HelperError::EmptyFeedback => "empty_content",
            HelperError::EmptyResponse => "empty_model_output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryBullet {
    pub text: String,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSummary {
    /// Accepted bullets as Markdown, each with its entry ids.
    pub text: String,
    pub bullets: Vec<SummaryBullet>,
    /// Model bullets dropped because no source resolved to a transcript entry.
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Submission {
    Created { artifact: Artifact },
    Proposed { proposal: RevisionProposal },
    Unchanged { artifact: Artifact },
}

fn question_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s+|\d+[.)]\s+)?\[([a-z0-9_]+)\]\s*(\S.*)$").expect("static regex"))
}

/// Approved heads from phases before `phase`, ordered by phase then id.
pub fn prior_artifacts(project: &Project, phase: PhaseId) -> Vec<Artifact> {
    project
        .approved_context(phase)
        .into_iter()
        .filter(|a| a.phase < phase)
        .collect()
}

/// Artifacts wrapped in section markers, in the order given.
pub fn render_context(artifacts: &[Artifact]) -> String {
    let mut out = String::new();
    for a in artifacts {
        out.push_str(&format!(
            "=== BEGIN ARTIFACT {} | kind={} | phase={} | version={} ===\n",
            a.artifact_id, a.kind, a.phase, a.version
        ));
        out.push_str(&a.content);
        if !a.content.ends_with('\n') {
            out.push('\n');
        }
        out.push_str(&format!("=== END ARTIFACT {} ===\n", a.artifact_id));
    }
    out
}

/// Byte-stable bundle of the approved artifacts that precede `phase`.
pub fn assemble_prompt_context(project: &Project, phase: PhaseId) -> String {
    render_context(&prior_artifacts(project, phase))
}

fn dimension_lines(dims: &[&ElicitationDimension]) -> String {
    dims.iter()
        .map(|d| format!("- {} | {} | {}\n", d.dimension_id, d.section, d.description))
        .collect()
}

/// Drop a single enclosing code fence if the model wrapped its answer in one.
fn unfence(text: &str) -> String {
    let trimmed = text.trim();
    let body = match (trimmed.strip_prefix("```"), trimmed.ends_with("```")) {
        (Some(rest), true) if trimmed.len() >= 6 => {
            let rest = &rest[..rest.len() - 3];
            rest.split_once('\n').map(|(_, b)| b).unwrap_or("")
        }
        _ => trimmed,
    };
    let mut out = body.trim_matches('\n').to_string();
    out.push('\n');
    out
}

pub struct HelperAgent {
    transport: Arc<dyn ModelTransport>,
    retry: RetryPolicy,
}

impl HelperAgent {
    pub fn new(transport: Arc<dyn ModelTransport>) -> Self {
        Self {
            transport,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn transport(&self) -> &Arc<dyn ModelTransport> {
        &self.transport
    }

    fn call(&self, module: &PromptModule, user: String) -> Result<String, HelperError> {
        let request = CompletionRequest::new(module.text, vec![Message::user(user)]);
        let text = complete_with_retry(self.transport.as_ref(), &request, &self.retry)?;
        if text.trim().is_empty() {
            return Err(HelperError::EmptyResponse);
        }
        Ok(text)
    }

    /// Questions for every dimension of the session's phase that has no answer
    /// yet. Dimensions the model skips get the checklist's fallback question.
    pub fn generate_questions(
        &self,
        session: &ElicitationSession,
        prior: &[Artifact],
    ) -> Result<Vec<ElicitationQuestion>, HelperError> {
        let open: Vec<&ElicitationDimension> = session
            .unanswered_dimensions()
            .into_iter()
            .filter_map(|id| dimension(session.phase, id))
            .collect();
        if open.is_empty() {
            return Ok(Vec::new());
        }
        let user = prompts::Blocks::new()
            .add("PHASE", session.phase.as_str())
            .add("ARTIFACT", session.phase.artifact_kind().as_str())
            .add("DIMENSIONS", dimension_lines(&open))
            .add("TRANSCRIPT", session.render_transcript())
            .add("CONTEXT", render_context(prior))
            .render();
        let reply = self.call(prompts::module(prompts::ELICIT_QUESTIONS), user)?;

        let open_ids: BTreeSet<&str> = open.iter().map(|d| d.dimension_id).collect();
        let mut asked: Vec<ElicitationQuestion> = Vec::new();
        for line in reply.lines() {
            let Some(c) = question_re().captures(line) else { continue };
            let (dim, text) = (&c[1], c[2].trim());
            if !open_ids.contains(dim) || asked.iter().any(|q| q.dimension_id == dim && q.text == text) {
                continue;
            }
            asked.push(ElicitationQuestion {
                dimension_id: dim.to_string(),
                text: text.to_string(),
            });
        }
        // group by checklist order, keeping the model's order within a dimension
        let mut out = Vec::new();
        for d in &open {
            let mine: Vec<_> = asked.iter().filter(|q| q.dimension_id == d.dimension_id).cloned().collect();
            if mine.is_empty() {
                out.push(ElicitationQuestion {
                    dimension_id: d.dimension_id.to_string(),
                    text: d.fallback_question.to_string(),
                });
            } else {
                out.extend(mine);
            }
        }
        Ok(out)
    }

    /// Generate questions and append them to the session. Returns the new entry ids.
    pub fn ask(&self, session: &mut ElicitationSession, prior: &[Artifact]) -> Result<Vec<String>, HelperError> {
        let questions = self.generate_questions(session, prior)?;
        if questions.is_empty() {
            return Ok(Vec::new());
        }
        session.note_module(prompts::module(prompts::ELICIT_QUESTIONS));
        Ok(session.add_questions(&questions)?)
    }

    /// Summarize the answers so far. Bullets whose sources do not resolve to a
    /// transcript entry are rejected rather than passed on.
    pub fn summarize_intent(&self, session: &ElicitationSession) -> Result<IntentSummary, HelperError> {
        let user = prompts::Blocks::new()
            .add("PHASE", session.phase.as_str())
            .add("TRANSCRIPT", session.render_transcript())
            .render();
        let reply = self.call(prompts::module(prompts::SUMMARIZE_INTENT), user)?;
        let mut bullets = Vec::new();
        let mut rejected = Vec::new();
        for line in reply.lines() {
            let Some((text, sources)) = templates::bullet_line(line) else { continue };
            if text.is_empty() {
                continue;
            }
            let resolved: Vec<String> = sources.into_iter().filter(|s| session.entry(s).is_some()).collect();
            if resolved.is_empty() {
                rejected.push(text);
            } else {
                bullets.push(SummaryBullet { text, sources: resolved });
            }
        }
        let text = bullets
            .iter()
            .map(|b| format!("- {} [{}]\n", b.text, b.sources.join(", ")))
            .collect();
        Ok(IntentSummary { text, bullets, rejected })
    }

    /// Draft the phase artifact from the transcript and prior approved artifacts.
    pub fn draft_artifact(
        &self,
        session: &ElicitationSession,
        kind: ArtifactKind,
        prior: &[Artifact],
    ) -> Result<DraftProposal, HelperError> {
        if !kind.is_legal_for(session.phase) {
            return Err(HelperError::IllegalKindForPhase {
                kind,
                phase: session.phase,
            });
        }
        let dims: Vec<&ElicitationDimension> = checklist(session.phase).iter().collect();
        let user = prompts::Blocks::new()
            .add("PHASE", session.phase.as_str())
            .add("ARTIFACT", kind.as_str())
            .add("TEMPLATE", template(kind).text)
            .add("DIMENSIONS", dimension_lines(&dims))
            .add("TRANSCRIPT", session.render_transcript())
            .add("CONTEXT", render_context(prior))
            .render();
        let content = unfence(&self.call(prompts::module(prompts::DRAFT_ARTIFACT), user)?);
        let missing = missing_sections(kind, &content);
        if !missing.is_empty() {
            return Err(HelperError::TemplateViolation { kind, missing });
        }
        Ok(DraftProposal::new(
            kind,
            content,
            prior.iter().map(|a| a.artifact_id.clone()).collect(),
        ))
    }

    /// Store a draft: version 1 when no artifact of its kind exists yet,
    /// otherwise a revision proposal against the newest artifact of that kind.
    pub fn submit_draft(&self, project: &mut Project, draft: &DraftProposal, rationale: &str) -> Result<Submission, HelperError> {
        let existing = project.artifacts().into_iter().rev().find(|a| a.kind == draft.kind);
        let Some(head) = existing else {
            let artifact = project.create_artifact(draft.phase, draft.kind, &draft.content, Role::HelperAgent)?;
            return Ok(Submission::Created { artifact });
        };
        let diff = unified_diff(&head.content, &draft.content);
        if diff.is_empty() {
            return Ok(Submission::Unchanged { artifact: head });
        }
        let proposal = project.propose_revision(&head.artifact_id, head.version, &diff, rationale, Role::HelperAgent)?;
        Ok(Submission::Proposed { proposal })
    }

    /// Turn review feedback into a revision proposal against the artifact head.
    pub fn propose_diff(&self, project: &mut Project, artifact_id: &str, feedback: &str) -> Result<RevisionProposal, HelperError> {
        let feedback = feedback.trim();
        if feedback.is_empty() {
            return Err(HelperError::EmptyFeedback);
        }
        let head = project.artifact(artifact_id)?;
        let user = prompts::Blocks::new()
            .add("ARTIFACT", head.kind.as_str())
            .add("CURRENT", head.content.as_str())
            .add("FEEDBACK", feedback)
            .render();
        let revised = unfence(&self.call(prompts::module(prompts::PROPOSE_DIFF), user)?);
        // keep the head's trailing whitespace so it never shows up as a change
        let tail = &head.content[head.content.trim_end().len()..];
        let revised = format!("{}{tail}", revised.trim_end());
        let missing = missing_sections(head.kind, &revised);
        if !missing.is_empty() {
            return Err(HelperError::TemplateViolation { kind: head.kind, missing });
        }
        let diff = unified_diff(&head.content, &revised);
        if diff.is_empty() {
            return Err(HelperError::NoChange);
        }
        let rationale = format!("Requested in review: \"{feedback}\"");
        Ok(project.propose_revision(artifact_id, head.version, &diff, &rationale, Role::HelperAgent)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact_store::{Decision, MemoryBackend, Verdict};
    use crate::clock::{IdGen, SteppingClock};
    use crate::phase_engine::ProjectConfig;
    use crate::transport::{FnTransport, SimulatedModel};

    fn project() -> Project {
        Project::create(
            "demo",
            ProjectConfig::default(),
            Box::new(MemoryBackend::new()),
            Arc::new(SteppingClock::epoch()),
            Arc::new(IdGen::seeded(3)),
        )
        .unwrap()
    }

    fn simulated() -> HelperAgent {
        HelperAgent::new(Arc::new(SimulatedModel::new()))
    }

    fn fixed(reply: &'static str) -> HelperAgent {
        HelperAgent::new(Arc::new(FnTransport::new("fixed", move |_| Ok(reply.to_string()))))
            .with_retry(RetryPolicy::immediate(0))
    }

    fn answered(phase: PhaseId) -> ElicitationSession {
        let mut s = ElicitationSession::new("s1", "demo", phase);
        let agent = simulated();
        let ids = agent.ask(&mut s, &[]).unwrap();
        for (i, q) in ids.iter().enumerate() {
            let role = if i % 2 == 0 { Role::Sme } else { Role::Developer };
            s.answer(q, &format!("answer {i}"), role).unwrap();
        }
        s
    }

    #[test]
    fn tools_phase_asks_one_question_per_dimension() {
        let s = ElicitationSession::new("s", "p", PhaseId::P2_1Tools);
        let qs = simulated().generate_questions(&s, &[]).unwrap();
        let dims: Vec<_> = qs.iter().map(|q| q.dimension_id.as_str()).collect();
        assert!(qs.len() >= 5);
        assert!(dims.contains(&"limits_quotas_permissions"));
    }

    #[test]
    fn fully_answered_phase_yields_no_questions_and_no_call() {
        let s = answered(PhaseId::P2_1Tools);
        let agent = HelperAgent::new(Arc::new(FnTransport::new("boom", |_| {
            Err(TransportError::InvalidRequest("should not be called".into()))
        })));
        assert!(agent.generate_questions(&s, &[]).unwrap().is_empty());
    }

    #[test]
    fn skipped_dimensions_get_fallback_questions() {
        let s = ElicitationSession::new("s", "p", PhaseId::P2_2Context);
        let qs = fixed("[retrieval_strategy] Metadata or vector search?\n[not_a_dim] ignored\nchatter")
            .generate_questions(&s, &[])
            .unwrap();
        let dims: Vec<_> = qs.iter().map(|q| q.dimension_id.as_str()).collect();
        assert_eq!(
            dims,
            ["context_access", "retrieval_strategy", "summarization_rules", "memory_boundaries"]
        );
        assert_eq!(qs[1].text, "Metadata or vector search?");
        assert_eq!(qs[0].text, dimension(PhaseId::P2_2Context, "context_access").unwrap().fallback_question);
    }

    #[test]
    fn transport_failure_surfaces_after_retries() {
        let agent = HelperAgent::new(Arc::new(FnTransport::new("down", |_| {
            Err(TransportError::Unavailable("503".into()))
        })))
        .with_retry(RetryPolicy::immediate(2));
        let s = ElicitationSession::new("s", "p", PhaseId::P1Scope);
        let err = agent.generate_questions(&s, &[]).unwrap_err();
        assert_eq!(err.code(), "transport_failure");
        assert!(matches!(err, HelperError::Transport(TransportError::Exhausted { attempts: 3, .. })));
    }

    #[test]
    fn summary_rejects_unsourced_bullets() {
        let s = answered(PhaseId::P1Scope);
        let summary = fixed("- Users are ocean scientists [E7]\n- Invented requirement\n- Ghost [E99]\n")
            .summarize_intent(&s)
            .unwrap();
        assert_eq!(summary.bullets.len(), 1);
        assert_eq!(summary.rejected, vec!["Invented requirement", "Ghost"]);
        assert_eq!(summary.text, "- Users are ocean scientists [E7]\n");
    }

    #[test]
    fn simulated_draft_is_faithful_and_complete() {
        let s = answered(PhaseId::P2_3Output);
        let draft = simulated().draft_artifact(&s, ArtifactKind::OutputFormatSpec, &[]).unwrap();
        assert!(missing_sections(ArtifactKind::OutputFormatSpec, &draft.content).is_empty());
        assert!(check_faithfulness(&draft, &s).is_empty(), "{}", draft.content);
    }

    #[test]
    fn draft_missing_sections_is_a_template_violation() {
        let s = answered(PhaseId::P2_2Context);
        let err = fixed("# Context\n## Context Access\n- x [E2]\n")
            .draft_artifact(&s, ArtifactKind::ContextSpec, &[])
            .unwrap_err();
        assert_eq!(err.code(), "template_violation");
        let err = simulated().draft_artifact(&s, ArtifactKind::ScopeSpec, &[]).unwrap_err();
        assert_eq!(err.code(), "illegal_kind_for_phase");
    }

    #[test]
    fn submit_creates_then_proposes_then_reports_unchanged() {
        let mut p = project();
        let agent = simulated();
        let mut s = answered(PhaseId::P1Scope);
        let draft = agent.draft_artifact(&s, ArtifactKind::ScopeSpec, &[]).unwrap();
        let Submission::Created { artifact } = agent.submit_draft(&mut p, &draft, "r").unwrap() else {
            panic!("expected creation")
        };
        assert_eq!(artifact.version, 1);
        assert_eq!(artifact.authored_by, Role::HelperAgent);
        assert!(matches!(agent.submit_draft(&mut p, &draft, "r").unwrap(), Submission::Unchanged { .. }));

        let q = s.add_questions(&[ElicitationQuestion {
            dimension_id: "tasks".into(),
            text: "More tasks?".into(),
        }]);
        s.answer(&q.unwrap()[0], "compare sensors", Role::Sme).unwrap();
        let redraft = agent.draft_artifact(&s, ArtifactKind::ScopeSpec, &[]).unwrap();
        let Submission::Proposed { proposal } = agent.submit_draft(&mut p, &redraft, "r").unwrap() else {
            panic!("expected proposal")
        };
        let applied = p.apply_revision(&proposal.proposal_id, Decision::Accept).unwrap();
        assert_eq!(applied.content, redraft.content);
    }

    #[test]
    fn diff_proposal_quotes_feedback_and_applies() {
        let mut p = project();
        let agent = simulated();
        let s = answered(PhaseId::P1Scope);
        let draft = agent.draft_artifact(&s, ArtifactKind::ScopeSpec, &[]).unwrap();
        let Submission::Created { artifact } = agent.submit_draft(&mut p, &draft, "r").unwrap() else {
            panic!()
        };
        let proposal = agent
            .propose_diff(&mut p, &artifact.artifact_id, "Mention that results must cite concept ids")
            .unwrap();
        assert!(proposal.rationale.contains("\"Mention that results must cite concept ids\""));
        assert_eq!(proposal.proposed_by, Role::HelperAgent);
        let v2 = p.apply_revision(&proposal.proposal_id, Decision::Accept).unwrap();
        assert!(v2.content.contains("Mention that results must cite concept ids"));
        assert_eq!(agent.propose_diff(&mut p, &artifact.artifact_id, "  ").unwrap_err().code(), "empty_content");
    }

    #[test]
    fn unchanged_revision_is_rejected() {
        let mut p = project();
        let a = p
            .create_artifact(PhaseId::P1Scope, ArtifactKind::ScopeSpec, template(ArtifactKind::ScopeSpec).text, Role::Sme)
            .unwrap();
        let echo = HelperAgent::new(Arc::new(FnTransport::new("echo", |r: &CompletionRequest| {
            Ok(prompts::parse_blocks(&r.messages[0].text)["CURRENT"].clone())
        })));
        assert_eq!(echo.propose_diff(&mut p, &a.artifact_id, "nothing").unwrap_err().code(), "no_change");
    }

    #[test]
    fn helper_operations_never_write_approvals() {
        let mut p = project();
        let agent = simulated();
        let s = answered(PhaseId::P1Scope);
        let draft = agent.draft_artifact(&s, ArtifactKind::ScopeSpec, &[]).unwrap();
        agent.submit_draft(&mut p, &draft, "r").unwrap();
        let id = p.artifacts()[0].artifact_id.clone();
        agent.propose_diff(&mut p, &id, "tighten wording").unwrap();
        agent.summarize_intent(&s).unwrap();
        assert!(p.approvals(&id).unwrap().is_empty());
        assert!(p
            .record_approval(&id, 1, Role::HelperAgent, "bot", Verdict::Approve, "")
            .is_err());
    }

    #[test]
    fn context_bundle_is_ordered_and_marked() {
        let mut p = project();
        let a = p
            .create_artifact(PhaseId::P1Scope, ArtifactKind::ScopeSpec, "# Scope\n- a [E1]", Role::Sme)
            .unwrap();
        for (role, actor) in [(Role::Sme, "ana"), (Role::Developer, "dev")] {
            p.record_approval(&a.artifact_id, 1, role, actor, Verdict::Approve, "").unwrap();
        }
        assert_eq!(assemble_prompt_context(&p, PhaseId::P1Scope), "");
        let bundle = assemble_prompt_context(&p, PhaseId::P2_1Tools);
        assert_eq!(
            bundle,
            format!(
                "=== BEGIN ARTIFACT {id} | kind=scope_spec | phase=P1_scope | version=1 ===\n# Scope\n- a [E1]\n=== END ARTIFACT {id} ===\n",
                id = a.artifact_id
            )
        );
        assert_eq!(bundle, assemble_prompt_context(&p, PhaseId::P2_1Tools));
    }

    #[test]
    fn unfence_strips_one_wrapper() {
        assert_eq!(unfence("```markdown\n# T\n## A\n```"), "# T\n## A\n");
        assert_eq!(unfence("# T\n"), "# T\n");
    }
}
