//! Stage-gate state machine: phase ordering, gate policy, advancement and revisits.

use serde::{Deserialize, Serialize};

use chrono::{DateTime, Utc};

use crate::artifact_store::{ApprovalRecord, ArtifactStatus, LogEvent, Project, StoreError, Verdict};
use crate::domain::{ArtifactKind, PhaseId, Role};
use crate::ErrorCode;

/// How many approvals of each human role a gate needs, and whether the
/// Phase 2 and Phase 3 sub-phases are reviewed as two composite gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatePolicy {
    pub sme_quorum: u32,
    pub developer_quorum: u32,
    #[serde(default)]
    pub merge_subphases: bool,
}

impl Default for GatePolicy {
    fn default() -> Self {
        Self {
            sme_quorum: 1,
            developer_quorum: 1,
            merge_subphases: false,
        }
    }
}

impl GatePolicy {
    /// Quorums below one are raised to one; dual-role approval is not optional.
    pub fn normalized(self) -> Self {
        Self {
            sme_quorum: self.sme_quorum.max(1),
            developer_quorum: self.developer_quorum.max(1),
            ..self
        }
    }

    /// True when distinct actors of each human role have approved.
    pub fn quorum_met<'a>(&self, approvals: impl IntoIterator<Item = &'a ApprovalRecord>) -> bool {
        let mut sme = Vec::new();
        let mut dev = Vec::new();
        for a in approvals {
            if a.verdict != Verdict::Approve {
                continue;
            }
            let bucket = match a.role {
                Role::Sme => &mut sme,
                Role::Developer => &mut dev,
                Role::HelperAgent => continue,
            };
            if !bucket.contains(&a.actor.as_str()) {
                bucket.push(a.actor.as_str());
            }
        }
        let p = self.normalized();
        sme.len() as u32 >= p.sme_quorum && dev.len() as u32 >= p.developer_quorum
    }

    /// Phases that carry a gate, in order.
    pub fn gate_phases(&self) -> Vec<PhaseId> {
        if self.merge_subphases {
            vec![
                PhaseId::P1Scope,
                PhaseId::P2_1Tools,
                PhaseId::P3_1Guardrails,
                PhaseId::P4Prompt,
                PhaseId::P5Benchmark,
            ]
        } else {
            PhaseId::ALL.to_vec()
        }
    }

    /// Kinds that must pass for the gate at `phase`.
    pub fn gate_kinds(&self, phase: PhaseId) -> Vec<ArtifactKind> {
        if self.merge_subphases {
            match phase {
                PhaseId::P2_1Tools => {
                    return vec![ArtifactKind::ToolsSpec, ArtifactKind::ContextSpec, ArtifactKind::OutputFormatSpec]
                }
                PhaseId::P3_1Guardrails => return vec![ArtifactKind::GuardrailsSpec, ArtifactKind::ReasoningPolicy],
                _ => {}
            }
        }
        required_artifacts(phase)
    }

    fn next_gate_phase(&self, phase: PhaseId) -> Option<PhaseId> {
        self.gate_phases().into_iter().find(|p| *p > phase)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectConfig {
    #[serde(default)]
    pub gate: GatePolicy,
}

/// Fixed phase-to-artifact map: one kind per phase.
pub fn required_artifacts(phase: PhaseId) -> Vec<ArtifactKind> {
    vec![phase.artifact_kind()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingReason {
    NoArtifact,
    NotApproved,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingArtifact {
    pub kind: ArtifactKind,
    pub reason: MissingReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateStatus {
    pub phase: PhaseId,
    pub required: Vec<ArtifactKind>,
    pub satisfied: bool,
    pub missing: Vec<MissingArtifact>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionCause {
    Advance,
    Revisit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from_phase: PhaseId,
    pub to_phase: PhaseId,
    pub cause: TransitionCause,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectState {
    pub project_id: String,
    pub current_phase: PhaseId,
    pub history: Vec<Transition>,
}

#[derive(Debug, thiserror::Error)]
pub enum PhaseError {
    #[error("gate for {} is not satisfied", .0.phase)]
    GateNotSatisfied(GateStatus),
    #[error("already at the final phase")]
    AlreadyAtFinalPhase,
    #[error("{target} is not earlier than the current phase {current}")]
    NotAnEarlierPhase { target: PhaseId, current: PhaseId },
    #[error("{0} has no gate of its own under this project's gate policy")]
    NotAGatePhase(PhaseId),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ErrorCode for PhaseError {
    fn code(&self) -> &'static str {
        match self {
            PhaseError::GateNotSatisfied(_) => "gate_not_satisfied",
            PhaseError::AlreadyAtFinalPhase => "already_at_final_phase",
            PhaseError::NotAnEarlierPhase { .. } => "not_an_earlier_phase",
            PhaseError::NotAGatePhase(_) => "not_a_gate_phase",
            PhaseError::Store(e) => e.code(),
        }
    }
}

impl Project {
    /// Gate evaluation for `phase`. Pure function of the store contents.
    pub fn gate_status(&self, phase: PhaseId) -> GateStatus {
        let policy = self.config.gate;
        let required = policy.gate_kinds(phase);
        let mut missing = Vec::new();
        for &kind in &required {
            let candidates: Vec<_> = self.artifacts.values().filter(|r| r.kind == kind).collect();
            if candidates.is_empty() {
                missing.push(MissingArtifact {
                    kind,
                    reason: MissingReason::NoArtifact,
                });
                continue;
            }
            let passes = candidates
                .iter()
                .any(|r| r.status == ArtifactStatus::Approved && policy.quorum_met(r.current_approvals()));
            if passes {
                continue;
            }
            let reason = if candidates.iter().any(|r| r.effective_status() == ArtifactStatus::Stale) {
                MissingReason::Stale
            } else {
                MissingReason::NotApproved
            };
            missing.push(MissingArtifact { kind, reason });
        }
        GateStatus {
            phase,
            required,
            satisfied: missing.is_empty(),
            missing,
        }
    }

    /// Move to the next gated phase once the current gate passes.
    pub fn advance(&mut self, idempotency_key: Option<&str>) -> Result<ProjectState, PhaseError> {
        if let Some(state) = idempotency_key.and_then(|k| self.idempotency.get(k)) {
            return Ok(state.clone());
        }
        let current = self.state.current_phase;
        let next = self
            .config
            .gate
            .next_gate_phase(current)
            .ok_or(PhaseError::AlreadyAtFinalPhase)?;
        let gate = self.gate_status(current);
        if !gate.satisfied {
            return Err(PhaseError::GateNotSatisfied(gate));
        }
        let ts = self.tick();
        self.commit(
            LogEvent::Advance {
                from: current,
                to: next,
                idempotency_key: idempotency_key.map(str::to_string),
                ts,
            },
            None,
        )?;
        Ok(self.state.clone())
    }

    /// Return to an earlier phase. Approved heads of the phases being left
    /// become stale; their content and lineage are untouched.
    pub fn revisit(&mut self, target: PhaseId, idempotency_key: Option<&str>) -> Result<ProjectState, PhaseError> {
        if let Some(state) = idempotency_key.and_then(|k| self.idempotency.get(k)) {
            return Ok(state.clone());
        }
        let current = self.state.current_phase;
        if target >= current {
            return Err(PhaseError::NotAnEarlierPhase { target, current });
        }
        if !self.config.gate.gate_phases().contains(&target) {
            return Err(PhaseError::NotAGatePhase(target));
        }
        let stale = self
            .artifacts
            .values()
            .filter(|r| r.phase > target && r.phase <= current && r.effective_status() == ArtifactStatus::Approved)
            .map(|r| (r.artifact_id.clone(), r.head_version()))
            .collect();
        let ts = self.tick();
        self.commit(
            LogEvent::Revisit {
                from: current,
                to: target,
                stale,
                idempotency_key: idempotency_key.map(str::to_string),
                ts,
            },
            None,
        )?;
        Ok(self.state.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact_store::MemoryBackend;
    use crate::clock::{IdGen, SteppingClock};
    use std::sync::Arc;

    fn project(config: ProjectConfig) -> Project {
        Project::create(
            "p",
            config,
            Box::new(MemoryBackend::new()),
            Arc::new(SteppingClock::epoch()),
            Arc::new(IdGen::seeded(2)),
        )
        .unwrap()
    }

    fn approve_all(p: &mut Project, artifact_id: &str) {
        let v = p.artifact(artifact_id).unwrap().version;
        p.record_approval(artifact_id, v, Role::Sme, "sme", Verdict::Approve, "").unwrap();
        p.record_approval(artifact_id, v, Role::Developer, "dev", Verdict::Approve, "").unwrap();
    }

    fn pass_phase(p: &mut Project, phase: PhaseId) -> String {
        let a = p
            .create_artifact(phase, phase.artifact_kind(), &format!("# {phase}\n"), Role::HelperAgent)
            .unwrap();
        approve_all(p, &a.artifact_id);
        a.artifact_id
    }

    #[test]
    fn fresh_project_gate_reports_missing_scope() {
        let p = project(ProjectConfig::default());
        let g = p.gate_status(PhaseId::P1Scope);
        assert!(!g.satisfied);
        assert_eq!(
            g.missing,
            vec![MissingArtifact {
                kind: ArtifactKind::ScopeSpec,
                reason: MissingReason::NoArtifact
            }]
        );
    }

    #[test]
    fn sme_only_is_not_enough() {
        let mut p = project(ProjectConfig::default());
        let a = p
            .create_artifact(PhaseId::P1Scope, ArtifactKind::ScopeSpec, "s", Role::HelperAgent)
            .unwrap();
        p.record_approval(&a.artifact_id, 1, Role::Sme, "s", Verdict::Approve, "").unwrap();
        let g = p.gate_status(PhaseId::P1Scope);
        assert!(!g.satisfied);
        assert_eq!(g.missing[0].reason, MissingReason::NotApproved);
        p.record_approval(&a.artifact_id, 1, Role::Developer, "d", Verdict::Approve, "")
            .unwrap();
        assert!(p.gate_status(PhaseId::P1Scope).satisfied);
    }

    #[test]
    fn advance_requires_gate_and_stops_at_last_phase() {
        let mut p = project(ProjectConfig::default());
        let err = p.advance(None).unwrap_err();
        assert_eq!(err.code(), "gate_not_satisfied");
        for phase in PhaseId::ALL {
            pass_phase(&mut p, phase);
            if phase != PhaseId::LAST {
                let s = p.advance(None).unwrap();
                assert_eq!(Some(s.current_phase), phase.next());
            }
        }
        assert_eq!(p.advance(None).unwrap_err().code(), "already_at_final_phase");
    }

    #[test]
    fn revisit_to_current_or_later_is_refused() {
        let mut p = project(ProjectConfig::default());
        pass_phase(&mut p, PhaseId::P1Scope);
        p.advance(None).unwrap();
        let err = p.revisit(PhaseId::P2_1Tools, None).unwrap_err();
        assert_eq!(err.code(), "not_an_earlier_phase");
        let err = p.revisit(PhaseId::P4Prompt, None).unwrap_err();
        assert_eq!(err.code(), "not_an_earlier_phase");
    }

    #[test]
    fn idempotent_advance_does_not_double_step() {
        let mut p = project(ProjectConfig::default());
        pass_phase(&mut p, PhaseId::P1Scope);
        pass_phase(&mut p, PhaseId::P2_1Tools);
        let a = p.advance(Some("k1")).unwrap();
        let b = p.advance(Some("k1")).unwrap();
        assert_eq!(a, b);
        assert_eq!(p.state().current_phase, PhaseId::P2_1Tools);
        assert_eq!(p.state().history.len(), 1);
    }

    #[test]
    fn quorum_counts_distinct_actors() {
        let mut p = project(ProjectConfig {
            gate: GatePolicy {
                sme_quorum: 2,
                developer_quorum: 1,
                merge_subphases: false,
            },
        });
        let a = p
            .create_artifact(PhaseId::P1Scope, ArtifactKind::ScopeSpec, "s", Role::HelperAgent)
            .unwrap();
        p.record_approval(&a.artifact_id, 1, Role::Sme, "ana", Verdict::Approve, "").unwrap();
        p.record_approval(&a.artifact_id, 1, Role::Sme, "ana", Verdict::Approve, "").unwrap();
        p.record_approval(&a.artifact_id, 1, Role::Developer, "dev", Verdict::Approve, "")
            .unwrap();
        assert!(!p.gate_status(PhaseId::P1Scope).satisfied);
        p.record_approval(&a.artifact_id, 1, Role::Sme, "bo", Verdict::Approve, "").unwrap();
        assert!(p.gate_status(PhaseId::P1Scope).satisfied);
    }

    #[test]
    fn merged_subphases_form_composite_gates() {
        let mut p = project(ProjectConfig {
            gate: GatePolicy {
                merge_subphases: true,
                ..GatePolicy::default()
            },
        });
        pass_phase(&mut p, PhaseId::P1Scope);
        assert_eq!(p.advance(None).unwrap().current_phase, PhaseId::P2_1Tools);
        pass_phase(&mut p, PhaseId::P2_1Tools);
        let g = p.gate_status(PhaseId::P2_1Tools);
        assert_eq!(g.required.len(), 3);
        assert_eq!(g.missing.len(), 2);
        pass_phase(&mut p, PhaseId::P2_2Context);
        pass_phase(&mut p, PhaseId::P2_3Output);
        assert_eq!(p.advance(None).unwrap().current_phase, PhaseId::P3_1Guardrails);
        assert_eq!(
            p.revisit(PhaseId::P2_2Context, None).unwrap_err().code(),
            "not_a_gate_phase"
        );
    }
}
