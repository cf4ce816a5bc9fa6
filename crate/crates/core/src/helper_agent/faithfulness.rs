//! Structural faithfulness: every normative bullet must trace back to the
//! transcript (or to an earlier artifact), and every answered dimension must
//! surface in at least one bullet.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::checklist::checklist;
use super::session::ElicitationSession;
use super::templates::bullets;
use crate::domain::{ArtifactKind, PhaseId};

/// One bullet's resolved provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulletProvenance {
    pub section: String,
    pub line: usize,
    pub text: String,
    /// Annotated ids as written, including ones that do not resolve.
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftProposal {
    pub kind: ArtifactKind,
    pub phase: PhaseId,
    pub content: String,
    pub provenance: Vec<BulletProvenance>,
    /// Earlier-phase artifacts the draft was allowed to cite.
    pub context_artifact_ids: Vec<String>,
}

impl DraftProposal {
    pub fn new(kind: ArtifactKind, content: impl Into<String>, context_artifact_ids: Vec<String>) -> Self {
        let content = content.into();
        let provenance = bullets(&content)
            .into_iter()
            .map(|b| BulletProvenance {
                section: b.section,
                line: b.line,
                text: b.text,
                sources: b.sources,
            })
            .collect();
        Self {
            kind,
            phase: kind.phase(),
            content,
            provenance,
            context_artifact_ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    /// A bullet with no resolvable source.
    IntroducedRequirement { section: String, line: usize, text: String },
    /// An answered dimension that no bullet cites.
    OmittedConstraint { dimension_id: String },
}

/// Pure function of `(draft, session)`; never consults a model.
pub fn check_faithfulness(draft: &DraftProposal, session: &ElicitationSession) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    for b in &draft.provenance {
        let mut resolved = 0;
        for src in &b.sources {
            if let Some(entry) = session.entry(src) {
                resolved += 1;
                if let Some(d) = entry.dimension_id.as_deref() {
                    covered.insert(d);
                }
            } else if draft.context_artifact_ids.iter().any(|a| a == src) {
                resolved += 1;
            }
        }
        if resolved == 0 {
            violations.push(Violation::IntroducedRequirement {
                section: b.section.clone(),
                line: b.line,
                text: b.text.clone(),
            });
        }
    }
    // answered dimensions are reported in checklist order
    for dim in checklist(session.phase) {
        let answered = session.answered_dimensions().contains(&dim.dimension_id);
        if answered && !covered.contains(dim.dimension_id) {
            violations.push(Violation::OmittedConstraint {
                dimension_id: dim.dimension_id.to_string(),
            });
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Role;
    use crate::helper_agent::session::ElicitationQuestion;

    fn session() -> ElicitationSession {
        let mut s = ElicitationSession::new("s", "p", PhaseId::P2_2Context);
        s.add_questions(&[
            ElicitationQuestion {
                dimension_id: "context_access".into(),
                text: "access?".into(),
            },
            ElicitationQuestion {
                dimension_id: "retrieval_strategy".into(),
                text: "strategy?".into(),
            },
        ])
        .unwrap();
        s.answer("E1", "CMR metadata only", Role::Sme).unwrap();
        s.answer("E2", "metadata search", Role::Developer).unwrap();
        s
    }

    #[test]
    fn unsourced_bullet_is_introduced() {
        let d = DraftProposal::new(
            ArtifactKind::ContextSpec,
            "## Context Access\n- CMR metadata only [E3]\n## Retrieval Strategy\n- metadata search [E4]\n- also vector search\n",
            vec![],
        );
        assert_eq!(
            check_faithfulness(&d, &session()),
            vec![Violation::IntroducedRequirement {
                section: "Retrieval Strategy".into(),
                line: 5,
                text: "also vector search".into()
            }]
        );
    }

    #[test]
    fn dangling_reference_does_not_count() {
        let d = DraftProposal::new(
            ArtifactKind::ContextSpec,
            "## Context Access\n- CMR metadata only [E3]\n- ghost [E99]\n## Retrieval Strategy\n- metadata search [E4]\n",
            vec![],
        );
        let v = check_faithfulness(&d, &session());
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::IntroducedRequirement { text, .. } if text == "ghost"));
    }

    #[test]
    fn prior_artifact_ids_are_valid_sources() {
        let d = DraftProposal::new(
            ArtifactKind::ContextSpec,
            "## Context Access\n- CMR metadata only [E3, art_1]\n- scope says so [art_1]\n## Retrieval Strategy\n- metadata search [E4]\n",
            vec!["art_1".into()],
        );
        assert!(check_faithfulness(&d, &session()).is_empty());
    }

    #[test]
    fn answered_but_uncited_dimension_is_omitted() {
        let d = DraftProposal::new(ArtifactKind::ContextSpec, "## Context Access\n- CMR metadata only [E3]\n", vec![]);
        assert_eq!(
            check_faithfulness(&d, &session()),
            vec![Violation::OmittedConstraint {
                dimension_id: "retrieval_strategy".into()
            }]
        );
    }
}
