//! Built-in elicitation checklist: the dimensions a helper agent must cover per phase.

use serde::Serialize;

use crate::domain::PhaseId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ElicitationDimension {
    pub phase: PhaseId,
    pub dimension_id: &'static str,
    pub description: &'static str,
    /// Template section that records answers for this dimension.
    pub section: &'static str,
    /// Asked verbatim when the model fails to cover the dimension.
    pub fallback_question: &'static str,
}

macro_rules! dims {
    ($phase:expr; $( $id:literal, $section:literal, $desc:literal, $q:literal; )+) => {
        &[ $( ElicitationDimension {
            phase: $phase,
            dimension_id: $id,
            description: $desc,
            section: $section,
            fallback_question: $q,
        }, )+ ]
    };
}

const P1: &[ElicitationDimension] = dims![PhaseId::P1Scope;
    "user_role_expertise", "Users and Expertise", "who the user is: role, expertise and constraints",
        "Who will use the agent, what is their role and expertise, and what constraints do they work under?";
    "tasks", "Tasks", "the tasks users are trying to accomplish",
        "What tasks are users trying to accomplish with the agent?";
    "workflow_steps", "Workflow Steps", "the workflow steps users typically follow",
        "Which workflow steps do users follow today, in order?";
    "pain_points", "Pain Points", "where the current workflow hurts",
        "What are the main pain points in the current workflow?";
    "non_delegable_decisions", "Non-Delegable Decisions", "decisions that must stay with humans",
        "Which decisions must never be delegated to the agent?";
    "outcomes_success", "Outcomes and Success Criteria", "desired outcomes and the definition of success",
        "What outcome counts as success, and how would you recognize it?";
];

const P2_1: &[ElicitationDimension] = dims![PhaseId::P2_1Tools;
    "tools_apis_datasets", "Tools, APIs and Datasets", "relevant tools, APIs, datasets and resources",
        "Which tools, APIs, datasets and resources should the agent use?";
    "io_schemas", "Input/Output Schemas", "input and output schemas of those tools",
        "What are the input and output schemas of each tool?";
    "limits_quotas_permissions", "Limits, Quotas and Permissions", "limits, quotas and permissions",
        "What limits, quotas and permissions apply to these tools?";
    "provenance_metadata", "Provenance and Metadata", "provenance and metadata requirements",
        "What provenance and metadata must be captured for every result?";
    "policy_security_governance", "Policy, Security and Governance", "constraints from policy, security and governance",
        "Which policy, security or governance constraints apply?";
];

const P2_2: &[ElicitationDimension] = dims![PhaseId::P2_2Context;
    "context_access", "Context Access", "what context the agent can access",
        "What context can the agent access, and from where?";
    "retrieval_strategy", "Retrieval Strategy", "metadata search, vector search or hybrid retrieval",
        "Should retrieval use metadata search, vector search, or a hybrid?";
    "summarization_rules", "Summarization Rules", "how retrieved material is summarized",
        "How should retrieved material be summarized before use?";
    "memory_boundaries", "Memory Boundaries", "what the agent may remember and for how long",
        "What may the agent remember across turns or sessions, and what must it forget?";
];

const P2_3: &[ElicitationDimension] = dims![PhaseId::P2_3Output;
    "output_templates", "Output Templates", "structured output templates",
        "What structured template should answers follow?";
    "citation_provenance", "Citation and Provenance", "citation and provenance expectations",
        "How should the agent cite sources and show provenance?";
    "deferral_rules", "Deferral Rules", "when to avoid a final answer and hand back to the user",
        "When should the agent avoid giving a final answer and ask the user to decide?";
    "degradation_behavior", "Degradation Behavior", "behavior when data is incomplete",
        "How should the agent behave when data is incomplete?";
    "output_styles", "Output Styles", "supported output styles such as narrative, table or JSON",
        "Which output styles (narrative, table, JSON) must be supported?";
];

const P3_1: &[ElicitationDimension] = dims![PhaseId::P3_1Guardrails;
    "forbidden_actions", "Forbidden Actions", "actions the agent must never take",
        "Which actions must the agent never take?";
    "sensitive_domains", "Sensitive Domains", "sensitive domains such as embargoed data or human subjects",
        "Which sensitive domains (embargoed data, human subjects, interpretation limits) apply?";
    "never_guess", "Never Guess", "what the agent must never guess or hallucinate",
        "What must the agent never guess or make up?";
    "review_escalation", "Review and Escalation", "review and escalation requirements",
        "Which outputs need human review, and how is escalation handled?";
    "norms", "Norms", "ethical, organizational and scientific norms",
        "Which ethical, organizational or scientific norms must the agent respect?";
];

const P3_2: &[ElicitationDimension] = dims![PhaseId::P3_2Reasoning;
    "decomposition_logic", "Decomposition Logic", "how tasks are decomposed",
        "How should the agent break a request into steps?";
    "when_to_ask", "When to Ask", "when the agent should ask clarifying questions",
        "When should the agent stop and ask the user a question?";
    "retrieve_compare_critique_synthesize", "Retrieve, Compare, Critique, Synthesize",
        "how to retrieve, compare, critique and synthesize",
        "How should the agent retrieve, compare, critique and synthesize candidates?";
    "uncertainty_handling", "Uncertainty Handling", "how uncertainty is handled",
        "How should the agent handle and communicate uncertainty?";
    "tool_selection_criteria", "Tool Selection Criteria", "criteria for choosing tools",
        "What criteria decide which tool to call and with which parameters?";
    "escalation_rules", "Escalation Rules", "when to abstain, ask the user or flag an error",
        "When should the agent abstain, ask the user, or flag an error?";
];

const P4: &[ElicitationDimension] = dims![PhaseId::P4Prompt;
    "persona", "Persona", "persona specification",
        "What persona should the agent adopt?";
    "flipped_interaction", "Flipped Interaction", "when the agent leads with questions",
        "When should the agent lead with questions before answering?";
    "planning", "Planning", "planning instructions",
        "How should the agent plan before calling tools?";
    "tool_use_scaffolding", "Tool-Use Scaffolding", "tool-use scaffolding, routing and retries",
        "How should tool calls be scaffolded, routed and retried?";
    "critique_verification", "Critique and Verification", "critique and verification steps",
        "How should the agent critique and verify candidate answers?";
    "output_patterns", "Output Patterns", "output patterns and formatting templates",
        "Which output pattern and formatting template should the prompt enforce?";
    "reflection_self_check", "Reflection and Self-Check", "reflection and self-check instructions",
        "What self-check should the agent run before answering?";
];

const P5: &[ElicitationDimension] = dims![PhaseId::P5Benchmark;
    "scenario_tasks", "Scenario Tasks", "scenario-based tasks",
        "Which realistic scenarios should the benchmark cover?";
    "test_prompts", "Test Prompts", "test prompts",
        "Which test prompts or query types should be included?";
    "expected_outputs", "Expected Outputs", "expected outputs and ground truth",
        "What are the expected outputs, and where does ground truth come from?";
    "rubrics", "Rubrics", "human-scored rubrics: correctness, clarity, safety",
        "How should answers be scored for scientific correctness, clarity and safety?";
    "failure_modes", "Failure Modes", "catalog of known failure modes",
        "Which failure modes must the benchmark catch?";
    "acceptance_criteria", "Acceptance Criteria", "pass/fail thresholds",
        "What thresholds decide pass or fail?";
];

/// The dimensions for `phase`, in checklist order.
pub fn checklist(phase: PhaseId) -> &'static [ElicitationDimension] {
    match phase {
        PhaseId::P1Scope => P1,
        PhaseId::P2_1Tools => P2_1,
        PhaseId::P2_2Context => P2_2,
        PhaseId::P2_3Output => P2_3,
        PhaseId::P3_1Guardrails => P3_1,
        PhaseId::P3_2Reasoning => P3_2,
        PhaseId::P4Prompt => P4,
        PhaseId::P5Benchmark => P5,
    }
}

pub fn dimension(phase: PhaseId, dimension_id: &str) -> Option<&'static ElicitationDimension> {
    checklist(phase).iter().find(|d| d.dimension_id == dimension_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::helper_agent::templates::template;
    use std::collections::HashSet;

    #[test]
    fn every_phase_has_unique_dimensions() {
        for phase in PhaseId::ALL {
            let dims = checklist(phase);
            assert!(!dims.is_empty());
            let ids: HashSet<_> = dims.iter().map(|d| d.dimension_id).collect();
            assert_eq!(ids.len(), dims.len());
            assert!(dims.iter().all(|d| d.phase == phase));
        }
    }

    #[test]
    fn tools_phase_covers_limits_quotas_permissions() {
        let ids: Vec<_> = checklist(PhaseId::P2_1Tools).iter().map(|d| d.dimension_id).collect();
        assert_eq!(
            ids,
            [
                "tools_apis_datasets",
                "io_schemas",
                "limits_quotas_permissions",
                "provenance_metadata",
                "policy_security_governance"
            ]
        );
    }

    #[test]
    fn each_dimension_has_a_template_section() {
        for phase in PhaseId::ALL {
            let t = template(phase.artifact_kind());
            for d in checklist(phase) {
                assert!(t.sections.contains(&d.section.to_string()), "{} missing {}", phase, d.section);
            }
        }
    }
}
