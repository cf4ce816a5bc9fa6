//! Shared vocabulary: phases, artifact kinds and collaboration roles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A gated step of the engineering process, in process order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseId {
    #[serde(rename = "P1_scope")]
    P1Scope,
    #[serde(rename = "P2_1_tools")]
    P2_1Tools,
    #[serde(rename = "P2_2_context")]
    P2_2Context,
    #[serde(rename = "P2_3_output")]
    P2_3Output,
    #[serde(rename = "P3_1_guardrails")]
    P3_1Guardrails,
    #[serde(rename = "P3_2_reasoning")]
    P3_2Reasoning,
    #[serde(rename = "P4_prompt")]
    P4Prompt,
    #[serde(rename = "P5_benchmark")]
    P5Benchmark,
}

impl PhaseId {
    pub const ALL: [PhaseId; 8] = [
        PhaseId::P1Scope,
        PhaseId::P2_1Tools,
        PhaseId::P2_2Context,
        PhaseId::P2_3Output,
        PhaseId::P3_1Guardrails,
        PhaseId::P3_2Reasoning,
        PhaseId::P4Prompt,
        PhaseId::P5Benchmark,
    ];

    pub const FIRST: PhaseId = PhaseId::P1Scope;
    pub const LAST: PhaseId = PhaseId::P5Benchmark;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<PhaseId> {
        Self::ALL.get(self.index() + 1).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseId::P1Scope => "P1_scope",
            PhaseId::P2_1Tools => "P2_1_tools",
            PhaseId::P2_2Context => "P2_2_context",
            PhaseId::P2_3Output => "P2_3_output",
            PhaseId::P3_1Guardrails => "P3_1_guardrails",
            PhaseId::P3_2Reasoning => "P3_2_reasoning",
            PhaseId::P4Prompt => "P4_prompt",
            PhaseId::P5Benchmark => "P5_benchmark",
        }
    }

    /// The single artifact kind a phase produces.
    pub fn artifact_kind(self) -> ArtifactKind {
        match self {
            PhaseId::P1Scope => ArtifactKind::ScopeSpec,
            PhaseId::P2_1Tools => ArtifactKind::ToolsSpec,
            PhaseId::P2_2Context => ArtifactKind::ContextSpec,
            PhaseId::P2_3Output => ArtifactKind::OutputFormatSpec,
            PhaseId::P3_1Guardrails => ArtifactKind::GuardrailsSpec,
            PhaseId::P3_2Reasoning => ArtifactKind::ReasoningPolicy,
            PhaseId::P4Prompt => ArtifactKind::PromptArchitecture,
            PhaseId::P5Benchmark => ArtifactKind::BenchmarkRequirements,
        }
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseId {
    type Err = ParseNameError;

    /// Accepts the canonical name (`P2_2_context`) or the short form (`P2_2`, `P1`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        PhaseId::ALL
            .into_iter()
            .find(|p| {
                let name = p.as_str();
                name.eq_ignore_ascii_case(s)
                    || name
                        .rsplit_once('_')
                        .map(|(short, _)| short.eq_ignore_ascii_case(s))
                        .unwrap_or(false)
            })
            .ok_or_else(|| ParseNameError::new("phase", s))
    }
}

/// The kind of specification an artifact carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    ScopeSpec,
    ToolsSpec,
    ContextSpec,
    OutputFormatSpec,
    GuardrailsSpec,
    ReasoningPolicy,
    PromptArchitecture,
    BenchmarkRequirements,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 8] = [
        ArtifactKind::ScopeSpec,
        ArtifactKind::ToolsSpec,
        ArtifactKind::ContextSpec,
        ArtifactKind::OutputFormatSpec,
        ArtifactKind::GuardrailsSpec,
        ArtifactKind::ReasoningPolicy,
        ArtifactKind::PromptArchitecture,
        ArtifactKind::BenchmarkRequirements,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::ScopeSpec => "scope_spec",
            ArtifactKind::ToolsSpec => "tools_spec",
            ArtifactKind::ContextSpec => "context_spec",
            ArtifactKind::OutputFormatSpec => "output_format_spec",
            ArtifactKind::GuardrailsSpec => "guardrails_spec",
            ArtifactKind::ReasoningPolicy => "reasoning_policy",
            ArtifactKind::PromptArchitecture => "prompt_architecture",
            ArtifactKind::BenchmarkRequirements => "benchmark_requirements",
        }
    }

    /// The phase that owns this kind.
    pub fn phase(self) -> PhaseId {
        PhaseId::ALL
            .into_iter()
            .find(|p| p.artifact_kind() == self)
            .expect("every kind belongs to exactly one phase")
    }

    pub fn is_legal_for(self, phase: PhaseId) -> bool {
        self.phase() == phase
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ParseNameError::new("artifact kind", s))
    }
}

/// Who is acting. Only the two human roles can accept work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sme,
    Developer,
    HelperAgent,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Sme => "sme",
            Role::Developer => "developer",
            Role::HelperAgent => "helper_agent",
        }
    }

    pub fn is_human(self) -> bool {
        !matches!(self, Role::HelperAgent)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "sme" => Ok(Role::Sme),
            "developer" | "dev" => Ok(Role::Developer),
            "helper_agent" | "helper" => Ok(Role::HelperAgent),
            _ => Err(ParseNameError::new("role", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {what}: {value:?}")]
pub struct ParseNameError {
    pub what: &'static str,
    pub value: String,
}

impl ParseNameError {
    fn new(what: &'static str, value: &str) -> Self {
        Self {
            what,
            value: value.to_string(),
        }
    }
}
