//! System prompts: the fixed baseline, the CARE prompt assembled from approved
//! artifacts, and the tool protocol appended to both.

use super::{AgentError, ToolSchema};
use crate::artifact_store::{Artifact, ArtifactStatus, Project};
use crate::domain::{ArtifactKind, PhaseId};
use crate::helper_agent::templates::{missing_sections, split_annotation, split_sections, template};
use crate::phase_engine::{GateStatus, MissingArtifact, MissingReason};

/// Marker that opens every tool call.
pub const TOOL_CALL_OPEN: &str = "<tool_call>";
pub const TOOL_CALL_CLOSE: &str = "</tool_call>";
/// Heading of the protocol section appended to every agent system prompt.
pub const TOOL_PROTOCOL_HEADING: &str = "## Tool Protocol";

pub const CONTEXT_SLOT: &str = "{{context_spec}}";
pub const GUARDRAILS_SLOT: &str = "{{guardrails_spec}}";

const BASELINE: &str = "You are an assistant that finds NASA Earth science datasets. \
Use the cmr_collection_search tool to search the NASA Common Metadata Repository (CMR) \
for collections that match the user's request. When you are done, answer with a ranked \
list of CMR collection concept IDs, most relevant first.\n";

/// The minimal "LLM + tool" prompt. No project artifacts are injected.
pub fn baseline_prompt() -> String {
    BASELINE.to_string()
}

/// Protocol text shared by every agent. Depends only on the tool schemas.
pub fn tool_protocol(schemas: &[ToolSchema]) -> String {
    let mut out = format!("{TOOL_PROTOCOL_HEADING}\n\n");
    out.push_str("You can call these tools:\n\n");
    for s in schemas {
        out.push_str(&format!("- `{}`: {}\n", s.tool_name, s.description));
        for p in &s.parameters {
            let req = if p.required { "required" } else { "optional" };
            out.push_str(&format!("  - `{}` ({}, {req}): {}\n", p.name, p.semantic_type, p.description));
        }
    }
    out.push_str(&format!(
        "\nTo call a tool, reply with one or more blocks of the form\n\
         {TOOL_CALL_OPEN}{{\"name\": \"<tool>\", \"arguments\": {{...}}}}{TOOL_CALL_CLOSE}\n\
         and nothing else. Tool results arrive in the next message as JSON.\n\
         When you have the answer, reply without any tool call and list the concept IDs, most relevant first.\n"
    ));
    out
}

/// Artifact body for prompt use: no comments, no provenance annotations, no
/// placeholder lines, surrounding blank lines trimmed.
fn clean_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in lines {
        let t = line.trim();
        if (t.starts_with("<!--") && t.ends_with("-->")) || t == "_No input yet._" {
            continue;
        }
        let (text, sources) = split_annotation(line);
        out.push(if sources.is_empty() { line.trim_end().to_string() } else { text });
    }
    while out.first().is_some_and(|l| l.trim().is_empty()) {
        out.remove(0);
    }
    while out.last().is_some_and(|l| l.trim().is_empty()) {
        out.pop();
    }
    out
}

/// A grounding artifact rendered for injection: title dropped, `##` demoted to `###`.
fn grounding_block(artifact: &Artifact) -> String {
    let lines = clean_lines(artifact.content.lines().filter(|l| !l.starts_with("# ")));
    lines
        .into_iter()
        .map(|l| match l.strip_prefix("## ") {
            Some(h) => format!("### {h}"),
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn approved_head(project: &Project, kind: ArtifactKind) -> Result<Artifact, AgentError> {
    let heads: Vec<Artifact> = project.artifacts().into_iter().filter(|a| a.kind == kind).collect();
    if let Some(a) = heads.iter().find(|a| a.status == ArtifactStatus::Approved) {
        return Ok(a.clone());
    }
    let reason = if heads.is_empty() {
        MissingReason::NoArtifact
    } else if heads.iter().any(|a| a.status == ArtifactStatus::Stale) {
        MissingReason::Stale
    } else {
        MissingReason::NotApproved
    };
    Err(AgentError::GateNotSatisfied(GateStatus {
        phase: kind.phase(),
        required: vec![kind],
        satisfied: false,
        missing: vec![MissingArtifact { kind, reason }],
    }))
}

/// System prompt of the CARE-designed agent: the approved prompt architecture's
/// sections in template order, with the approved context and guardrails
/// specifications injected at their slots (or appended when no slot is placed).
pub fn assemble_care_prompt(project: &Project) -> Result<String, AgentError> {
    let gate = project.gate_status(PhaseId::P4Prompt);
    if !gate.satisfied {
        return Err(AgentError::GateNotSatisfied(gate));
    }
    let arch = approved_head(project, ArtifactKind::PromptArchitecture)?;
    let missing = missing_sections(ArtifactKind::PromptArchitecture, &arch.content);
    if !missing.is_empty() {
        return Err(AgentError::TemplateViolation {
            kind: ArtifactKind::PromptArchitecture,
            missing,
        });
    }
    let context = grounding_block(&approved_head(project, ArtifactKind::ContextSpec)?);
    let guardrails = grounding_block(&approved_head(project, ArtifactKind::GuardrailsSpec)?);

    let sections = split_sections(&arch.content);
    let mut out = String::new();
    if let Some(title) = arch.content.lines().find_map(|l| l.strip_prefix("# ")) {
        out.push_str(&format!("# {}\n\n", title.trim()));
    }
    let (mut used_context, mut used_guardrails) = (false, false);
    for heading in template(ArtifactKind::PromptArchitecture).sections {
        let section = sections
            .iter()
            .find(|s| s.heading.as_deref().is_some_and(|h| h.eq_ignore_ascii_case(&heading)))
            .expect("checked by missing_sections");
        out.push_str(&format!("## {heading}\n\n"));
        let mut body = Vec::new();
        for line in clean_lines(section.body.iter().map(|(_, l)| l.as_str())) {
            match line.trim() {
                CONTEXT_SLOT => {
                    used_context = true;
                    body.push(context.clone());
                }
                GUARDRAILS_SLOT => {
                    used_guardrails = true;
                    body.push(guardrails.clone());
                }
                _ => body.push(line),
            }
        }
        if !body.is_empty() {
            out.push_str(&body.join("\n"));
            out.push_str("\n\n");
        }
    }
    if !used_context {
        out.push_str(&format!("## Domain Context\n\n{context}\n\n"));
    }
    if !used_guardrails {
        out.push_str(&format!("## Guardrails\n\n{guardrails}\n\n"));
    }
    Ok(format!("{}\n", out.trim_end()))
}
