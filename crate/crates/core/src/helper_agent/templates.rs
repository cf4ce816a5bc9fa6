//! Artifact templates (`templates/<kind>.md`) and Markdown section parsing.

use std::sync::OnceLock;

use regex::Regex;

use crate::domain::ArtifactKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub kind: ArtifactKind,
    pub text: &'static str,
    /// Required `## ` headings in template order.
    pub sections: Vec<String>,
}

fn raw(kind: ArtifactKind) -> &'static str {
    match kind {
        ArtifactKind::ScopeSpec => include_str!("../../../../templates/scope_spec.md"),
        ArtifactKind::ToolsSpec => include_str!("../../../../templates/tools_spec.md"),
        ArtifactKind::ContextSpec => include_str!("../../../../templates/context_spec.md"),
        ArtifactKind::OutputFormatSpec => include_str!("../../../../templates/output_format_spec.md"),
        ArtifactKind::GuardrailsSpec => include_str!("../../../../templates/guardrails_spec.md"),
        ArtifactKind::ReasoningPolicy => include_str!("../../../../templates/reasoning_policy.md"),
        ArtifactKind::PromptArchitecture => include_str!("../../../../templates/prompt_architecture.md"),
        ArtifactKind::BenchmarkRequirements => include_str!("../../../../templates/benchmark_requirements.md"),
    }
}

pub fn template(kind: ArtifactKind) -> Template {
    let text = raw(kind);
    Template {
        kind,
        text,
        sections: split_sections(text).into_iter().filter_map(|s| s.heading).collect(),
    }
}

/// A `## ` section of a Markdown document. Text before the first `## ` heading
/// has `heading == None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub heading: Option<String>,
    /// 1-based line number of the heading (or 1 for the preamble).
    pub line: usize,
    pub body: Vec<(usize, String)>,
}

pub fn split_sections(markdown: &str) -> Vec<Section> {
    let mut out = vec![Section {
        heading: None,
        line: 1,
        body: Vec::new(),
    }];
    let mut in_fence = false;
    for (i, line) in markdown.lines().enumerate() {
        let n = i + 1;
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
        }
        if !in_fence {
            if let Some(h) = line.strip_prefix("## ") {
                out.push(Section {
                    heading: Some(h.trim().to_string()),
                    line: n,
                    body: Vec::new(),
                });
                continue;
            }
        }
        out.last_mut().expect("non-empty").body.push((n, line.to_string()));
    }
    out
}

/// Required headings of `kind` absent from `content`.
pub fn missing_sections(kind: ArtifactKind, content: &str) -> Vec<String> {
    let present: Vec<_> = split_sections(content).into_iter().filter_map(|s| s.heading).collect();
    template(kind)
        .sections
        .into_iter()
        .filter(|s| !present.iter().any(|p| p.eq_ignore_ascii_case(s)))
        .collect()
}

/// A bullet under a template section with its trailing `[id, id]` annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bullet {
    pub section: String,
    pub line: usize,
    /// Bullet text without marker and annotation.
    pub text: String,
    pub sources: Vec<String>,
}

fn bullet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*+]|\d+[.)])\s+(.*)$").expect("static regex"))
}

fn annotation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\s*\[([A-Za-z0-9_:\-]+(?:\s*,\s*[A-Za-z0-9_:\-]+)*)\]\s*$").expect("static regex")
    })
}

/// Split a trailing provenance annotation off a line of text.
pub fn split_annotation(text: &str) -> (String, Vec<String>) {
    match annotation_re().captures(text) {
        Some(c) => {
            let whole = c.get(0).expect("match");
            let ids = c[1].split(',').map(|s| s.trim().to_string()).collect();
            (text[..whole.start()].trim_end().to_string(), ids)
        }
        None => (text.trim_end().to_string(), Vec::new()),
    }
}

/// Text and sources of a single bullet line, or `None` if it is not a bullet.
pub fn bullet_line(line: &str) -> Option<(String, Vec<String>)> {
    let c = bullet_re().captures(line)?;
    Some(split_annotation(&c[1]))
}

/// Every bullet that sits under a `## ` section, outside fenced blocks.
pub fn bullets(markdown: &str) -> Vec<Bullet> {
    let mut out = Vec::new();
    for section in split_sections(markdown) {
        let Some(heading) = section.heading else { continue };
        let mut in_fence = false;
        for (n, line) in section.body {
            if line.trim_start().starts_with("```") {
                in_fence = !in_fence;
                continue;
            }
            if in_fence {
                continue;
            }
            if let Some((text, sources)) = bullet_line(&line) {
                if text.is_empty() && sources.is_empty() {
                    continue;
                }
                out.push(Bullet {
                    section: heading.clone(),
                    line: n,
                    text,
                    sources,
                });
            }
        }
    }
    out
}
