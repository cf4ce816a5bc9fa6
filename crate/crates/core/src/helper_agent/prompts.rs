//! Versioned prompt modules (`templates/prompts/*.md`) and the labelled block
//! layout of helper-agent user messages.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const ELICIT_QUESTIONS: &str = "elicit_questions";
pub const SUMMARIZE_INTENT: &str = "summarize_intent";
pub const DRAFT_ARTIFACT: &str = "draft_artifact";
pub const PROPOSE_DIFF: &str = "propose_diff";
pub const DRAFT_QUERY: &str = "draft_query";
pub const REFORMULATE_QUERY: &str = "reformulate_query";

const SOURCES: [(&str, &str); 6] = [
    (ELICIT_QUESTIONS, include_str!("../../../../templates/prompts/elicit_questions.md")),
    (SUMMARIZE_INTENT, include_str!("../../../../templates/prompts/summarize_intent.md")),
    (DRAFT_ARTIFACT, include_str!("../../../../templates/prompts/draft_artifact.md")),
    (PROPOSE_DIFF, include_str!("../../../../templates/prompts/propose_diff.md")),
    (DRAFT_QUERY, include_str!("../../../../templates/prompts/draft_query.md")),
    (REFORMULATE_QUERY, include_str!("../../../../templates/prompts/reformulate_query.md")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptModule {
    pub name: &'static str,
    pub version: u32,
    pub text: &'static str,
}

/// What a session records about each module it used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleRef {
    pub version: u32,
    pub sha256: String,
}

impl PromptModule {
    pub fn reference(&self) -> ModuleRef {
        ModuleRef {
            version: self.version,
            sha256: crate::sha256_hex(self.text.as_bytes()),
        }
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<!-- prompt-module: ([a-z_]+) v([0-9]+) -->").expect("static regex"))
}

/// Name of the module a system prompt was built from, if any.
pub fn module_of(system_text: &str) -> Option<&str> {
    header_re().captures(system_text).map(|c| c.get(1).expect("group").as_str())
}

pub fn modules() -> &'static [PromptModule] {
    static MODULES: OnceLock<Vec<PromptModule>> = OnceLock::new();
    MODULES.get_or_init(|| {
        SOURCES
            .iter()
            .map(|(name, text)| {
                let caps = header_re().captures(text).expect("prompt module header");
                assert_eq!(&caps[1], *name, "prompt module header names another module");
                PromptModule {
                    name,
                    version: caps[2].parse().expect("numeric version"),
                    text,
                }
            })
            .collect()
    })
}

pub fn module(name: &str) -> &'static PromptModule {
    modules()
        .iter()
        .find(|m| m.name == name)
        .unwrap_or_else(|| panic!("unknown prompt module {name}"))
}

/// A user message made of `LABEL:` lines each followed by a body.
#[derive(Debug, Default, Clone)]
pub struct Blocks {
    parts: Vec<(String, String)>,
}

impl Blocks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(mut self, label: &str, body: impl Into<String>) -> Self {
        self.parts.push((label.to_string(), body.into()));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (label, body) in &self.parts {
            out.push_str(label);
            out.push_str(":\n");
            out.push_str(body.trim_end_matches('\n'));
            out.push_str("\n\n");
        }
        out
    }
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Z][A-Z ]*[A-Z]):$").expect("static regex"))
}

/// Inverse of [`Blocks::render`]. A line counts as a label only when it is a
/// bare upper-case word sequence followed by a colon.
pub fn parse_blocks(text: &str) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        if let Some(c) = label_re().captures(line) {
            if let Some((label, body)) = current.take() {
                out.insert(label, body.join("\n").trim_end().to_string());
            }
            current = Some((c[1].to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((label, body)) = current {
        out.insert(label, body.join("\n").trim_end().to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_module_is_versioned() {
        assert_eq!(modules().len(), SOURCES.len());
        for m in modules() {
            assert_eq!(m.version, 1);
            assert_eq!(module_of(m.text), Some(m.name));
            assert_eq!(m.reference().sha256.len(), 64);
        }
    }

    #[test]
    fn blocks_round_trip() {
        let text = Blocks::new()
            .add("PHASE", "P2_1_tools")
            .add("TRANSCRIPT", "[E1] question (io_schemas) by helper_agent: Which schema?\n")
            .add("CONTEXT", "")
            .render();
        let parsed = parse_blocks(&text);
        assert_eq!(parsed["PHASE"], "P2_1_tools");
        assert_eq!(parsed["TRANSCRIPT"], "[E1] question (io_schemas) by helper_agent: Which schema?");
        assert_eq!(parsed["CONTEXT"], "");
    }
}
