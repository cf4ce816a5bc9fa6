//! A rule-based stand-in for a model. It reads the prompt-module header or the
//! agent tool protocol from the system text and answers deterministically, so
//! the whole workflow can be exercised offline.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::{json, Value};

use super::{CompletionRequest, MessageRole, ModelTransport, TransportError};
use crate::agent_runtime::{SEARCH_TOOL, TOOL_CALL_CLOSE, TOOL_CALL_OPEN, TOOL_PROTOCOL_HEADING};
use crate::cmr::STOPWORDS;
use crate::helper_agent::prompts::{self, parse_blocks};

pub const SIMULATED_IDENTITY: &str = "simulated:v1";

/// Words per drafted benchmark query.
const QUERY_WORDS: usize = 6;

/// Narrative words a query writer would leave out, on top of the catalog stopwords.
const NARRATIVE: &[&str] = &["we", "our", "used", "using", "use", "was", "were", "this", "these", "study", "paper"];

#[derive(Debug, Default, Clone, Copy)]
pub struct SimulatedModel;

impl SimulatedModel {
    pub fn new() -> Self {
        Self
    }
}

struct Answer<'a> {
    entry_id: &'a str,
    dimension: &'a str,
    text: &'a str,
}

fn transcript_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\[(E[0-9]+)\] (answer to E[0-9]+|answer|question|summary) \(([^)]*)\) by [a-z_]+: (.*)$")
            .expect("static regex")
    })
}

fn answers(transcript: &str) -> Vec<Answer<'_>> {
    transcript
        .lines()
        .filter_map(|l| transcript_re().captures(l))
        .filter(|c| c[2].starts_with("answer"))
        .map(|c| Answer {
            entry_id: c.get(1).expect("group").as_str(),
            dimension: c.get(3).expect("group").as_str(),
            text: c.get(4).expect("group").as_str(),
        })
        .collect()
}

/// `- id | section | description` lines.
fn dimensions(block: &str) -> Vec<(&str, &str, &str)> {
    block
        .lines()
        .filter_map(|l| l.strip_prefix("- "))
        .filter_map(|l| {
            let mut parts = l.splitn(3, " | ");
            Some((parts.next()?, parts.next()?, parts.next()?))
        })
        .collect()
}

/// Lower-cased content words in order of first appearance.
fn content_words(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for w in text.split(|c: char| !c.is_ascii_alphanumeric()) {
        let w = w.to_ascii_lowercase();
        if w.len() < 2 || STOPWORDS.contains(&w.as_str()) || NARRATIVE.contains(&w.as_str()) || w.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        if !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

fn query_window(document: &str, attempt: usize) -> String {
    let words = content_words(document);
    if words.is_empty() {
        return "earth science data".into();
    }
    let windows = words.len().div_ceil(QUERY_WORDS);
    let start = attempt.min(windows - 1) * QUERY_WORDS;
    words[start..(start + QUERY_WORDS).min(words.len())].join(" ")
}

fn elicit(blocks: &BTreeMap<String, String>) -> String {
    let dims = dimensions(blocks.get("DIMENSIONS").map(String::as_str).unwrap_or(""));
    dims.iter()
        .map(|(id, section, desc)| format!("[{id}] For {section}: please describe {desc}.\n"))
        .collect()
}

fn summarize(blocks: &BTreeMap<String, String>) -> String {
    answers(blocks.get("TRANSCRIPT").map(String::as_str).unwrap_or(""))
        .iter()
        .map(|a| format!("- {} [{}]\n", a.text, a.entry_id))
        .collect()
}

fn draft(blocks: &BTreeMap<String, String>) -> String {
    let template = blocks.get("TEMPLATE").map(String::as_str).unwrap_or("");
    let dims = dimensions(blocks.get("DIMENSIONS").map(String::as_str).unwrap_or(""));
    let answers = answers(blocks.get("TRANSCRIPT").map(String::as_str).unwrap_or(""));
    let mut out = String::new();
    for line in template.lines() {
        let Some(section) = line.strip_prefix("## ") else {
            if out.is_empty() || !line.trim().is_empty() {
                out.push_str(line);
                out.push('\n');
            }
            continue;
        };
        if !out.ends_with("\n\n") {
            out.push('\n');
        }
        out.push_str(line);
        out.push('\n');
        let mut wrote = false;
        for a in &answers {
            if dims.iter().any(|(id, s, _)| *id == a.dimension && *s == section.trim()) {
                out.push_str(&format!("- {} [{}]\n", a.text, a.entry_id));
                wrote = true;
            }
        }
        if !wrote {
            out.push_str("_No input yet._\n");
        }
    }
    out
}

fn revise(blocks: &BTreeMap<String, String>) -> String {
    let current = blocks.get("CURRENT").map(String::as_str).unwrap_or("");
    let feedback = blocks.get("FEEDBACK").map(String::as_str).unwrap_or("").replace('\n', " ");
    format!("{}\n- {}\n", current.trim_end(), feedback.trim())
}

fn draft_query(blocks: &BTreeMap<String, String>) -> String {
    format!("{} datasets", query_window(blocks.get("DOCUMENT").map(String::as_str).unwrap_or(""), 0))
}

fn reformulate(blocks: &BTreeMap<String, String>) -> String {
    let attempt = blocks
        .get("ATTEMPT")
        .and_then(|a| a.trim().parse::<usize>().ok())
        .unwrap_or(1);
    format!(
        "{} datasets",
        query_window(blocks.get("DOCUMENT").map(String::as_str).unwrap_or(""), attempt)
    )
}

fn search_call(keyword: &str) -> String {
    let call = json!({"name": SEARCH_TOOL, "arguments": {"keyword": keyword}});
    format!("{TOOL_CALL_OPEN}{call}{TOOL_CALL_CLOSE}")
}

fn result_ids(tool_text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in tool_text.lines() {
        let Ok(v) = serde_json::from_str::<Value>(line) else { continue };
        for r in v.get("results").and_then(Value::as_array).into_iter().flatten() {
            if let Some(id) = r.get("concept_id").and_then(Value::as_str) {
                if !out.iter().any(|x: &String| x == id) {
                    out.push(id.to_string());
                }
            }
        }
    }
    out
}

/// Agent behavior: search with the request, answer with what came back. A
/// prompt that asks for verification triggers a second, narrower search whose
/// hits are ranked first.
fn agent_turn(request: &CompletionRequest) -> String {
    let query = request
        .messages
        .iter()
        .find(|m| m.role == MessageRole::User)
        .map(|m| m.text.as_str())
        .unwrap_or("");
    let verifies = request.system_text.contains("## Critique and Verification");
    let tools: Vec<&str> = request
        .messages
        .iter()
        .filter(|m| m.role == MessageRole::Tool)
        .map(|m| m.text.as_str())
        .collect();
    match (tools.len(), verifies) {
        (0, _) => search_call(query),
        (1, true) => {
            let narrow: Vec<String> = content_words(query).into_iter().take(3).collect();
            search_call(&narrow.join(" "))
        }
        _ => {
            let mut ids: Vec<String> = Vec::new();
            for t in tools.iter().rev() {
                for id in result_ids(t) {
                    if !ids.contains(&id) {
                        ids.push(id);
                    }
                }
            }
            let list: String = ids.iter().enumerate().map(|(i, id)| format!("{}. {id}\n", i + 1)).collect();
            format!("Ranked concept IDs:\n{list}")
        }
    }
}

impl ModelTransport for SimulatedModel {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        request.validate()?;
        if request.system_text.contains(TOOL_PROTOCOL_HEADING) {
            return Ok(agent_turn(request));
        }
        let user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.text.as_str())
            .unwrap_or("");
        let blocks = parse_blocks(user);
        let text = match prompts::module_of(&request.system_text) {
            Some(prompts::ELICIT_QUESTIONS) => elicit(&blocks),
            Some(prompts::SUMMARIZE_INTENT) => summarize(&blocks),
            Some(prompts::DRAFT_ARTIFACT) => draft(&blocks),
            Some(prompts::PROPOSE_DIFF) => revise(&blocks),
            Some(prompts::DRAFT_QUERY) => draft_query(&blocks),
            Some(prompts::REFORMULATE_QUERY) => reformulate(&blocks),
            _ => return Err(TransportError::InvalidRequest("simulated model does not know this prompt".into())),
        };
        Ok(text)
    }

    fn identity(&self) -> String {
        SIMULATED_IDENTITY.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_windows_advance_and_stop() {
        let doc = "We used the MODIS Aqua sea surface temperature product for 2015 over the Pacific basin near Hawaii islands";
        assert_eq!(query_window(doc, 0), "modis aqua sea surface temperature product");
        assert_eq!(query_window(doc, 1), "pacific basin near hawaii islands");
        assert_eq!(query_window(doc, 7), query_window(doc, 1));
    }

    #[test]
    fn unknown_prompt_is_rejected() {
        let req = CompletionRequest::new("hello", vec![super::super::Message::user("x")]);
        assert!(SimulatedModel.complete(&req).is_err());
    }
}
