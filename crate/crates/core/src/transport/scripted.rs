//! A scripted model for deterministic agent runs.
//!
//! A script is a list of rules. A rule matches a request when the system text
//! contains `system_contains` and the first user message starts with `query`.
//! The response is `turns[i]` where `i` is the number of assistant messages
//! already in the request (the last turn repeats). Inside a turn,
//! `{{results}}` expands to the concept ids of the most recent tool message in
//! order of appearance, and `{{results:N}}` to the first N of them.

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CompletionRequest, MessageRole, ModelTransport, TransportError};
use crate::cmr::CONCEPT_ID_SEARCH;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub system_contains: String,
    pub query: String,
    pub turns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub identity: String,
    pub rules: Vec<ScriptRule>,
}

#[derive(Debug, Clone)]
pub struct ScriptedTransport {
    script: Script,
    placeholder: Regex,
    concept: Regex,
}

impl ScriptedTransport {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            placeholder: Regex::new(r"\{\{results(?::(\d+))?\}\}").expect("static regex"),
            concept: Regex::new(CONCEPT_ID_SEARCH).expect("static regex"),
        }
    }

    pub fn load(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path).map_err(|e| TransportError::Cassette(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text).map_err(|e| TransportError::Cassette(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    fn last_tool_ids(&self, request: &CompletionRequest) -> Vec<String> {
        let Some(msg) = request.messages.iter().rev().find(|m| m.role == MessageRole::Tool) else {
            return Vec::new();
        };
        let mut out: Vec<String> = Vec::new();
        for m in self.concept.find_iter(&msg.text) {
            if !out.iter().any(|x| x == m.as_str()) {
                out.push(m.as_str().to_string());
            }
        }
        out
    }
}

impl ModelTransport for ScriptedTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        request.validate()?;
        let first_user = request
            .messages
            .iter()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.text.as_str())
            .unwrap_or("");
        let rule = self
            .script
            .rules
            .iter()
            .find(|r| request.system_text.contains(&r.system_contains) && first_user.starts_with(&r.query))
            .ok_or_else(|| TransportError::InvalidRequest(format!("no script rule for query {first_user:?}")))?;
        let turn = request.messages.iter().filter(|m| m.role == MessageRole::Assistant).count();
        let text = rule
            .turns
            .get(turn)
            .or_else(|| rule.turns.last())
            .ok_or_else(|| TransportError::InvalidRequest("script rule has no turns".into()))?;
        let ids = self.last_tool_ids(request);
        let out = self.placeholder.replace_all(text, |caps: &regex::Captures<'_>| {
            let n = caps.get(1).and_then(|m| m.as_str().parse().ok()).unwrap_or(usize::MAX);
            ids.iter().take(n).cloned().collect::<Vec<_>>().join(", ")
        });
        Ok(out.into_owned())
    }

    fn identity(&self) -> String {
        self.script.identity.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Message;

    fn transport() -> ScriptedTransport {
        ScriptedTransport::new(Script {
            identity: "scripted:test".into(),
            rules: vec![ScriptRule {
                system_contains: "BASE".into(),
                query: "sea ice".into(),
                turns: vec!["call".into(), "Answer: {{results:2}}".into()],
            }],
        })
    }

    #[test]
    fn turn_follows_assistant_count_and_expands_results() {
        let t = transport();
        let mut req = CompletionRequest::new("BASE prompt", vec![Message::user("sea ice extent")]);
        assert_eq!(t.complete(&req).unwrap(), "call");
        req.messages.push(Message::assistant("call"));
        req.messages.push(Message::tool(r#"[{"concept_id":"C2-X"},{"concept_id":"C1-Y"},{"concept_id":"C2-X"},{"concept_id":"C3-Z"}]"#));
        assert_eq!(t.complete(&req).unwrap(), "Answer: C2-X, C1-Y");
    }

    #[test]
    fn unmatched_request_is_an_error() {
        let t = transport();
        let req = CompletionRequest::new("OTHER", vec![Message::user("sea ice")]);
        assert!(matches!(t.complete(&req), Err(TransportError::InvalidRequest(_))));
    }
}
