//! Live transport for any OpenAI-compatible `/chat/completions` endpoint.

use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, MessageRole, ModelTransport, TransportError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl ChatConfig {
    /// Reads `CARE_LLM_URL`, `CARE_LLM_MODEL` and `CARE_LLM_API_KEY`.
    pub fn from_env() -> Option<Self> {
        Some(Self {
            base_url: std::env::var("CARE_LLM_URL").ok()?,
            model: std::env::var("CARE_LLM_MODEL").ok()?,
            api_key: std::env::var("CARE_LLM_API_KEY").ok(),
            timeout_secs: 120,
        })
    }
}

pub struct ChatCompletionsTransport {
    config: ChatConfig,
    agent: ureq::Agent,
}

impl ChatCompletionsTransport {
    pub fn new(config: ChatConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_text})];
        for m in &request.messages {
            let (role, content) = match m.role {
                MessageRole::User => ("user", m.text.clone()),
                MessageRole::Assistant => ("assistant", m.text.clone()),
                // tool results travel as plain user turns; the agent protocol is textual
                MessageRole::Tool => ("user", format!("TOOL RESULT:\n{}", m.text)),
            };
            messages.push(json!({"role": role, "content": content}));
        }
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl ModelTransport for ChatCompletionsTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        request.validate()?;
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url).header("content-type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(self.body(request).to_string())
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(TransportError::Unavailable(format!("HTTP {status}: {text}"))),
            _ => return Err(TransportError::InvalidRequest(format!("HTTP {status}: {text}"))),
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Unavailable(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::Unavailable("response has no message content".into()))
    }

    fn identity(&self) -> String {
        format!("chat:{}@{}", self.config.model, self.config.base_url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Message;

    #[test]
    fn request_body_maps_roles_and_seed() {
        let t = ChatCompletionsTransport::new(ChatConfig {
            base_url: "http://localhost:1/v1".into(),
            model: "m".into(),
            api_key: None,
            timeout_secs: 1,
        });
        let req = CompletionRequest::new("sys", vec![Message::user("q"), Message::assistant("a"), Message::tool("r")]);
        let body = t.body(&req);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][3]["role"], "user");
        assert!(body["messages"][3]["content"].as_str().unwrap().starts_with("TOOL RESULT:"));
        assert_eq!(body["seed"], 7);
        assert_eq!(t.identity(), "chat:m@http://localhost:1/v1");
    }
}
