//! Model transport: the single seam between this crate and any LLM.
//!
//! Everything that talks to a model goes through [`ModelTransport::complete`].
//! Mocks are pure functions of the request bytes; live transports can be wrapped
//! in a [`RecordingTransport`] and later replayed with a [`ReplayTransport`].

mod cassette;
mod http;
mod scripted;
mod simulated;

use std::fmt;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use self::cassette::{CassetteEntry, RecordingTransport, ReplayTransport};
pub use self::http::{ChatCompletionsTransport, ChatConfig};
pub use self::scripted::{Script, ScriptRule, ScriptedTransport};
pub use self::simulated::{SimulatedModel, SIMULATED_IDENTITY};
use crate::ErrorCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub text: String,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            text: text.into(),
        }
    }

    pub fn tool(text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Tool,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_text: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Seed used by every helper-agent and agent-runtime call unless overridden.
pub const DEFAULT_SEED: u64 = 7;

impl CompletionRequest {
    /// Temperature 0 with the default seed.
    pub fn new(system_text: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            system_text: system_text.into(),
            messages,
            temperature: 0.0,
            seed: Some(DEFAULT_SEED),
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }

    /// SHA-256 over the canonical JSON encoding; the cassette replay key.
    pub fn request_hash(&self) -> String {
        crate::sha256_hex(&self.canonical_bytes())
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(TransportError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("model unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded response for request {0}")]
    CassetteMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette i/o: {0}")]
    Cassette(String),
    #[error("transport failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<TransportError> },
}

impl TransportError {
    /// Whether trying again could help.
    pub fn is_transient(&self) -> bool {
        matches!(self, TransportError::Unavailable(_))
    }
}

impl ErrorCode for TransportError {
    fn code(&self) -> &'static str {
        "transport_failure"
    }
}

pub trait ModelTransport: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError>;

    /// Stable description of the model behind this transport. Two runs are only
    /// comparable when their transports report the same identity.
    fn identity(&self) -> String;
}

impl<T: ModelTransport + ?Sized> ModelTransport for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<T: ModelTransport + ?Sized> ModelTransport for &T {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

/// A transport backed by a closure. The closure must be deterministic for the
/// purity guarantees of mock runs to hold.
pub struct FnTransport<F> {
    identity: String,
    f: F,
}

impl<F> FnTransport<F>
where
    F: Fn(&CompletionRequest) -> Result<String, TransportError> + Send + Sync,
{
    pub fn new(identity: impl Into<String>, f: F) -> Self {
        Self {
            identity: identity.into(),
            f,
        }
    }
}

impl<F> fmt::Debug for FnTransport<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnTransport").field("identity", &self.identity).finish()
    }
}

impl<F> ModelTransport for FnTransport<F>
where
    F: Fn(&CompletionRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        request.validate()?;
        (self.f)(request)
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }
}

/// Two retries after the first attempt, exponential backoff capped at `max_backoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            initial_backoff_ms: 250,
            max_backoff_ms: 2_000,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(retries: u32) -> Self {
        Self {
            retries,
            initial_backoff_ms: 0,
            max_backoff_ms: 0,
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

/// Call the transport, retrying transient failures per `policy`.
pub fn complete_with_retry(
    transport: &dyn ModelTransport,
    request: &CompletionRequest,
    policy: &RetryPolicy,
) -> Result<String, TransportError> {
    request.validate()?;
    let mut attempt = 0;
    loop {
        match transport.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_transient() && attempt < policy.retries => {
                tracing::debug!(attempt, error = %e, "retrying model call");
                thread::sleep(policy.backoff(attempt));
                attempt += 1;
            }
            Err(e) if e.is_transient() => {
                return Err(TransportError::Exhausted {
                    attempts: attempt + 1,
                    last: Box::new(e),
                })
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = CompletionRequest::new("sys", vec![Message::user("hi")]);
        let b = CompletionRequest::new("sys", vec![Message::user("hi")]);
        assert_eq!(a.request_hash(), b.request_hash());
        let c = CompletionRequest::new("sys", vec![Message::user("hi!")]);
        assert_ne!(a.request_hash(), c.request_hash());
        assert_eq!(a.request_hash().len(), 64);
    }

    #[test]
    fn temperature_out_of_range_is_rejected() {
        let mut r = CompletionRequest::new("s", vec![]);
        r.temperature = 1.5;
        assert!(matches!(r.validate(), Err(TransportError::InvalidRequest(_))));
    }

    #[test]
    fn retries_twice_then_gives_up() {
        let calls = AtomicU32::new(0);
        let t = FnTransport::new("flaky", |_: &CompletionRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(TransportError::Unavailable("503".into()))
        });
        let err = complete_with_retry(&t, &CompletionRequest::new("s", vec![]), &RetryPolicy::immediate(2)).unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert!(matches!(err, TransportError::Exhausted { attempts: 3, .. }));
        assert_eq!(err.code(), "transport_failure");
    }

    #[test]
    fn recovers_after_transient_failure() {
        let calls = AtomicU32::new(0);
        let t = FnTransport::new("flaky", |_: &CompletionRequest| {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(TransportError::Unavailable("blip".into()))
            } else {
                Ok("ok".into())
            }
        });
        let out = complete_with_retry(&t, &CompletionRequest::new("s", vec![]), &RetryPolicy::immediate(2)).unwrap();
        assert_eq!(out, "ok");
    }

    #[test]
    fn backoff_is_capped() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(0), Duration::from_millis(250));
        assert_eq!(p.backoff(10), Duration::from_millis(2_000));
    }
}
