use std::fmt;

use care_core::agent_runtime::AgentError;
use care_core::artifact_store::StoreError;
use care_core::benchmark::BenchError;
use care_core::cmr::CmrError;
use care_core::helper_agent::{HelperError, SessionError};
use care_core::phase_engine::PhaseError;
use care_core::transport::TransportError;
use care_core::ErrorCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Error body shared by the HTTP API and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: impl Serialize) -> Self {
        self.details = serde_json::to_value(details).unwrap_or(Value::Null);
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(&format!("unknown_{what}"), format!("no {what} {id:?}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("invalid_request", message)
    }

    pub fn storage(e: impl fmt::Display) -> Self {
        Self::new("storage_error", e.to_string())
    }

    /// HTTP status for this error code.
    pub fn status(&self) -> u16 {
        match self.code.as_str() {
            "unauthorized" => 401,
            "forbidden" | "helper_agent_cannot_approve" | "answer_requires_human" => 403,
            c if c.starts_with("unknown_") => 404,
            "gate_not_satisfied" | "stale_base" | "proposal_not_pending" | "version_not_head" | "version_rejected"
            | "already_at_final_phase" | "not_an_earlier_phase" | "project_exists" | "no_change" | "diff_conflict"
            | "fairness_violation" | "different_benchmarks" | "wrong_gate" => 409,
            "invalid_request" => 400,
            "transport_failure" | "network_error" | "malformed_response" | "tool_failure" => 502,
            "storage_error" | "corrupt_store" | "catalog_error" => 500,
            _ => 422,
        }
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

fn plain(e: &(impl ErrorCode + fmt::Display)) -> ApiError {
    ApiError::new(e.code(), e.to_string())
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        plain(&e)
    }
}

impl From<PhaseError> for ApiError {
    fn from(e: PhaseError) -> Self {
        match &e {
            PhaseError::GateNotSatisfied(status) => plain(&e).with_details(status),
            _ => plain(&e),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        plain(&e)
    }
}

impl From<HelperError> for ApiError {
    fn from(e: HelperError) -> Self {
        match &e {
            HelperError::TemplateViolation { missing, .. } => plain(&e).with_details(serde_json::json!({ "missing": missing })),
            _ => plain(&e),
        }
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        match &e {
            AgentError::GateNotSatisfied(status) => plain(&e).with_details(status),
            _ => plain(&e),
        }
    }
}

impl From<BenchError> for ApiError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Agent(a) => a.into(),
            e => plain(&e),
        }
    }
}

impl From<TransportError> for ApiError {
    fn from(e: TransportError) -> Self {
        plain(&e)
    }
}

impl From<CmrError> for ApiError {
    fn from(e: CmrError) -> Self {
        plain(&e)
    }
}
