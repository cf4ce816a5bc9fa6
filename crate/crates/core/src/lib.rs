//! Stage-gated, artifact-driven engineering of LLM agents.
//!
//! The crate is organized by subsystem:
//!
//! - [`artifact_store`]: versioned Markdown artifacts, revision proposals, approvals.
//! - [`phase_engine`]: the phase ladder and its dual-role review gates.
//! - [`helper_agent`]: phase-aligned elicitation, drafting and diff proposals.
//! - [`transport`]: the pluggable model transport plus mock and cassette implementations.
//! - [`cmr`]: collection search over NASA's Common Metadata Repository (live or fixture).
//! - [`agent_runtime`]: the tool-using retrieval agent loop.
//! - [`benchmark`]: Recall@K, evaluation, the two-gate decision, synthetic generation, reports.

pub mod agent_runtime;
pub mod artifact_store;
pub mod benchmark;
pub mod clock;
pub mod cmr;
pub mod domain;
pub mod helper_agent;
pub mod phase_engine;
pub mod transport;

pub use domain::{ArtifactKind, PhaseId, Role};

/// Stable machine-readable error token, shared by the HTTP API and the CLI.
pub trait ErrorCode {
    fn code(&self) -> &'static str;
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
