//! Model and catalog selection from short spec strings, as used by the
//! `CARE_TRANSPORT` and `CARE_CATALOG` settings.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use care_core::cmr::{CollectionSearch, FixtureCatalog, LiveCmr, RecordingFetcher, ReplayFetcher, UreqFetcher, DEFAULT_CMR_URL};
use care_core::transport::{
    ChatCompletionsTransport, ChatConfig, ModelTransport, RecordingTransport, ReplayTransport, ScriptedTransport, SimulatedModel,
};

use crate::error::ApiError;

pub const TRANSPORT_HELP: &str =
    "simulated | http | record:<cassette> | replay:<cassette> | scripted:<script.json>";
pub const CATALOG_HELP: &str = "live | fixture:<catalog.jsonl> | record:<exchanges> | replay:<exchanges>";

fn chat_config() -> Result<ChatConfig, ApiError> {
    ChatConfig::from_env().ok_or_else(|| ApiError::bad_request("set CARE_LLM_URL and CARE_LLM_MODEL for a live model"))
}

/// Build a model transport from a spec string.
pub fn transport(spec: &str) -> Result<Arc<dyn ModelTransport>, ApiError> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let path = Path::new(arg);
    Ok(match (kind, arg.is_empty()) {
        ("simulated", true) => Arc::new(SimulatedModel),
        ("http", true) => Arc::new(ChatCompletionsTransport::new(chat_config()?)),
        ("record", false) => Arc::new(RecordingTransport::new(ChatCompletionsTransport::new(chat_config()?), path)?),
        ("replay", false) => Arc::new(ReplayTransport::load(path)?),
        ("scripted", false) => Arc::new(ScriptedTransport::load(path)?),
        _ => return Err(ApiError::bad_request(format!("unknown transport {spec:?}; expected {TRANSPORT_HELP}"))),
    })
}

/// Build a catalog from a spec string.
pub fn catalog(spec: &str) -> Result<Arc<dyn CollectionSearch>, ApiError> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let path = Path::new(arg);
    let interval = Duration::from_millis(500);
    Ok(match (kind, arg.is_empty()) {
        ("live", true) => Arc::new(LiveCmr::public()),
        ("fixture", false) => Arc::new(FixtureCatalog::load(path)?),
        ("record", false) => Arc::new(LiveCmr::new(
            DEFAULT_CMR_URL,
            Box::new(RecordingFetcher::new(UreqFetcher::default(), path)),
            interval,
        )),
        ("replay", false) => Arc::new(LiveCmr::new(DEFAULT_CMR_URL, Box::new(ReplayFetcher::load(path)?), Duration::ZERO)),
        _ => return Err(ApiError::bad_request(format!("unknown catalog {spec:?}; expected {CATALOG_HELP}"))),
    })
}
