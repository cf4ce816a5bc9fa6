//! Record/replay cassettes: JSON-lines of `{request_hash, request, response}`.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, ModelTransport, TransportError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub request: CompletionRequest,
    pub response: String,
}

/// Wraps a transport and appends every successful exchange to a cassette file.
/// Identical requests are written once.
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
    seen: Mutex<HashMap<String, ()>>,
}

impl<T: ModelTransport> RecordingTransport<T> {
    pub fn new(inner: T, path: impl Into<PathBuf>) -> Result<Self, TransportError> {
        let path = path.into();
        let mut seen = HashMap::new();
        if path.exists() {
            for entry in read_entries(&path)? {
                seen.insert(entry.request_hash, ());
            }
        }
        Ok(Self {
            inner,
            path,
            seen: Mutex::new(seen),
        })
    }
}

impl<T: ModelTransport> ModelTransport for RecordingTransport<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let response = self.inner.complete(request)?;
        let hash = request.request_hash();
        let mut seen = self.seen.lock().expect("cassette lock poisoned");
        if seen.insert(hash.clone(), ()).is_none() {
            let entry = CassetteEntry {
                request_hash: hash,
                request: request.clone(),
                response: response.clone(),
            };
            let mut line = serde_json::to_string(&entry).map_err(|e| TransportError::Cassette(e.to_string()))?;
            line.push('\n');
            if let Some(parent) = self.path.parent() {
                fs::create_dir_all(parent).map_err(|e| TransportError::Cassette(e.to_string()))?;
            }
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .and_then(|mut f| f.write_all(line.as_bytes()))
                .map_err(|e| TransportError::Cassette(e.to_string()))?;
        }
        Ok(response)
    }

    /// Recording is transparent: runs recorded through it are comparable with
    /// runs against the inner transport.
    fn identity(&self) -> String {
        self.inner.identity()
    }
}

/// Serves responses from a cassette, keyed by request hash. Unknown requests fail.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    identity: String,
    responses: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn from_entries(identity: impl Into<String>, entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        Self {
            identity: identity.into(),
            responses: entries.into_iter().map(|e| (e.request_hash, e.response)).collect(),
        }
    }

    /// Load a cassette file. The identity is derived from the file contents so
    /// two different cassettes never look like the same model.
    pub fn load(path: &Path) -> Result<Self, TransportError> {
        let bytes = fs::read(path).map_err(|e| TransportError::Cassette(format!("{}: {e}", path.display())))?;
        let identity = format!("cassette:{}", &crate::sha256_hex(&bytes)[..16]);
        Ok(Self::from_entries(identity, read_entries(path)?))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ModelTransport for ReplayTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let hash = request.request_hash();
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(TransportError::CassetteMiss(hash))
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }
}

pub(crate) fn read_entries(path: &Path) -> Result<Vec<CassetteEntry>, TransportError> {
    let text = fs::read_to_string(path).map_err(|e| TransportError::Cassette(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let entry: CassetteEntry = serde_json::from_str(l)
                .map_err(|e| TransportError::Cassette(format!("{} line {}: {e}", path.display(), n + 1)))?;
            if entry.request_hash != entry.request.request_hash() {
                return Err(TransportError::Cassette(format!(
                    "{} line {}: request_hash does not match request",
                    path.display(),
                    n + 1
                )));
            }
            Ok(entry)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{FnTransport, Message};

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let live = FnTransport::new("echo", |r: &CompletionRequest| Ok(format!("echo:{}", r.messages[0].text)));
        let rec = RecordingTransport::new(&live, &path).unwrap();
        let reqs: Vec<_> = ["a", "b", "a"]
            .iter()
            .map(|t| CompletionRequest::new("sys", vec![Message::user(*t)]))
            .collect();
        let live_out: Vec<_> = reqs.iter().map(|r| rec.complete(r).unwrap()).collect();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 2);

        let replay = ReplayTransport::load(&path).unwrap();
        let replay_out: Vec<_> = reqs.iter().map(|r| replay.complete(r).unwrap()).collect();
        assert_eq!(live_out, replay_out);
        let miss = replay.complete(&CompletionRequest::new("sys", vec![Message::user("zzz")]));
        assert!(matches!(miss, Err(TransportError::CassetteMiss(_))));
    }

    #[test]
    fn tampered_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let entry = CassetteEntry {
            request_hash: "deadbeef".into(),
            request: CompletionRequest::new("s", vec![]),
            response: "x".into(),
        };
        fs::write(&path, serde_json::to_string(&entry).unwrap()).unwrap();
        assert!(matches!(ReplayTransport::load(&path), Err(TransportError::Cassette(_))));
    }
}
