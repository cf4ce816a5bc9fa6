//! Live CMR collection search: `GET <base>/search/collections.json` with
//! `keyword`, `provider`, `temporal`, `page_size` and `page_num` parameters.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;

use super::{validate_concept_id, CmrError, CollectionQuery, CollectionRecord, CollectionSearch};

pub const DEFAULT_CMR_URL: &str = "https://cmr.earthdata.nasa.gov/search/collections.json";

/// Fetches a URL body. Split out so recorded responses can stand in for the network.
pub trait HttpFetcher: Send + Sync {
    fn get(&self, url: &str) -> Result<String, CmrError>;
}

pub struct UreqFetcher {
    agent: ureq::Agent,
}

impl UreqFetcher {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent("care-workbench/0.1")
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqFetcher {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl HttpFetcher for UreqFetcher {
    fn get(&self, url: &str) -> Result<String, CmrError> {
        let mut resp = self
            .agent
            .get(url)
            .header("accept", "application/json")
            .call()
            .map_err(|e| CmrError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CmrError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(CmrError::Network(format!("HTTP {status}: {body}")));
        }
        Ok(body)
    }
}

/// One recorded HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmrExchange {
    pub request_hash: String,
    pub url: String,
    pub response: String,
}

fn url_hash(url: &str) -> String {
    crate::sha256_hex(url.as_bytes())
}

pub struct RecordingFetcher<F> {
    inner: F,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<F: HttpFetcher> RecordingFetcher<F> {
    pub fn new(inner: F, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl<F: HttpFetcher> HttpFetcher for RecordingFetcher<F> {
    fn get(&self, url: &str) -> Result<String, CmrError> {
        let body = self.inner.get(url)?;
        let entry = CmrExchange {
            request_hash: url_hash(url),
            url: url.to_string(),
            response: body.clone(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| CmrError::Catalog(e.to_string()))?;
        line.push('\n');
        let _guard = self.lock.lock().expect("cassette lock poisoned");
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| CmrError::Catalog(format!("{}: {e}", self.path.display())))?;
        Ok(body)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayFetcher {
    responses: HashMap<String, String>,
}

impl ReplayFetcher {
    pub fn from_exchanges(entries: impl IntoIterator<Item = CmrExchange>) -> Self {
        Self {
            responses: entries.into_iter().map(|e| (url_hash(&e.url), e.response)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CmrError> {
        let text = fs::read_to_string(path).map_err(|e| CmrError::Catalog(format!("{}: {e}", path.display())))?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| CmrError::Catalog(e.to_string())))
            .collect::<Result<Vec<CmrExchange>, _>>()?;
        Ok(Self::from_exchanges(entries))
    }
}

impl HttpFetcher for ReplayFetcher {
    fn get(&self, url: &str) -> Result<String, CmrError> {
        self.responses
            .get(&url_hash(url))
            .cloned()
            .ok_or_else(|| CmrError::Network(format!("no recorded response for {url}")))
    }
}

pub struct LiveCmr {
    base_url: String,
    fetcher: Box<dyn HttpFetcher>,
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl LiveCmr {
    /// Public CMR, at most two requests per second.
    pub fn public() -> Self {
        Self::new(DEFAULT_CMR_URL, Box::new(UreqFetcher::default()), Duration::from_millis(500))
    }

    pub fn new(base_url: impl Into<String>, fetcher: Box<dyn HttpFetcher>, min_interval: Duration) -> Self {
        Self {
            base_url: base_url.into(),
            fetcher,
            min_interval,
            last_request: Mutex::new(None),
        }
    }

    pub fn request_url(&self, query: &CollectionQuery) -> Result<String, CmrError> {
        let mut url = Url::parse(&self.base_url).map_err(|e| CmrError::InvalidQuery(e.to_string()))?;
        {
            let mut qp = url.query_pairs_mut();
            if !query.keyword.trim().is_empty() {
                qp.append_pair("keyword", query.keyword.trim());
            }
            if let Some(p) = &query.provider {
                qp.append_pair("provider", p);
            }
            if let Some((start, end)) = query.temporal {
                qp.append_pair("temporal", &format!("{start}T00:00:00Z,{end}T23:59:59Z"));
            }
            qp.append_pair("page_size", &query.page_size.to_string());
            qp.append_pair("page_num", &query.page_num.to_string());
        }
        Ok(url.into())
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().expect("throttle lock poisoned");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Map a `collections.json` body (`{"feed": {"entry": [...]}}`) to records.
/// Entries whose id is not a valid concept id are skipped.
pub fn parse_collections_json(body: &str) -> Result<Vec<CollectionRecord>, CmrError> {
    let v: Value = serde_json::from_str(body).map_err(|e| CmrError::MalformedResponse(e.to_string()))?;
    let entries = v
        .get("feed")
        .and_then(|f| f.get("entry"))
        .and_then(Value::as_array)
        .ok_or_else(|| CmrError::MalformedResponse("missing feed.entry".into()))?;
    let text = |e: &Value, k: &str| e.get(k).and_then(Value::as_str).map(str::to_string);
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let id = text(e, "id").ok_or_else(|| CmrError::MalformedResponse("entry without id".into()))?;
        if !validate_concept_id(&id) {
            tracing::warn!(id, "skipping CMR entry with unexpected id shape");
            continue;
        }
        let provider = text(e, "data_center")
            .or_else(|| id.split_once('-').map(|(_, p)| p.to_string()))
            .unwrap_or_default();
        out.push(CollectionRecord {
            short_name: text(e, "short_name").unwrap_or_default(),
            title: text(e, "title").or_else(|| text(e, "dataset_id")).unwrap_or_default(),
            summary: text(e, "summary").unwrap_or_default(),
            provider,
            time_start: text(e, "time_start"),
            time_end: text(e, "time_end"),
            concept_id: id,
        });
    }
    Ok(out)
}

impl CollectionSearch for LiveCmr {
    fn search(&self, query: &CollectionQuery) -> Result<Vec<CollectionRecord>, CmrError> {
        query.validate()?;
        let url = self.request_url(query)?;
        self.throttle();
        let body = self.fetcher.get(&url)?;
        let mut records = parse_collections_json(&body)?;
        records.truncate(query.page_size as usize);
        Ok(records)
    }

    fn identity(&self) -> String {
        format!("live:{}", self.base_url)
    }
}
