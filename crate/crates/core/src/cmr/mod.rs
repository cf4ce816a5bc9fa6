//! Collection search over NASA's Common Metadata Repository.
//!
//! Two sources share one contract ([`CollectionSearch`]): the public CMR
//! search API ([`LiveCmr`]) and an in-memory [`FixtureCatalog`] used for
//! offline, deterministic runs.

mod fixture;
mod live;

use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use self::fixture::{tokenize, FixtureCatalog, STOPWORDS};
pub use self::live::{
    CmrExchange, HttpFetcher, LiveCmr, RecordingFetcher, ReplayFetcher, UreqFetcher, DEFAULT_CMR_URL,
};
use crate::ErrorCode;

/// Unanchored concept-id pattern for scanning free text.
pub const CONCEPT_ID_SEARCH: &str = r"\bC[0-9]+-[A-Z0-9_]+\b";

pub const MAX_PAGE_SIZE: u32 = 2000;

/// `C` + digits + `-` + provider token (uppercase alphanumerics and underscore).
pub fn validate_concept_id(text: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^C[0-9]+-[A-Z0-9_]+$").expect("static regex"))
        .is_match(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionQuery {
    pub keyword: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<(NaiveDate, NaiveDate)>,
    pub page_size: u32,
    pub page_num: u32,
}

impl CollectionQuery {
    pub fn keyword(keyword: impl Into<String>, page_size: u32) -> Self {
        Self {
            keyword: keyword.into(),
            provider: None,
            temporal: None,
            page_size,
            page_num: 1,
        }
    }

    pub fn validate(&self) -> Result<(), CmrError> {
        if !(1..=MAX_PAGE_SIZE).contains(&self.page_size) {
            return Err(CmrError::InvalidQuery(format!(
                "page_size {} outside [1, {MAX_PAGE_SIZE}]",
                self.page_size
            )));
        }
        if self.page_num < 1 {
            return Err(CmrError::InvalidQuery("page_num must be >= 1".into()));
        }
        if self.keyword.trim().is_empty() && self.provider.is_none() && self.temporal.is_none() {
            return Err(CmrError::InvalidQuery("keyword is required when no other filter is set".into()));
        }
        if let Some((start, end)) = self.temporal {
            if start > end {
                return Err(CmrError::InvalidQuery(format!("temporal range {start}..{end} is reversed")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionRecord {
    pub concept_id: String,
    pub short_name: String,
    pub title: String,
    #[serde(default)]
    pub summary: String,
    pub provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_end: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CmrError {
    #[error("invalid collection query: {0}")]
    InvalidQuery(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed CMR response: {0}")]
    MalformedResponse(String),
    #[error("catalog: {0}")]
    Catalog(String),
}

impl ErrorCode for CmrError {
    fn code(&self) -> &'static str {
        match self {
            CmrError::InvalidQuery(_) => "invalid_query",
            CmrError::Network(_) => "network_error",
            CmrError::MalformedResponse(_) => "malformed_response",
            CmrError::Catalog(_) => "catalog_error",
        }
    }
}

pub trait CollectionSearch: Send + Sync {
    fn search(&self, query: &CollectionQuery) -> Result<Vec<CollectionRecord>, CmrError>;

    /// Stable description of the catalog, used in run fairness hashes.
    fn identity(&self) -> String;
}

/// Either the live API or an offline fixture catalog.
pub enum CatalogSource {
    Live(LiveCmr),
    Fixture(FixtureCatalog),
}

impl CatalogSource {
    pub fn mode(&self) -> &'static str {
        match self {
            CatalogSource::Live(_) => "live",
            CatalogSource::Fixture(_) => "fixture",
        }
    }
}

impl CollectionSearch for CatalogSource {
    fn search(&self, query: &CollectionQuery) -> Result<Vec<CollectionRecord>, CmrError> {
        match self {
            CatalogSource::Live(live) => live.search(query),
            CatalogSource::Fixture(fixture) => fixture.search(query),
        }
    }

    fn identity(&self) -> String {
        match self {
            CatalogSource::Live(live) => live.identity(),
            CatalogSource::Fixture(fixture) => fixture.identity(),
        }
    }
}

pub fn search_collections(
    source: &dyn CollectionSearch,
    query: &CollectionQuery,
) -> Result<Vec<CollectionRecord>, CmrError> {
    source.search(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concept_id_syntax() {
        assert!(validate_concept_id("C179003030-ORNL_DAAC"));
        assert!(validate_concept_id("C0001-TEST"));
        assert!(!validate_concept_id("X123"));
        assert!(!validate_concept_id("C1-"));
        assert!(!validate_concept_id("C-ABC"));
        assert!(!validate_concept_id("C12-abc"));
        assert!(!validate_concept_id(" C12-ABC"));
    }

    #[test]
    fn concept_scan_respects_boundaries() {
        let re = Regex::new(CONCEPT_ID_SEARCH).unwrap();
        let found: Vec<_> = re
            .find_iter("see C1-A, xC2-B, C3-Cd and (C4-D_1).")
            .map(|m| m.as_str())
            .collect();
        assert_eq!(found, vec!["C1-A", "C4-D_1"]);
    }

    #[test]
    fn query_preconditions() {
        assert_eq!(CollectionQuery::keyword("sst", 0).validate().unwrap_err().code(), "invalid_query");
        assert!(CollectionQuery::keyword("sst", 2001).validate().is_err());
        assert!(CollectionQuery::keyword("  ", 10).validate().is_err());
        let mut q = CollectionQuery::keyword("", 10);
        q.provider = Some("ORNL_DAAC".into());
        assert!(q.validate().is_ok());
        q.page_num = 0;
        assert!(q.validate().is_err());
    }
}
