//! Offline catalog ranked by keyword overlap.
//!
//! Score = number of distinct non-stopword query tokens that occur in the
//! record's short name, title or summary. Zero-score records are not returned
//! when the query has tokens. Ties break on concept id ascending. This is a
//! deterministic stand-in for CMR relevance ranking, not a model of it.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use super::{validate_concept_id, CmrError, CollectionQuery, CollectionRecord, CollectionSearch};

pub const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "any", "are", "as", "at", "be", "by", "can", "data", "dataset", "datasets", "do",
    "find", "for", "from", "have", "i", "in", "is", "it", "me", "need", "of", "on", "or", "over", "show", "that",
    "the", "there", "to", "what", "which", "with",
];

/// Lowercased alphanumeric runs, minus stopwords.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FixtureCatalog {
    name: String,
    records: Vec<(CollectionRecord, BTreeSet<String>)>,
}

impl FixtureCatalog {
    pub fn new(name: impl Into<String>, records: Vec<CollectionRecord>) -> Result<Self, CmrError> {
        let mut seen = BTreeSet::new();
        let mut indexed = Vec::with_capacity(records.len());
        for r in records {
            if !validate_concept_id(&r.concept_id) {
                return Err(CmrError::Catalog(format!("invalid concept id {:?}", r.concept_id)));
            }
            if !seen.insert(r.concept_id.clone()) {
                return Err(CmrError::Catalog(format!("duplicate concept id {}", r.concept_id)));
            }
            let tokens = tokenize(&format!("{} {} {}", r.short_name, r.title, r.summary));
            indexed.push((r, tokens));
        }
        Ok(Self {
            name: name.into(),
            records: indexed,
        })
    }

    /// Load a JSON-lines file of [`CollectionRecord`]s.
    pub fn load(path: &Path) -> Result<Self, CmrError> {
        let bytes = fs::read(path).map_err(|e| CmrError::Catalog(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| CmrError::Catalog(e.to_string()))?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| CmrError::Catalog(format!("{} line {}: {e}", path.display(), n + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(format!("fixture:{}", &crate::sha256_hex(&bytes)[..16]), records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, concept_id: &str) -> bool {
        self.records.iter().any(|(r, _)| r.concept_id == concept_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &CollectionRecord> {
        self.records.iter().map(|(r, _)| r)
    }
}

fn coverage_date(s: &Option<String>) -> Option<NaiveDate> {
    let s = s.as_deref()?;
    NaiveDate::parse_from_str(s.get(..10)?, "%Y-%m-%d").ok()
}

fn overlaps(record: &CollectionRecord, start: NaiveDate, end: NaiveDate) -> bool {
    let rs = coverage_date(&record.time_start);
    let re = coverage_date(&record.time_end);
    rs.is_none_or(|rs| rs <= end) && re.is_none_or(|re| re >= start)
}

impl CollectionSearch for FixtureCatalog {
    fn search(&self, query: &CollectionQuery) -> Result<Vec<CollectionRecord>, CmrError> {
        query.validate()?;
        let q = tokenize(&query.keyword);
        let mut scored: Vec<(usize, &CollectionRecord)> = self
            .records
            .iter()
            .filter(|(r, _)| {
                query
                    .provider
                    .as_ref()
                    .is_none_or(|p| r.provider.eq_ignore_ascii_case(p))
            })
            .filter(|(r, _)| query.temporal.is_none_or(|(s, e)| overlaps(r, s, e)))
            .map(|(r, tokens)| (q.intersection(tokens).count(), r))
            .filter(|(score, _)| q.is_empty() || *score > 0)
            .collect();
        scored.sort_by(|(sa, a), (sb, b)| sb.cmp(sa).then_with(|| a.concept_id.cmp(&b.concept_id)));
        let skip = (query.page_num as usize - 1) * query.page_size as usize;
        Ok(scored
            .into_iter()
            .skip(skip)
            .take(query.page_size as usize)
            .map(|(_, r)| r.clone())
            .collect())
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, title: &str, provider: &str) -> CollectionRecord {
        CollectionRecord {
            concept_id: id.into(),
            short_name: String::new(),
            title: title.into(),
            summary: String::new(),
            provider: provider.into(),
            time_start: None,
            time_end: None,
        }
    }

    fn catalog() -> FixtureCatalog {
        FixtureCatalog::new(
            "t",
            vec![
                rec("C3-A", "Sea ice concentration", "A"),
                rec("C2-A", "Sea surface temperature daily", "A"),
                rec("C1-B", "Sea surface salinity", "B"),
                rec("C4-B", "Aerosol optical depth", "B"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn ranks_by_overlap_then_id() {
        let got: Vec<_> = catalog()
            .search(&CollectionQuery::keyword("sea surface temperature", 10))
            .unwrap()
            .into_iter()
            .map(|r| r.concept_id)
            .collect();
        assert_eq!(got, vec!["C2-A", "C1-B", "C3-A"]);
    }

    #[test]
    fn pages_and_provider_filter() {
        let c = catalog();
        let mut q = CollectionQuery::keyword("sea", 2);
        q.page_num = 2;
        let got: Vec<_> = c.search(&q).unwrap().into_iter().map(|r| r.concept_id).collect();
        assert_eq!(got, vec!["C3-A"]);
        let mut q = CollectionQuery::keyword("sea", 10);
        q.provider = Some("b".into());
        let got: Vec<_> = c.search(&q).unwrap().into_iter().map(|r| r.concept_id).collect();
        assert_eq!(got, vec!["C1-B"]);
    }

    #[test]
    fn no_match_is_empty_not_error() {
        assert!(catalog().search(&CollectionQuery::keyword("volcano", 5)).unwrap().is_empty());
    }

    #[test]
    fn temporal_filter_uses_coverage_when_present() {
        let mut old = rec("C9-A", "sea level", "A");
        old.time_start = Some("1990-01-01T00:00:00.000Z".into());
        old.time_end = Some("1999-12-31T23:59:59.999Z".into());
        let open = rec("C8-A", "sea level", "A");
        let c = FixtureCatalog::new("t", vec![old, open]).unwrap();
        let mut q = CollectionQuery::keyword("sea level", 10);
        q.temporal = Some((NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2011, 1, 1).unwrap()));
        let got: Vec<_> = c.search(&q).unwrap().into_iter().map(|r| r.concept_id).collect();
        assert_eq!(got, vec!["C8-A"]);
    }

    #[test]
    fn bad_catalog_rejected() {
        assert!(FixtureCatalog::new("t", vec![rec("X1", "a", "A")]).is_err());
        assert!(FixtureCatalog::new("t", vec![rec("C1-A", "a", "A"), rec("C1-A", "b", "A")]).is_err());
    }
}
