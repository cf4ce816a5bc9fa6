//! On-disk version snapshot format: a `key: value` metadata block, a `---`
//! separator line, then the artifact body verbatim.

use sha2::{Digest, Sha256};

use crate::domain::{ArtifactKind, PhaseId};

pub const SEPARATOR: &str = "---\n";

pub fn content_sha256(content: &str) -> String {
    hex::encode(Sha256::digest(content.as_bytes()))
}

pub fn render(artifact_id: &str, kind: ArtifactKind, phase: PhaseId, version: u32, content: &str) -> String {
    format!(
        "artifact_id: {artifact_id}\nkind: {kind}\nphase: {phase}\nversion: {version}\ncontent_sha256: {}\n{SEPARATOR}{content}",
        content_sha256(content)
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub fields: Vec<(String, String)>,
    pub content: String,
}

impl Snapshot {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn parse(text: &str) -> Option<Snapshot> {
    let mut fields = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        offset += line.len();
        if line == SEPARATOR {
            return Some(Snapshot {
                fields,
                content: text[offset..].to_string(),
            });
        }
        let (k, v) = line.trim_end_matches('\n').split_once(": ")?;
        fields.push((k.to_string(), v.to_string()));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_survives_header_round_trip() {
        let body = "# Scope\n\n---\nkey: value\nno trailing newline";
        let text = render("art_1", ArtifactKind::ScopeSpec, PhaseId::P1Scope, 3, body);
        let snap = parse(&text).unwrap();
        assert_eq!(snap.content, body);
        assert_eq!(snap.field("version"), Some("3"));
        assert_eq!(snap.field("kind"), Some("scope_spec"));
        assert_eq!(snap.field("content_sha256"), Some(content_sha256(body).as_str()));
    }
}
