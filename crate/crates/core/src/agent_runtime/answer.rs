//! Final-answer extraction. Syntax-driven: whatever the model writes around
//! them, concept ids are taken in order of first appearance.

use crate::cmr::validate_concept_id;

const WRAPPERS: &[char] = &[
    '[', ']', '(', ')', '{', '}', '<', '>', '"', '\'', '`', '*', '.', ':', ';', '!', '?', '#',
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedAnswer {
    /// Valid ids, deduplicated keep-first.
    pub ids: Vec<String>,
    /// Id-shaped tokens that failed validation, in order of appearance.
    pub invalid: Vec<String>,
}

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '|'))
        .map(|t| t.trim_matches(WRAPPERS))
        .filter(|t| !t.is_empty())
}

/// A token that looks like an attempt at an id: hyphenated and made only of
/// identifier characters, or a `C<digits>` prefix.
fn id_shaped(token: &str) -> bool {
    let plain = token.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    let hyphenated = token.contains('-') && !token.starts_with('-') && !token.ends_with('-');
    let c_prefixed = token.len() > 1 && token.starts_with('C') && token[1..].starts_with(|c: char| c.is_ascii_digit());
    plain && (hyphenated || c_prefixed)
}

pub fn parse_answer(text: &str) -> ParsedAnswer {
    let mut out = ParsedAnswer::default();
    for token in tokens(text) {
        if validate_concept_id(token) {
            if !out.ids.iter().any(|x| x == token) {
                out.ids.push(token.to_string());
            }
        } else if id_shaped(token) && !out.invalid.iter().any(|x| x == token) {
            out.invalid.push(token.to_string());
        }
    }
    out
}

/// Concept ids in `model_text`, in order of first appearance, without duplicates.
pub fn parse_final_answer(model_text: &str) -> Vec<String> {
    parse_answer(model_text).ids
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prose_lists_and_fences() {
        let text = "Best matches:\n1. C0001-TEST (sea surface temperature)\n2. `C0002-TEST`\n```\n[\"C0003-TEST\", \"C0001-TEST\"]\n```\nDone.";
        assert_eq!(parse_final_answer(text), vec!["C0001-TEST", "C0002-TEST", "C0003-TEST"]);
    }

    #[test]
    fn invalid_tokens_are_reported() {
        let p = parse_answer("C0001-TEST, not-an-id, C12-abc and C0001-TEST");
        assert_eq!(p.ids, vec!["C0001-TEST"]);
        assert_eq!(p.invalid, vec!["not-an-id", "C12-abc"]);
    }

    #[test]
    fn embedded_ids_are_not_split_out() {
        assert!(parse_final_answer("xC1-A C1-A-B").is_empty());
    }
}
