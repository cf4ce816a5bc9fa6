//! Line-based unified diffs over artifact content.

use diffy::Patch;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiffError {
    #[error("malformed diff: {0}")]
    Malformed(String),
    #[error("diff does not apply: {0}")]
    Conflict(String),
}

/// Unified diff turning `old` into `new`. Empty string when they are equal.
pub fn unified_diff(old: &str, new: &str) -> String {
    let patch = diffy::create_patch(old, new);
    if patch.hunks().is_empty() {
        return String::new();
    }
    patch.to_string()
}

/// Parse without applying. A diff with no hunks is rejected.
pub fn validate(diff: &str) -> Result<(), DiffError> {
    parse(diff).map(|_| ())
}

fn parse(diff: &str) -> Result<Patch<'_, str>, DiffError> {
    let patch = Patch::from_str(diff).map_err(|e| DiffError::Malformed(e.to_string()))?;
    if patch.hunks().is_empty() {
        return Err(DiffError::Malformed("no hunks".into()));
    }
    Ok(patch)
}

pub fn apply(base: &str, diff: &str) -> Result<String, DiffError> {
    let patch = parse(diff)?;
    diffy::apply(base, &patch).map_err(|e| DiffError::Conflict(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(validate("not a diff\n"), Err(DiffError::Malformed(_))));
        assert!(matches!(validate(""), Err(DiffError::Malformed(_))));
    }

    #[test]
    fn diff_against_wrong_base_conflicts() {
        let d = unified_diff("a\nb\n", "a\nc\n");
        assert!(matches!(apply("x\ny\n", &d), Err(DiffError::Conflict(_))));
    }

    fn text() -> impl Strategy<Value = String> {
        prop::collection::vec("[a-c ]{0,4}", 0..8).prop_map(|lines| lines.join("\n"))
    }

    proptest! {
        #[test]
        fn diff_then_apply_reproduces_target(old in text(), new in text()) {
            let d = unified_diff(&old, &new);
            if old == new {
                prop_assert!(d.is_empty());
            } else {
                prop_assert_eq!(apply(&old, &d).unwrap(), new);
            }
        }
    }
}
