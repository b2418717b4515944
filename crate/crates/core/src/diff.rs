//! Unified diffs: produced with `similar`, applied by a small local patcher.

use similar::TextDiff;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("malformed hunk header `{0}`")]
    BadHeader(String),
    #[error("unexpected diff line `{0}`")]
    BadLine(String),
    #[error("hunk {hunk} does not match the input at line {line}")]
    Mismatch { hunk: usize, line: usize },
    #[error("hunk {0} overlaps or precedes the previous hunk")]
    OutOfOrder(usize),
}

/// Unified diff from `old` to `new` with three lines of context. Identical
/// inputs give an empty string.
pub fn unified_diff(path: &str, old: &str, new: &str) -> String {
    if old == new {
        return String::new();
    }
    TextDiff::from_lines(old, new)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{path}"), &format!("b/{path}"))
        .to_string()
}

struct Hunk {
    old_start: usize,
    old_len: usize,
    lines: Vec<(u8, String)>,
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    match s.split_once(',') {
        Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

fn parse_hunks(diff: &str) -> Result<Vec<Hunk>, PatchError> {
    let mut hunks: Vec<Hunk> = Vec::new();
    for raw in diff.split_inclusive('\n') {
        let line = raw.strip_suffix('\n').unwrap_or(raw);
        if let Some(rest) = line.strip_prefix("@@ ") {
            let bad = || PatchError::BadHeader(line.to_string());
            let mut parts = rest.split_whitespace();
            let old = parts.next().and_then(|p| p.strip_prefix('-')).ok_or_else(bad)?;
            let new = parts.next().and_then(|p| p.strip_prefix('+')).ok_or_else(bad)?;
            let (old_start, old_len) = parse_range(old).ok_or_else(bad)?;
            parse_range(new).ok_or_else(bad)?;
            hunks.push(Hunk { old_start, old_len, lines: Vec::new() });
            continue;
        }
        let Some(h) = hunks.last_mut() else {
            if line.starts_with("---")
                || line.starts_with("+++")
                || line.starts_with("diff ")
                || line.starts_with("index ")
            {
                continue;
            }
            return Err(PatchError::BadLine(line.to_string()));
        };
        match raw.as_bytes().first() {
            Some(&tag @ (b' ' | b'-' | b'+')) => h.lines.push((tag, raw[1..].to_string())),
            Some(b'\\') => {
                if let Some((_, prev)) = h.lines.last_mut() {
                    if prev.ends_with('\n') {
                        prev.pop();
                    }
                }
            }
            _ => return Err(PatchError::BadLine(line.to_string())),
        }
    }
    Ok(hunks)
}

/// Applies a unified diff to `old`. Context and removed lines must match
/// exactly; no fuzz is applied.
pub fn apply_unified_diff(old: &str, diff: &str) -> Result<String, PatchError> {
    let src: Vec<&str> = old.split_inclusive('\n').collect();
    let mut out = String::with_capacity(old.len());
    let mut pos = 0usize;
    for (n, hunk) in parse_hunks(diff)?.into_iter().enumerate() {
        let start = if hunk.old_len == 0 { hunk.old_start } else { hunk.old_start.saturating_sub(1) };
        if start < pos || start > src.len() {
            return Err(PatchError::OutOfOrder(n));
        }
        for l in &src[pos..start] {
            out.push_str(l);
        }
        pos = start;
        for (tag, text) in &hunk.lines {
            match tag {
                b'+' => out.push_str(text),
                _ => {
                    if src.get(pos) != Some(&text.as_str()) {
                        return Err(PatchError::Mismatch { hunk: n, line: pos + 1 });
                    }
                    if *tag == b' ' {
                        out.push_str(text);
                    }
                    pos += 1;
                }
            }
        }
    }
    for l in &src[pos..] {
        out.push_str(l);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_edit() {
        let old = "a\nb\nc\n";
        let new = "a\nB\nc\nd\n";
        let d = unified_diff("f.py", old, new);
        assert!(d.starts_with("--- a/f.py\n+++ b/f.py\n@@"));
        assert_eq!(apply_unified_diff(old, &d).unwrap(), new);
    }

    #[test]
    fn missing_trailing_newline() {
        for (old, new) in [("a\nb", "a\nb\n"), ("a\nb\n", "a\nc"), ("", "x"), ("x", "")] {
            let d = unified_diff("f", old, new);
            assert_eq!(apply_unified_diff(old, &d).unwrap(), new, "{old:?} -> {new:?}\n{d}");
        }
    }

    #[test]
    fn identical_inputs() {
        assert_eq!(unified_diff("f", "same\n", "same\n"), "");
        assert_eq!(apply_unified_diff("same\n", "").unwrap(), "same\n");
    }

    #[test]
    fn rejects_mismatched_context() {
        let d = unified_diff("f", "a\nb\nc\n", "a\nx\nc\n");
        assert!(matches!(apply_unified_diff("a\nq\nc\n", &d), Err(PatchError::Mismatch { .. })));
        assert!(apply_unified_diff("a\n", "garbage").is_err());
    }

    fn text() -> impl Strategy<Value = String> {
        prop::collection::vec(prop_oneof!["[abc]", "[abc]\n", Just("\n".to_string()), "[ab]{0,3}\r\n"], 0..30)
            .prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn diff_then_apply_round_trips(old in text(), new in text()) {
            let d = unified_diff("p", &old, &new);
            prop_assert_eq!(apply_unified_diff(&old, &d).unwrap(), new);
        }
    }
}
