#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ppc_core::renderer::normalize_whitespace;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The reference document as plain text: LaTeX escapes and quote ligatures undone,
/// whitespace collapsed.
pub fn reference_text() -> String {
    let raw = std::fs::read_to_string(repo_root().join("paper.md")).expect("reference document next to the workspace");
    let plain = raw
        .replace("\\_", "_")
        .replace("\\{", "{")
        .replace("\\}", "}")
        .replace("\\&", "&")
        .replace("``", "\"")
        .replace("''", "\"");
    normalize_whitespace(&plain)
}

/// Panics unless `sentence` appears in the reference text and in `rendered`,
/// both compared after whitespace normalization.
pub fn assert_verbatim(reference: &str, rendered: &str, sentence: &str) {
    let s = normalize_whitespace(sentence);
    assert!(reference.contains(&s), "oracle sentence not found in reference text: {s}");
    let r = normalize_whitespace(rendered);
    assert!(r.contains(&s), "rendered prompt lacks `{s}`:\n{r}");
}

/// Every file below `root`, relative, sorted.
pub fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    out
}
