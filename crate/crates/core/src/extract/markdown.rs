use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// One markdown list item (`-`, `*`, `+`, `1.` or `1)`), single line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListItem<'a> {
    pub text: &'a str,
    /// 1-based.
    pub line: usize,
}

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*+]|\d{1,4}[.)])\s+(\S.*)$").unwrap());

/// Lines of `text` with their 1-based numbers and a flag for being inside a
/// fenced block (fence lines themselves count as inside).
fn lines_outside_fences(text: &str) -> impl Iterator<Item = (usize, &str, bool)> {
    let mut fence: Option<usize> = None;
    text.split('\n').enumerate().map(move |(i, line)| {
        let trimmed = line.trim();
        let ticks = trimmed.chars().take_while(|&c| c == '`').count();
        let inside = match fence {
            Some(open) => {
                if ticks >= open && trimmed.chars().all(|c| c == '`') {
                    fence = None;
                }
                true
            }
            None if ticks >= 3 && !trimmed[ticks..].contains('`') => {
                fence = Some(ticks);
                true
            }
            None => false,
        };
        (i + 1, line, inside)
    })
}

pub fn list_items(text: &str) -> Vec<ListItem<'_>> {
    lines_outside_fences(text)
        .filter(|(_, _, inside)| !inside)
        .filter_map(|(line, l, _)| {
            LIST_MARKER.captures(l).map(|c| ListItem { text: c.get(1).unwrap().as_str().trim_end(), line })
        })
        .collect()
}

fn strip_emphasis(s: &str) -> &str {
    s.trim_matches(|c| c == '*' || c == '_').trim()
}

static STORY_SHAPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^as an?\s+[^,]+,\s*I\b").unwrap());

/// List items shaped like "As a …, I …".
pub fn extract_user_stories(text: &str) -> Vec<String> {
    list_items(text)
        .into_iter()
        .map(|item| strip_emphasis(item.text))
        .filter(|t| STORY_SHAPE.is_match(t))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FencedBlock {
    /// First word of the info string; empty when absent.
    pub language_tag: String,
    pub body: String,
    pub filename_hint: Option<String>,
    /// The fence was never closed; `body` is everything after the opener.
    #[serde(default)]
    pub unterminated: bool,
}

static FILE_HINT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:#|//)\s*[Ff]ile:\s*(\S(?:.*\S)?)\s*$").unwrap());

impl FencedBlock {
    /// Markdown for this block, with a fence longer than any backtick line
    /// inside the body.
    pub fn to_markdown(&self) -> String {
        let longest = self
            .body
            .split('\n')
            .map(|l| l.trim())
            .filter(|l| !l.is_empty() && l.chars().all(|c| c == '`'))
            .map(|l| l.len())
            .max()
            .unwrap_or(0);
        let fence = "`".repeat((longest + 1).max(3));
        if self.unterminated {
            format!("{fence}{}\n{}", self.language_tag, self.body)
        } else if self.body.is_empty() {
            format!("{fence}{}\n{fence}\n", self.language_tag)
        } else {
            format!("{fence}{}\n{}\n{fence}\n", self.language_tag, self.body)
        }
    }

    /// Body without a leading `# file:` / `// file:` line.
    pub fn body_without_hint(&self) -> &str {
        if self.filename_hint.is_none() {
            return &self.body;
        }
        match self.body.split_once('\n') {
            Some((first, rest)) if FILE_HINT.is_match(first) => rest,
            None if FILE_HINT.is_match(&self.body) => "",
            _ => &self.body,
        }
    }
}

/// Triple-backtick blocks in order of appearance.
pub fn extract_fenced_blocks(text: &str) -> Vec<FencedBlock> {
    let mut out = Vec::new();
    // (fence length, language, byte offset where the body starts)
    let mut open: Option<(usize, String, usize)> = None;
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line_start = offset;
        offset += raw.len();
        let trimmed = raw.trim();
        let ticks = trimmed.chars().take_while(|&c| c == '`').count();
        match &open {
            None => {
                if ticks >= 3 && !trimmed[ticks..].contains('`') {
                    let lang = trimmed[ticks..].split_whitespace().next().unwrap_or("").to_string();
                    open = Some((ticks, lang, offset));
                }
            }
            Some((len, _, _)) => {
                if ticks >= *len && ticks == trimmed.len() {
                    let (_, lang, body_start) = open.take().unwrap();
                    // Exclude the newline that ends the last body line.
                    let body_end = line_start.saturating_sub(1).max(body_start);
                    let body = &text[body_start..body_end];
                    out.push(make_block(lang, body, false));
                }
            }
        }
    }
    if let Some((_, lang, body_start)) = open {
        let rest = &text[body_start.min(text.len())..];
        out.push(make_block(lang, rest, true));
    }
    out
}

fn make_block(language_tag: String, body: &str, unterminated: bool) -> FencedBlock {
    let filename_hint = body.split('\n').next().and_then(|first| FILE_HINT.captures(first)).map(|c| c[1].to_string());
    FencedBlock { language_tag, body: body.to_string(), filename_hint, unterminated }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumption {
    pub assumption: String,
    pub difficulty: Option<String>,
}

static DIFFICULTY_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(easy|medium|hard)\b").unwrap());

/// List items, each optionally split into an assumption and a difficulty.
///
/// The difficulty is whatever follows ` - difficulty:` (any case), or else
/// the clause after the last em-dash when it mentions easy, medium or hard.
pub fn extract_assumptions(text: &str) -> Vec<Assumption> {
    list_items(text).into_iter().map(|item| split_assumption(item.text)).collect()
}

fn split_assumption(item: &str) -> Assumption {
    let lower = item.to_ascii_lowercase();
    if let Some(pos) = lower.find(" - difficulty:") {
        return Assumption {
            assumption: item[..pos].trim().to_string(),
            difficulty: Some(item[pos + " - difficulty:".len()..].trim().to_string()).filter(|d| !d.is_empty()),
        };
    }
    if let Some(pos) = item.rfind('—') {
        let tail = &item[pos + '—'.len_utf8()..];
        if DIFFICULTY_WORD.is_match(tail) && !tail.trim().is_empty() {
            return Assumption {
                assumption: item[..pos].trim().to_string(),
                difficulty: Some(tail.trim().to_string()),
            };
        }
    }
    Assumption { assumption: item.trim().to_string(), difficulty: None }
}

static DALLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)dall[-·]?e prompt").unwrap());

/// Image-generator prompts: the text after the colon that follows a
/// "DALL-E prompt" mention, or the next non-empty line when the colon ends
/// the line. Surrounding quotes are removed.
pub fn extract_image_prompts(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(m) = DALLE.find(line) {
            if let Some(colon) = line[m.end()..].find(':') {
                let after = strip_emphasis(&line[m.end() + colon + 1..]);
                let candidate = if after.is_empty() {
                    let next = lines[i + 1..].iter().position(|l| !l.trim().is_empty());
                    next.map(|n| {
                        i += n + 1;
                        lines[i].trim()
                    })
                } else {
                    Some(after)
                };
                if let Some(c) = candidate.map(unquote).filter(|c| !c.is_empty()) {
                    out.push(c.to_string());
                }
            }
        }
        i += 1;
    }
    out
}

fn unquote(s: &str) -> &str {
    for (open, close) in [('"', '"'), ('“', '”'), ('\'', '\'')] {
        if let Some(inner) = s.strip_prefix(open) {
            if let Some(end) = inner.rfind(close) {
                return inner[..end].trim();
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureOption {
    pub title: String,
    pub body: String,
}

static MD_NUMBERED_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^#{1,6}\s+(?:\*\*)?(?:(?:option|architecture)\s+)?\d+[.):]").unwrap());
static PLAIN_NUMBERED_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:\*\*)?(?:(?:option|architecture)\s+)?\d+[.):]\s*\S").unwrap());

/// Splits a reply on its top-level numbered headings. Markdown headings
/// (`## 1. ...`) win when present; otherwise unindented numbered lines are
/// used.
pub fn split_architecture_options(text: &str) -> Vec<ArchitectureOption> {
    let lines: Vec<(usize, &str, bool)> = lines_outside_fences(text).collect();
    let uses_md = lines.iter().any(|(_, l, inside)| !inside && MD_NUMBERED_HEADING.is_match(l));
    let is_heading = |l: &str| {
        if uses_md {
            MD_NUMBERED_HEADING.is_match(l)
        } else {
            PLAIN_NUMBERED_HEADING.is_match(l)
        }
    };
    let mut out = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for (_, line, inside) in lines {
        if !inside && is_heading(line) {
            if let Some((title, body)) = current.take() {
                out.push(finish_option(title, &body));
            }
            let title = line.trim().trim_start_matches('#').trim();
            current = Some((strip_emphasis(title).to_string(), Vec::new()));
        } else if let Some((_, body)) = &mut current {
            body.push(line);
        }
    }
    if let Some((title, body)) = current {
        out.push(finish_option(title, &body));
    }
    out
}

fn finish_option(title: String, body: &[&str]) -> ArchitectureOption {
    ArchitectureOption { title, body: body.join("\n").trim().to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_story() {
        assert_eq!(
            extract_user_stories("- As a user, I want to delete my prompts"),
            vec!["As a user, I want to delete my prompts"]
        );
        assert!(extract_user_stories("As a user, I want things, but this is prose.").is_empty());
    }

    #[test]
    fn stories_among_prose() {
        let text = "You cannot do that yet.\n\nMissing requirements:\n\n1. **As an admin, I can ban users.**\n2. Something else\n* as a visitor, i browse prompts\n- Asa, I x\n";
        assert_eq!(extract_user_stories(text), vec!["As an admin, I can ban users.", "as a visitor, i browse prompts"]);
    }

    #[test]
    fn fences() {
        let text = "intro\n```python\nprint('hi')\n```\nmid\n```\n# file: app/main.py\nx = 1\n```\n";
        let blocks = extract_fenced_blocks(text);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].language_tag, "python");
        assert_eq!(blocks[0].body, "print('hi')");
        assert_eq!(blocks[0].filename_hint, None);
        assert_eq!(blocks[1].filename_hint.as_deref(), Some("app/main.py"));
        assert_eq!(blocks[1].body_without_hint(), "x = 1");
        assert!(extract_fenced_blocks("no fences here").is_empty());
    }

    #[test]
    fn unterminated_fence() {
        let blocks = extract_fenced_blocks("```rust\nfn main() {}\nmore\n");
        assert_eq!(blocks.len(), 1);
        assert!(blocks[0].unterminated);
        assert_eq!(blocks[0].body, "fn main() {}\nmore\n");
        assert_eq!(extract_fenced_blocks(&blocks[0].to_markdown()), blocks);
    }

    #[test]
    fn empty_and_long_fences() {
        let blocks = extract_fenced_blocks("```\n```\n````md\n```\ninner\n```\n````\n");
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].body, "");
        assert_eq!(blocks[1].body, "```\ninner\n```");
        let again = extract_fenced_blocks(&blocks[1].to_markdown());
        assert_eq!(again, vec![blocks[1].clone()]);
    }

    #[test]
    fn assumptions() {
        let a = extract_assumptions("1. Assumes MongoDB — hard");
        assert_eq!(a, vec![Assumption { assumption: "Assumes MongoDB".into(), difficulty: Some("hard".into()) }]);
        let a = extract_assumptions("- one\n- two — a detail\n- three - Difficulty: Medium, needs a migration");
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].difficulty, None);
        assert_eq!(a[1], Assumption { assumption: "two — a detail".into(), difficulty: None });
        assert_eq!(a[2].difficulty.as_deref(), Some("Medium, needs a migration"));
    }

    #[test]
    fn image_prompt_from_sample_reply() {
        let reply = "Sure, I can provide a DALL-E prompt to generate a wireframe for the screen description. \
                     Here is the DALL-E prompt for the screen where users can delete their prompts: A wireframe of the \
                     'My Prompts' screen.";
        assert_eq!(extract_image_prompts(reply), vec!["A wireframe of the 'My Prompts' screen."]);
        let reply = "Screen: list\n\nDALL-E prompt:\n\"A wireframe of a login form\"\n";
        assert_eq!(extract_image_prompts(reply), vec!["A wireframe of a login form"]);
        assert!(extract_image_prompts("no prompt").is_empty());
    }

    #[test]
    fn architecture_sections() {
        let reply = "Here are three options.\n\n## 1. Monolith\nOne service.\n1. module a\n\n## 2. Services\nMany.\n\n## 3. Serverless\nFunctions.\n";
        let opts = split_architecture_options(reply);
        let titles: Vec<_> = opts.iter().map(|o| o.title.as_str()).collect();
        assert_eq!(titles, ["1. Monolith", "2. Services", "3. Serverless"]);
        assert_eq!(opts[0].body, "One service.\n1. module a");
        let plain = "1. **Layered** app\n   - api\n2. Hexagonal\n";
        assert_eq!(split_architecture_options(plain).len(), 2);
    }
}
