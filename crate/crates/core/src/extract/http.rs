use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::markdown::extract_fenced_blocks;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    pub path: String,
    /// `None` when the request line omits the `HTTP/x` part.
    pub version: Option<String>,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpRequest {
    /// Path without query string or fragment.
    pub fn route(&self) -> &str {
        self.path.split(['?', '#']).next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub version: String,
    pub status: u16,
    pub reason: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HttpMessage {
    Request(HttpRequest),
    Response(HttpResponse),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct HttpParseError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

const METHODS: [&str; 9] = ["GET", "POST", "PUT", "PATCH", "DELETE", "HEAD", "OPTIONS", "TRACE", "CONNECT"];

fn err(line: usize, message: impl Into<String>) -> HttpParseError {
    HttpParseError { line, message: message.into() }
}

/// Parses one plain-text HTTP request or response.
///
/// Leading blank lines are skipped. Header lines run until the first blank
/// line; the rest, trimmed, is the body.
pub fn parse_http_text(text: &str) -> Result<HttpMessage, HttpParseError> {
    let lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let Some(start) = lines.iter().position(|l| !l.trim().is_empty()) else {
        return Err(err(1, "empty message"));
    };
    let first = lines[start].trim();
    let mut words = first.split_whitespace();
    let head = words.next().unwrap_or("");

    let mut headers = Vec::new();
    let mut i = start + 1;
    while i < lines.len() && !lines[i].trim().is_empty() {
        let Some((name, value)) = lines[i].split_once(':') else {
            return Err(err(i + 1, format!("expected `Name: value` header, found `{}`", lines[i].trim())));
        };
        let name = name.trim();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(err(i + 1, format!("bad header name `{name}`")));
        }
        headers.push((name.to_string(), value.trim().to_string()));
        i += 1;
    }
    let body = if i < lines.len() { lines[i + 1..].join("\n").trim().to_string() } else { String::new() };

    if head.starts_with("HTTP/") {
        let status_word = words.next().ok_or_else(|| err(start + 1, "missing status code"))?;
        let status: u16 = status_word
            .parse()
            .ok()
            .filter(|s| (100..=999).contains(s))
            .ok_or_else(|| err(start + 1, format!("bad status code `{status_word}`")))?;
        let reason = words.collect::<Vec<_>>().join(" ");
        return Ok(HttpMessage::Response(HttpResponse { version: head.to_string(), status, reason, headers, body }));
    }

    let method = head.to_ascii_uppercase();
    if !METHODS.contains(&method.as_str()) {
        return Err(err(start + 1, format!("expected a request or status line, found `{first}`")));
    }
    let path = words.next().ok_or_else(|| err(start + 1, "missing request path"))?;
    if !(path.starts_with('/') || path.starts_with("http://") || path.starts_with("https://") || path == "*") {
        return Err(err(start + 1, format!("bad request path `{path}`")));
    }
    let version = match words.next() {
        Some(v) if v.starts_with("HTTP/") => Some(v.to_string()),
        Some(v) => return Err(err(start + 1, format!("bad HTTP version `{v}`"))),
        None => None,
    };
    if let Some(extra) = words.next() {
        return Err(err(start + 1, format!("unexpected `{extra}` after request line")));
    }
    Ok(HttpMessage::Request(HttpRequest { method, path: path.to_string(), version, headers, body }))
}

/// The first HTTP response found in a reply: fenced blocks first, then the
/// text itself, each starting from its first `HTTP/` line.
pub fn extract_http_response(text: &str) -> Option<HttpResponse> {
    extract_fenced_blocks(text).into_iter().map(|b| b.body).chain(std::iter::once(text.to_string())).find_map(
        |candidate| {
            let from = candidate
                .split_inclusive('\n')
                .scan(0usize, |off, l| {
                    let at = *off;
                    *off += l.len();
                    Some((at, l))
                })
                .find(|(_, l)| l.trim_start().starts_with("HTTP/"))?
                .0;
            match parse_http_text(&candidate[from..]) {
                Ok(HttpMessage::Response(r)) => Some(r),
                _ => None,
            }
        },
    )
}
