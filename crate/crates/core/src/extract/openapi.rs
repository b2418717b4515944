use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::markdown::extract_fenced_blocks;

/// An API document with top-level `openapi` and `paths` keys, normalized to
/// a JSON tree (YAML mapping keys become strings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenApiDocument {
    /// The exact text the document was parsed from.
    pub source: String,
    pub document: Value,
}

impl OpenApiDocument {
    /// Path keys in document order.
    pub fn paths(&self) -> Vec<&str> {
        match self.document.get("paths") {
            Some(Value::Object(m)) => m.keys().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    pub fn has_path(&self, path: &str) -> bool {
        self.paths().contains(&path)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(&self.document).unwrap_or_else(|_| self.source.clone())
    }
}

/// The first fenced block, or else the whole text, that parses as JSON or
/// YAML and carries both `openapi` and `paths` at the top level.
pub fn extract_openapi(text: &str) -> Option<OpenApiDocument> {
    extract_fenced_blocks(text).into_iter().map(|b| b.body).chain(std::iter::once(text.to_string())).find_map(
        |candidate| {
            let document = parse_tree(&candidate)?;
            let obj = document.as_object()?;
            (obj.contains_key("openapi") && obj.contains_key("paths"))
                .then(|| OpenApiDocument { source: candidate.trim().to_string(), document })
        },
    )
}

fn parse_tree(text: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        return Some(v);
    }
    serde_yaml::from_str::<serde_yaml::Value>(text).ok().map(yaml_to_json)
}

fn yaml_to_json(v: serde_yaml::Value) -> Value {
    use serde_yaml::Value as Y;
    match v {
        Y::Null => Value::Null,
        Y::Bool(b) => Value::Bool(b),
        Y::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::from(i)
            } else if let Some(u) = n.as_u64() {
                Value::from(u)
            } else {
                n.as_f64().and_then(serde_json::Number::from_f64).map(Value::Number).unwrap_or(Value::Null)
            }
        }
        Y::String(s) => Value::String(s),
        Y::Sequence(seq) => Value::Array(seq.into_iter().map(yaml_to_json).collect()),
        Y::Mapping(m) => {
            let mut out = Map::new();
            for (k, v) in m {
                out.insert(key_string(k), yaml_to_json(v));
            }
            Value::Object(out)
        }
        Y::Tagged(t) => yaml_to_json(t.value),
    }
}

fn key_string(k: serde_yaml::Value) -> String {
    match k {
        serde_yaml::Value::String(s) => s,
        serde_yaml::Value::Number(n) => n.to_string(),
        serde_yaml::Value::Bool(b) => b.to_string(),
        serde_yaml::Value::Null => "null".to_string(),
        other => serde_yaml::to_string(&other).map(|s| s.trim().to_string()).unwrap_or_default(),
    }
}
