//! Structured artifacts pulled out of free-form assistant replies.
//!
//! Every extractor is total: any input yields a value, possibly empty. All
//! textual payloads are slices of the input (after trimming), so nothing is
//! invented.

mod http;
mod markdown;
mod openapi;

use serde::{Deserialize, Serialize};

pub use http::{extract_http_response, parse_http_text, HttpMessage, HttpParseError, HttpRequest, HttpResponse};
pub use markdown::{
    extract_assumptions, extract_fenced_blocks, extract_image_prompts, extract_user_stories, list_items,
    split_architecture_options, ArchitectureOption, Assumption, FencedBlock, ListItem,
};
pub use openapi::{extract_openapi, OpenApiDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    UserStory,
    OpenapiSpec,
    HttpResponse,
    AssumptionList,
    CodeBlock,
    ImagePrompt,
    DslDefinition,
    ArchitectureOption,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::UserStory => "user-story",
            ArtifactKind::OpenapiSpec => "openapi-spec",
            ArtifactKind::HttpResponse => "http-response",
            ArtifactKind::AssumptionList => "assumption-list",
            ArtifactKind::CodeBlock => "code-block",
            ArtifactKind::ImagePrompt => "image-prompt",
            ArtifactKind::DslDefinition => "dsl-definition",
            ArtifactKind::ArchitectureOption => "architecture-option",
        }
    }
}

impl std::fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "content", rename_all = "kebab-case")]
pub enum ArtifactPayload {
    UserStory(String),
    OpenapiSpec(OpenApiDocument),
    HttpResponse(HttpResponse),
    AssumptionList(Vec<Assumption>),
    CodeBlock(FencedBlock),
    ImagePrompt(String),
    DslDefinition(String),
    ArchitectureOption(ArchitectureOption),
}

impl ArtifactPayload {
    pub fn kind(&self) -> ArtifactKind {
        match self {
            ArtifactPayload::UserStory(_) => ArtifactKind::UserStory,
            ArtifactPayload::OpenapiSpec(_) => ArtifactKind::OpenapiSpec,
            ArtifactPayload::HttpResponse(_) => ArtifactKind::HttpResponse,
            ArtifactPayload::AssumptionList(_) => ArtifactKind::AssumptionList,
            ArtifactPayload::CodeBlock(_) => ArtifactKind::CodeBlock,
            ArtifactPayload::ImagePrompt(_) => ArtifactKind::ImagePrompt,
            ArtifactPayload::DslDefinition(_) => ArtifactKind::DslDefinition,
            ArtifactPayload::ArchitectureOption(_) => ArtifactKind::ArchitectureOption,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    #[serde(flatten)]
    pub payload: ArtifactPayload,
    pub origin_turn: usize,
}

impl Artifact {
    pub fn kind(&self) -> ArtifactKind {
        self.payload.kind()
    }
}

/// Runs the extractors for `kinds` over one reply, in the order given.
pub fn extract_kinds(text: &str, kinds: &[ArtifactKind]) -> Vec<ArtifactPayload> {
    let mut out = Vec::new();
    for kind in kinds {
        match kind {
            ArtifactKind::UserStory => {
                out.extend(extract_user_stories(text).into_iter().map(ArtifactPayload::UserStory))
            }
            ArtifactKind::ImagePrompt => {
                out.extend(extract_image_prompts(text).into_iter().map(ArtifactPayload::ImagePrompt))
            }
            ArtifactKind::OpenapiSpec => out.extend(extract_openapi(text).map(ArtifactPayload::OpenapiSpec)),
            ArtifactKind::HttpResponse => out.extend(extract_http_response(text).map(ArtifactPayload::HttpResponse)),
            ArtifactKind::AssumptionList => {
                let items = extract_assumptions(text);
                if !items.is_empty() {
                    out.push(ArtifactPayload::AssumptionList(items));
                }
            }
            ArtifactKind::CodeBlock => {
                out.extend(extract_fenced_blocks(text).into_iter().map(ArtifactPayload::CodeBlock))
            }
            ArtifactKind::DslDefinition => {
                let trimmed = text.trim();
                if !trimmed.is_empty() {
                    out.push(ArtifactPayload::DslDefinition(trimmed.to_string()));
                }
            }
            ArtifactKind::ArchitectureOption => {
                out.extend(split_architecture_options(text).into_iter().map(ArtifactPayload::ArchitectureOption))
            }
        }
    }
    out
}
