//! Drivers for requirements, API and architecture patterns.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{require_text, Ctx, DriverError, DriverReport, Entry};
use crate::catalog::load_builtin_catalog;
use crate::composer::render_pattern;
use crate::extract::{
    extract_openapi, list_items, parse_http_text, ArtifactKind, ArtifactPayload, FencedBlock, HttpMessage,
    OpenApiDocument,
};
use crate::pdl::PipelineStep;
use crate::renderer::render;
use crate::session::Session;

const SCREEN_VARIANT: &str = "Now, I want you to act as this system in a text-based simulator of the system. \
Use the requirements to guide your behavior. You will describe the user interface for the system, based on the \
requirements, and what I can do on each screen. I am going to say, I want to do X, and you will tell me if X is \
possible given the requirements and the current screen. If X is possible, provide a step-by-step set of \
instructions how I would accomplish it and provide additional details that would help implement the requirement. \
If I can't do X based on the requirements, write the missing requirements to make it possible as {format}. \
Whenever the state of the user interface changes, update the user on what they are looking at.\n\n\
Tell me what I am looking at in the system and ask me what I want to do.";

// Formatting requests appended after the pattern text, separated by a
// blank line, so the pattern wording itself stays intact.
const STORIES_CLAUSE: &str =
    "Whenever you write missing requirements, give them as a markdown list with one user story per item, each starting with \"As a\".";
const FINDINGS_CLAUSE: &str =
    "Answer as a markdown list with one item per issue. In each item, quote the requirement, \
describe the issue, and suggest more precise wording.";
const SPEC_CLAUSE: &str = "Return the complete specification in a single fenced code block.";
const HTTP_CLAUSE: &str =
    "Write each response as a raw HTTP response (status line, headers, blank line, body) inside a fenced code block.";
const EXAMPLES_CLAUSE: &str = "Put each example in its own fenced code block.";
const DSL_CLAUSE: &str = "Put each example written in the language in its own fenced code block.";
const ARCH_CLAUSE: &str = "Start each architecture with a numbered markdown heading, such as \"## 1. Name\".";
const IMPACT_CLAUSE: &str = "Answer as a markdown list with one item per affected element.";

fn with_clause(text: &str, clause: &str) -> String {
    format!("{text}\n\n{clause}")
}

fn fenced(body: &str) -> String {
    let block = FencedBlock {
        language_tag: String::new(),
        body: body.strip_suffix('\n').unwrap_or(body).to_string(),
        filename_hint: None,
        unterminated: false,
    };
    block.to_markdown().trim_end().to_string()
}

fn extension_for(language: &str) -> &'static str {
    match language.to_ascii_lowercase().as_str() {
        "python" | "py" => "py",
        "rust" | "rs" => "rs",
        "javascript" | "js" => "js",
        "typescript" | "ts" => "ts",
        "java" => "java",
        "go" => "go",
        "ruby" | "rb" => "rb",
        "yaml" | "yml" => "yaml",
        "json" => "json",
        "bash" | "sh" | "shell" => "sh",
        "sql" => "sql",
        "html" => "html",
        "markdown" | "md" => "md",
        _ => "txt",
    }
}

fn number_word(n: u32) -> String {
    const WORDS: [&str; 11] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    WORDS.get(n as usize).map_or_else(|| n.to_string(), |w| w.to_string())
}

fn bullet_list(items: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    items.into_iter().map(|i| format!("- {}\n", i.as_ref())).collect()
}

fn code_blocks_of(session: &Session, from_turn: usize) -> Vec<FencedBlock> {
    session
        .artifacts
        .iter()
        .filter(|a| a.origin_turn >= from_turn)
        .filter_map(|a| match &a.payload {
            ArtifactPayload::CodeBlock(b) => Some(b.clone()),
            _ => None,
        })
        .collect()
}

fn write_blocks(ctx: &mut Ctx, dir: &str, stem: &str, blocks: &[FencedBlock]) -> Result<(), DriverError> {
    for (i, b) in blocks.iter().enumerate() {
        let name = format!("{dir}/{stem}-{:02}.{}", i + 1, extension_for(&b.language_tag));
        let mut body = b.body.clone();
        body.push('\n');
        ctx.write(&name, ArtifactKind::CodeBlock.as_str(), &body)?;
    }
    Ok(())
}

pub(super) fn requirements_simulate(
    ctx: &mut Ctx,
    requirements: &str,
    format: Option<&str>,
    screen: bool,
    viz: bool,
) -> Result<DriverReport, DriverError> {
    require_text(requirements, "requirements")?;
    let catalog = load_builtin_catalog();
    let pattern = catalog.get("requirements-simulator").expect("built-in");
    let mut step = PipelineStep::new("requirements-simulator");
    if let Some(f) = format {
        step = step.bind("format", f);
    }
    let format = format.unwrap_or("user stories");
    let mut plan = ctx.plan(vec![step.clone()], &[("requirements", requirements)])?;
    let unit = &mut plan.units[0];
    if screen {
        let standard = render_pattern(pattern, &step.bindings).expect("checked");
        let bindings = BTreeMap::from([("format".to_string(), format.to_string())]);
        let variant = render(SCREEN_VARIANT, &bindings).expect("format bound");
        unit.text = unit.text.replacen(&standard, &variant, 1);
    }
    if viz {
        let viz_text = &catalog.get("visualization-generator").expect("built-in").default_prompt;
        unit.text = format!("{} {viz_text}", unit.text);
        if !unit.expected_artifacts.contains(&ArtifactKind::ImagePrompt) {
            unit.expected_artifacts.push(ArtifactKind::ImagePrompt);
        }
    }
    if format.eq_ignore_ascii_case("user stories") {
        unit.text = with_clause(&unit.text, STORIES_CLAUSE);
    }
    if !unit.expected_artifacts.contains(&ArtifactKind::UserStory) {
        unit.expected_artifacts.insert(0, ArtifactKind::UserStory);
    }

    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let setup_reply = 1;
    let mut stories = Vec::new();
    let mut images = Vec::new();
    for a in &session.artifacts {
        match &a.payload {
            ArtifactPayload::UserStory(s) if a.origin_turn > setup_reply => stories.push(s.clone()),
            ArtifactPayload::ImagePrompt(p) => images.push(p.clone()),
            _ => {}
        }
    }
    let mut doc = requirements.trim_end().to_string();
    doc.push('\n');
    if !stories.is_empty() {
        doc.push_str("\n## New requirements\n\n");
        doc.push_str(&bullet_list(&stories));
    }
    ctx.write("requirements-new.md", "requirements", &doc)?;
    if !images.is_empty() {
        ctx.write("image-prompts.md", ArtifactKind::ImagePrompt.as_str(), &bullet_list(&images))?;
    }
    let human_turns = session.turns.iter().filter(|t| t.source == crate::session::TurnSource::Human).count();
    let body = format!(
        "## Summary\n\n- tasks explored: {human_turns}\n- new user stories: {}\n- image prompts: {}\n\n## New user stories\n\n{}",
        stories.len(),
        images.len(),
        if stories.is_empty() { "none\n".to_string() } else { bullet_list(&stories) }
    );
    ctx.finish(&session, &body, None)
}

pub(super) fn spec_disambiguate(ctx: &mut Ctx, spec: &str) -> Result<DriverReport, DriverError> {
    require_text(spec, "specification")?;
    let mut plan = ctx.plan(vec![PipelineStep::new("specification-disambiguation")], &[])?;
    let unit = &mut plan.units[0];
    unit.text = with_clause(&format!("{}\n\n{}", unit.text, spec.trim()), FINDINGS_CLAUSE);
    unit.expected_artifacts = vec![ArtifactKind::AssumptionList];
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let reply = session.last_reply().unwrap_or("");
    let findings: Vec<&str> = list_items(reply).into_iter().map(|i| i.text).collect();
    ctx.write("ambiguities.md", ArtifactKind::AssumptionList.as_str(), &bullet_list(&findings))?;
    let body = format!("## Findings ({})\n\n{}", findings.len(), bullet_list(&findings));
    ctx.finish(&session, &body, None)
}

pub(super) fn api_generate(
    ctx: &mut Ctx,
    requirements: &str,
    format: Option<&str>,
) -> Result<DriverReport, DriverError> {
    require_text(requirements, "requirements")?;
    let mut step = PipelineStep::new("api-generator");
    if let Some(f) = format {
        step = step.bind("format", f);
    }
    let mut plan = ctx.plan(vec![step], &[("requirements", requirements)])?;
    let unit = &mut plan.units[0];
    unit.text = with_clause(&unit.text, SPEC_CLAUSE);
    unit.expected_artifacts = vec![ArtifactKind::OpenapiSpec];
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let doc = session.artifacts.iter().find_map(|a| match &a.payload {
        ArtifactPayload::OpenapiSpec(d) => Some(d.clone()),
        _ => None,
    });
    let body = match doc {
        Some(d) => {
            ctx.write("openapi.yaml", ArtifactKind::OpenapiSpec.as_str(), &d.to_yaml())?;
            format!("## Specification\n\n{} path(s):\n\n{}", d.paths().len(), bullet_list(d.paths()))
        }
        None => {
            ctx.write("openapi-raw.md", "raw-reply", session.last_reply().unwrap_or(""))?;
            ctx.warn("no-spec-extracted", "the reply did not contain a document with `openapi` and `paths`");
            "## Specification\n\nnone extracted; the raw reply was saved instead\n".to_string()
        }
    };
    ctx.finish(&session, &body, None)
}

/// Whether a concrete request path matches a templated spec path such as
/// `/users/{id}`.
pub(crate) fn path_matches(template: &str, path: &str) -> bool {
    let t: Vec<&str> = template.trim_end_matches('/').split('/').collect();
    let p: Vec<&str> = path.trim_end_matches('/').split('/').collect();
    t.len() == p.len()
        && t.iter().zip(&p).all(|(a, b)| a == b || (a.starts_with('{') && a.ends_with('}') && !b.is_empty()))
}

fn is_scenario(entry: &str) -> bool {
    let lower = entry.trim_start().to_ascii_lowercase();
    lower.starts_with("assume") || lower.starts_with("for the following")
}

pub(super) fn api_simulate(ctx: &mut Ctx, spec: &str, scenario: Option<&str>) -> Result<DriverReport, DriverError> {
    require_text(spec, "API specification")?;
    let doc = extract_openapi(spec).filter(|d| !d.paths().is_empty()).ok_or(DriverError::NoPaths)?;
    let mut plan = ctx.plan(vec![PipelineStep::new("api-simulator")], &[("specification", spec.trim())])?;
    let unit = &mut plan.units[0];
    if let Some(s) = scenario.filter(|s| !s.trim().is_empty()) {
        unit.text = format!("{}\n\n{}", unit.text, s.trim());
    }
    unit.text = with_clause(&unit.text, HTTP_CLAUSE);
    unit.expected_artifacts = vec![ArtifactKind::HttpResponse];
    let session = ctx.converse(plan, |ctx, entry| check_request(ctx, &doc, entry))?;
    let mut lines = Vec::new();
    for a in &session.artifacts {
        if let ArtifactPayload::HttpResponse(r) = &a.payload {
            lines.push(format!("turn {}: {} {}", a.origin_turn, r.status, r.reason));
        }
    }
    ctx.write("responses.md", ArtifactKind::HttpResponse.as_str(), &bullet_list(&lines))?;
    let body = format!("## Responses ({})\n\n{}", lines.len(), bullet_list(&lines));
    ctx.finish(&session, &body, None)
}

fn check_request(ctx: &mut Ctx, doc: &OpenApiDocument, entry: &str) -> Entry {
    if is_scenario(entry) {
        return Entry::Send;
    }
    match parse_http_text(entry) {
        Ok(HttpMessage::Request(r)) => {
            if !doc.paths().iter().any(|p| path_matches(p, r.route())) {
                let msg = format!("{} is not a path in the specification", r.route());
                ctx.input.notice(&msg);
                ctx.warn("path-not-in-spec", msg);
            }
            Entry::Send
        }
        Ok(HttpMessage::Response(_)) => {
            let msg = "expected an HTTP request, found a response".to_string();
            ctx.input.notice(&msg);
            ctx.warn("http-parse-error", msg);
            Entry::Skip
        }
        Err(e) => {
            let msg = format!("not sent: {e}");
            ctx.input.notice(&msg);
            ctx.warn("http-parse-error", msg);
            Entry::Skip
        }
    }
}

pub(super) fn fewshot_examples(
    ctx: &mut Ctx,
    source: &str,
    n: u32,
    focus: Option<&str>,
    interfaces: Option<&str>,
) -> Result<DriverReport, DriverError> {
    if n == 0 {
        return Err(DriverError::Precondition("the number of examples must be at least 1".into()));
    }
    require_text(source, "source code")?;
    let mut step = PipelineStep::new("fewshot-example-generator").bind("count", &n.to_string());
    if let Some(f) = focus {
        step = step.bind("focus", f);
    }
    if let Some(i) = interfaces {
        step = step.bind("interfaces", i);
    }
    let mut plan = ctx.plan(vec![step], &[])?;
    let unit = &mut plan.units[0];
    unit.text = with_clause(&format!("{}\n\n{}", unit.text, fenced(source)), EXAMPLES_CLAUSE);
    unit.expected_artifacts = vec![ArtifactKind::CodeBlock];
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let blocks = code_blocks_of(&session, 0);
    write_blocks(ctx, "examples", "example", &blocks)?;
    if blocks.len() != n as usize {
        ctx.warn("block-count-mismatch", format!("asked for {n} examples, got {} code blocks", blocks.len()));
    }
    let body = format!("## Examples\n\n- requested: {n}\n- returned: {}\n", blocks.len());
    ctx.finish(&session, &body, None)
}

pub(super) fn dsl_create(
    ctx: &mut Ctx,
    domain: &str,
    syntax: Option<&str>,
    linked: &[String],
) -> Result<DriverReport, DriverError> {
    if domain.trim().is_empty() {
        return Err(DriverError::Precondition("the domain must not be empty".into()));
    }
    let mut step = PipelineStep::new("dsl-creation").bind("domain", domain.trim());
    if let Some(s) = syntax.filter(|s| !s.trim().is_empty()) {
        step = step.bind("syntax", s.trim());
    }
    let mut plan = ctx.plan(vec![step], &[])?;
    let unit = &mut plan.units[0];
    if !linked.is_empty() {
        unit.text = format!(
            "{} Use identifiers that stay consistent with the {} language{} so the same concept can be traced across them.",
            unit.text,
            linked.join(", "),
            if linked.len() == 1 { "" } else { "s" }
        );
    }
    unit.text = with_clause(&unit.text, DSL_CLAUSE);
    unit.expected_artifacts = vec![ArtifactKind::DslDefinition, ArtifactKind::CodeBlock];
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let reply = session.last_reply().unwrap_or("").trim().to_string();
    ctx.write("dsl.md", ArtifactKind::DslDefinition.as_str(), &format!("{reply}\n"))?;
    let blocks = code_blocks_of(&session, 0);
    write_blocks(ctx, "dsl-examples", "example", &blocks)?;
    let body = format!("## Language\n\n- domain: {}\n- example blocks: {}\n", domain.trim(), blocks.len());
    ctx.finish(&session, &body, None)
}

pub(super) fn arch_possibilities(
    ctx: &mut Ctx,
    description: &str,
    n: u32,
    aspect: Option<&str>,
    constraints: Option<&str>,
) -> Result<DriverReport, DriverError> {
    if n < 2 {
        return Err(DriverError::Precondition("ask for at least 2 architectures".into()));
    }
    require_text(description, "system description")?;
    let mut step = PipelineStep::new("architectural-possibilities")
        .bind("system", description.trim())
        .bind("count", &number_word(n));
    if let Some(a) = aspect {
        step = step.bind("aspect", a);
    }
    if let Some(c) = constraints.filter(|c| !c.trim().is_empty()) {
        step = step.bind("constraints", c.trim());
    }
    let mut plan = ctx.plan(vec![step], &[])?;
    let unit = &mut plan.units[0];
    unit.text = with_clause(&unit.text, ARCH_CLAUSE);
    unit.expected_artifacts = vec![ArtifactKind::ArchitectureOption];
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let options: Vec<_> = session
        .artifacts
        .iter()
        .filter_map(|a| match &a.payload {
            ArtifactPayload::ArchitectureOption(o) => Some(o.clone()),
            _ => None,
        })
        .collect();
    for (i, o) in options.iter().enumerate() {
        let text = format!("# {}\n\n{}\n", o.title, o.body);
        ctx.write(&format!("architectures/option-{}.md", i + 1), ArtifactKind::ArchitectureOption.as_str(), &text)?;
    }
    if options.len() != n as usize {
        ctx.warn("option-count-mismatch", format!("asked for {n} architectures, found {}", options.len()));
    }
    let body = format!("## Architectures ({})\n\n{}", options.len(), bullet_list(options.iter().map(|o| &o.title)));
    ctx.finish(&session, &body, None)
}

/// "functions and files" reads "functions and which files" after "List which".
pub(crate) fn list_which(aspect: &str) -> String {
    match aspect.split_once(" and ") {
        Some((a, b)) if !b.trim_start().starts_with("which ") => format!("{a} and which {b}"),
        _ => aspect.to_string(),
    }
}

/// The part of `context` about `focus`: matching paths of an API document,
/// or else the paragraphs that mention it.
pub(crate) fn narrow_context(context: &str, focus: &str) -> String {
    let needle = focus.to_lowercase();
    if let Some(mut doc) = extract_openapi(context) {
        if let Some(Value::Object(paths)) = doc.document.get_mut("paths") {
            paths.retain(|k, v| k.to_lowercase().contains(&needle) || v.to_string().to_lowercase().contains(&needle));
            if paths.is_empty() {
                return String::new();
            }
            return doc.to_yaml();
        }
    }
    context.split("\n\n").filter(|p| p.to_lowercase().contains(&needle)).collect::<Vec<_>>().join("\n\n")
}

pub(super) fn change_simulate(
    ctx: &mut Ctx,
    context: &str,
    change: &str,
    aspect: Option<&str>,
    zoom: Option<&str>,
) -> Result<DriverReport, DriverError> {
    if context.trim().is_empty() {
        return Err(DriverError::MissingContext);
    }
    if change.trim().is_empty() {
        return Err(DriverError::Precondition("describe the change to simulate".into()));
    }
    let architecture = if extract_openapi(context).is_some() {
        "the OpenAPI specification above"
    } else {
        "the design described above"
    };
    let step = |aspect: Option<&str>| {
        let mut s = PipelineStep::new("change-request-simulation")
            .bind("architecture", architecture)
            .bind("change", change.trim().trim_end_matches('.'));
        if let Some(a) = aspect {
            s = s.bind("aspect", &list_which(a));
        }
        s
    };
    let mut plan = ctx.plan(vec![step(aspect)], &[("system", context.trim())])?;
    plan.units[0].text = with_clause(&plan.units[0].text, IMPACT_CLAUSE);
    plan.units[0].expected_artifacts = vec![ArtifactKind::AssumptionList];
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let impacts: Vec<String> =
        list_items(session.last_reply().unwrap_or("")).into_iter().map(|i| i.text.to_string()).collect();
    ctx.write("impact.md", ArtifactKind::AssumptionList.as_str(), &bullet_list(&impacts))?;
    let mut body = format!("## Impact ({})\n\n{}", impacts.len(), bullet_list(&impacts));

    if let Some(focus) = zoom.filter(|z| !z.trim().is_empty()) {
        let mut narrowed = narrow_context(context, focus.trim());
        if narrowed.trim().is_empty() {
            ctx.warn("zoom-context-empty", format!("nothing in the context mentions {focus}; using all of it"));
            narrowed = context.trim().to_string();
        }
        let mut plan = ctx.plan(vec![step(aspect)], &[("system", narrowed.trim())])?;
        let detail = format!("Focus only on {} and describe the changes it needs in more detail.", focus.trim());
        plan.units[0].text = with_clause(&format!("{}\n\n{detail}", plan.units[0].text), IMPACT_CLAUSE);
        plan.units[0].expected_artifacts = vec![ArtifactKind::AssumptionList];
        let zoomed = ctx.converse(plan, |_, _| Entry::Send)?;
        ctx.save_transcript(&zoomed, "transcript-zoom.json")?;
        let detail: Vec<String> =
            list_items(zoomed.last_reply().unwrap_or("")).into_iter().map(|i| i.text.to_string()).collect();
        ctx.write("impact-zoom.md", ArtifactKind::AssumptionList.as_str(), &bullet_list(&detail))?;
        body.push_str(&format!("\n## Detail for {} ({})\n\n{}", focus.trim(), detail.len(), bullet_list(&detail)));
    }
    ctx.finish(&session, &body, None)
}
