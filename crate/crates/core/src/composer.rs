//! Checks pipelines against a catalog and compiles them into prompt plans.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Classification, PatternDescriptor, ScopeKind};
use crate::extract::ArtifactKind;
use crate::pdl::{has_errors, Diagnostic, PipelineSpec};
use crate::renderer::{estimate_tokens, render};

pub const DEFAULT_TERMINATOR: &str = "/done";

/// Patterns that need earlier context (a provider step or a context ref).
pub const CONTEXT_CONSUMERS: [&str; 3] = ["api-simulator", "requirements-simulator", "change-request-simulation"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLoop {
    pub user_prompt_hint: String,
    /// Contains exactly one `{input}`.
    pub input_wrapper: String,
    pub terminator: String,
}

impl InteractionLoop {
    pub fn wrap(&self, input: &str) -> String {
        self.input_wrapper.replacen("{input}", input, 1)
    }

    pub fn is_terminator(&self, input: &str) -> bool {
        input.trim() == self.terminator
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptUnit {
    pub pattern_id: String,
    pub kind: ScopeKind,
    pub text: String,
    pub expected_artifacts: Vec<ArtifactKind>,
    /// Present iff `kind` is interactive.
    #[serde(rename = "loop", default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<InteractionLoop>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptPlan {
    pub units: Vec<PromptUnit>,
    pub session_rules: Vec<String>,
    pub token_budget: Option<usize>,
}

impl PromptPlan {
    pub fn total_tokens(&self) -> usize {
        self.units.iter().map(|u| estimate_tokens(&u.text).count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("pipeline has {} error(s)", .0.iter().filter(|d| d.is_error()).count())]
    Rejected(Vec<Diagnostic>),
}

fn interaction_for(p: &PatternDescriptor) -> InteractionLoop {
    let (hint, wrapper) = match p.id.as_str() {
        "requirements-simulator" => ("Describe something you want to do in the system", "I want to do {input}"),
        "api-simulator" => ("Type an HTTP request, e.g. GET /users HTTP/1.1", "{input}"),
        _ => ("Enter your next message", "{input}"),
    };
    InteractionLoop {
        user_prompt_hint: hint.into(),
        input_wrapper: wrapper.into(),
        terminator: DEFAULT_TERMINATOR.into(),
    }
}

/// Which artifact kinds replies to a pattern are expected to contain.
pub fn expected_artifacts_for(p: &PatternDescriptor) -> Vec<ArtifactKind> {
    use ArtifactKind::*;
    match p.id.as_str() {
        "requirements-simulator" => vec![UserStory, ImagePrompt],
        "specification-disambiguation" | "hidden-assumptions" | "change-request-simulation" => vec![AssumptionList],
        "api-generator" => vec![OpenapiSpec],
        "api-simulator" => vec![HttpResponse],
        "fewshot-example-generator" => vec![CodeBlock],
        "dsl-creation" => vec![DslDefinition, CodeBlock],
        "architectural-possibilities" => vec![ArchitectureOption],
        "visualization-generator" => vec![ImagePrompt],
        _ => match p.classification {
            Classification::CodeQuality | Classification::Refactoring => vec![CodeBlock],
            _ => Vec::new(),
        },
    }
}

/// Semantic diagnostics for a pipeline.
pub fn check(pipeline: &PipelineSpec, catalog: &Catalog) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if pipeline.steps.is_empty() {
        diags.push(Diagnostic::error("empty-pipeline", format!("pipeline `{}` has no steps", pipeline.name), None));
    }
    let mut previous: Option<&PatternDescriptor> = None;
    let mut seen: Vec<&PatternDescriptor> = Vec::new();
    for step in &pipeline.steps {
        let span = step.span.clone();
        let Ok(p) = catalog.get(&step.pattern_id) else {
            diags.push(Diagnostic::error("unknown-pattern", format!("unknown pattern `{}`", step.pattern_id), span));
            previous = None;
            continue;
        };
        for slot in &p.slots {
            match step.bindings.get(&slot.name) {
                None if slot.required => diags.push(Diagnostic::error(
                    "missing-required-slot",
                    format!("`{}` requires slot `{}`", p.id, slot.name),
                    span.clone(),
                )),
                Some(v) if !slot.kind.accepts(v) => diags.push(Diagnostic::error(
                    "bad-slot-value",
                    format!("slot `{}` of `{}` expects a positive integer, got `{v}`", slot.name, p.id),
                    span.clone(),
                )),
                Some(v) if slot.required && v.trim().is_empty() => diags.push(Diagnostic::error(
                    "bad-slot-value",
                    format!("slot `{}` of `{}` must not be empty", slot.name, p.id),
                    span.clone(),
                )),
                _ => {}
            }
        }
        for key in step.bindings.keys() {
            if p.slot(key).is_none() {
                diags.push(Diagnostic::warning(
                    "unknown-slot",
                    format!("`{}` has no slot `{key}`; binding ignored", p.id),
                    span.clone(),
                ));
            }
        }
        if let Some(prev) = previous {
            if !prev.has_edge_to(&p.id) {
                diags.push(Diagnostic::warning(
                    "no-composition-edge",
                    format!("the catalog has no composition edge {} -> {}", prev.id, p.id),
                    span.clone(),
                ));
            }
        }
        if CONTEXT_CONSUMERS.contains(&p.id.as_str())
            && pipeline.context_refs.is_empty()
            && !seen.iter().any(|up| up.has_edge_to(&p.id))
        {
            diags.push(Diagnostic::warning(
                "missing-context",
                format!("`{}` needs earlier context but no upstream step or context ref provides it", p.id),
                span.clone(),
            ));
        }
        seen.push(p);
        previous = Some(p);
    }
    diags
}

fn context_preamble(pipeline: &PipelineSpec, context: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for name in &pipeline.context_refs {
        if let Some(text) = context.get(name).filter(|t| !t.trim().is_empty()) {
            let _ = write!(out, "{}:\n{}\n\n", name.replace(['-', '_'], " "), text.trim_end());
        }
    }
    out
}

/// Renders one pattern with defaults applied under `bindings`.
pub fn render_pattern(
    p: &PatternDescriptor,
    bindings: &BTreeMap<String, String>,
) -> Result<String, crate::renderer::RenderError> {
    let mut full = BTreeMap::new();
    for slot in &p.slots {
        if let Some(v) = bindings.get(&slot.name).or(slot.default.as_ref()) {
            full.insert(slot.name.clone(), v.clone());
        }
    }
    render(&p.default_prompt, &full)
}

/// Compiles a checked pipeline. `context` maps context-ref names to text,
/// which is placed ahead of the first unit.
pub fn compile(
    pipeline: &PipelineSpec,
    catalog: &Catalog,
    context: &BTreeMap<String, String>,
) -> Result<PromptPlan, CompileError> {
    let diags = check(pipeline, catalog);
    if has_errors(&diags) {
        return Err(CompileError::Rejected(diags));
    }
    let mut plan = PromptPlan::default();
    for (i, step) in pipeline.steps.iter().enumerate() {
        let p = catalog.get(&step.pattern_id).expect("checked");
        let rendered = render_pattern(p, &step.bindings).map_err(|e| {
            CompileError::Rejected(vec![Diagnostic::error("unbound-placeholder", e.to_string(), step.span.clone())])
        })?;
        if p.scope_kind == ScopeKind::Session {
            plan.session_rules.push(rendered.clone());
        }
        let text = if i == 0 { format!("{}{rendered}", context_preamble(pipeline, context)) } else { rendered };
        plan.units.push(PromptUnit {
            pattern_id: p.id.clone(),
            kind: p.scope_kind,
            text,
            expected_artifacts: expected_artifacts_for(p),
            interaction: (p.scope_kind == ScopeKind::Interactive).then(|| interaction_for(p)),
        });
    }
    Ok(plan)
}

/// Human-readable listing of a plan.
pub fn explain(plan: &PromptPlan) -> String {
    let mut out = String::new();
    let budget = plan.token_budget.map_or("none".to_string(), |b| b.to_string());
    let _ = writeln!(
        out,
        "plan: {} unit(s), {} session rule(s), ~{} tokens, budget: {budget}",
        plan.units.len(),
        plan.session_rules.len(),
        plan.total_tokens()
    );
    let mut running = 0;
    let mut flagged = false;
    for (i, unit) in plan.units.iter().enumerate() {
        let tokens = estimate_tokens(&unit.text).count;
        running += tokens;
        let kinds: Vec<&str> = unit.expected_artifacts.iter().map(|k| k.as_str()).collect();
        let _ = write!(out, "{}. [{}] {} (~{tokens} tokens)", i + 1, unit.kind, unit.pattern_id);
        if !kinds.is_empty() {
            let _ = write!(out, " expects: {}", kinds.join(", "));
        }
        if let Some(b) = plan.token_budget {
            if running > b && !flagged {
                flagged = true;
                let _ = write!(out, "  <-- OVER BUDGET (running total {running} > {b})");
            }
        }
        out.push('\n');
        if let Some(l) = &unit.interaction {
            let _ = writeln!(out, "   loop: wraps input as {:?}, ends on {}", l.input_wrapper, l.terminator);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::load_builtin_catalog;
    use crate::pdl::{PipelineStep, Severity};

    fn codes(d: &[Diagnostic]) -> Vec<(&str, Severity)> {
        d.iter().map(|d| (d.code.as_str(), d.severity)).collect()
    }

    fn pipe(steps: Vec<PipelineStep>) -> PipelineSpec {
        PipelineSpec::new("t", steps)
    }

    #[test]
    fn generator_then_simulator_is_clean() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("api-generator"), PipelineStep::new("api-simulator")]);
        assert_eq!(check(&p, &cat), vec![]);
    }

    #[test]
    fn lone_simulator_warns() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("api-simulator")]);
        assert_eq!(codes(&check(&p, &cat)), [("missing-context", Severity::Warning)]);
        let p = p.with_context("spec");
        assert_eq!(check(&p, &cat), vec![]);
    }

    #[test]
    fn unknown_pattern_and_slots() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("foo")]);
        assert_eq!(codes(&check(&p, &cat)), [("unknown-pattern", Severity::Error)]);
        let p = pipe(vec![PipelineStep::new("principled-code")]);
        assert_eq!(codes(&check(&p, &cat)), [("missing-required-slot", Severity::Error)]);
        let p = pipe(vec![PipelineStep::new("fewshot-example-generator").bind("count", "0")]);
        assert_eq!(codes(&check(&p, &cat)), [("bad-slot-value", Severity::Error)]);
        let p = pipe(vec![PipelineStep::new("api-generator").bind("colour", "red")]);
        assert_eq!(codes(&check(&p, &cat)), [("unknown-slot", Severity::Warning)]);
    }

    #[test]
    fn missing_edge_warns() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![
            PipelineStep::new("principled-code").bind("principle", "KISS"),
            PipelineStep::new("api-generator"),
        ]);
        assert_eq!(codes(&check(&p, &cat)), [("no-composition-edge", Severity::Warning)]);
    }

    #[test]
    fn compile_principled_code() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("principled-code").bind("principle", "SOLID design principles")]);
        let plan = compile(&p, &cat, &BTreeMap::new()).unwrap();
        assert_eq!(plan.units.len(), 1);
        assert_eq!(plan.units[0].kind, ScopeKind::Session);
        assert!(plan.units[0].text.contains("make sure it adheres to SOLID design principles"));
        assert_eq!(plan.session_rules, vec![plan.units[0].text.clone()]);
    }

    #[test]
    fn compile_requirements_simulator() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("requirements-simulator").bind("format", "user stories")])
            .with_context("requirements");
        let ctx = BTreeMap::from([("requirements".to_string(), "1. Users can post prompts.".to_string())]);
        let plan = compile(&p, &cat, &ctx).unwrap();
        let unit = &plan.units[0];
        assert_eq!(unit.kind, ScopeKind::Interactive);
        let l = unit.interaction.as_ref().unwrap();
        assert_eq!(l.input_wrapper, "I want to do {input}");
        assert_eq!(l.wrap("delete my prompt"), "I want to do delete my prompt");
        assert!(unit.text.starts_with("requirements:\n1. Users can post prompts.\n\nNow, I want you to act"));
    }

    #[test]
    fn compile_rejects_errors() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("principled-code")]);
        assert!(matches!(compile(&p, &cat, &BTreeMap::new()), Err(CompileError::Rejected(_))));
    }

    #[test]
    fn optional_segments_follow_bindings() {
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("fewshot-example-generator")]);
        let plan = compile(&p, &cat, &BTreeMap::new()).unwrap();
        assert!(!plan.units[0].text.contains("related to"));
        assert!(!plan.units[0].text.contains("public interfaces"));
        let p = pipe(vec![PipelineStep::new("fewshot-example-generator").bind("focus", "login")]);
        let plan = compile(&p, &cat, &BTreeMap::new()).unwrap();
        assert!(plan.units[0].text.contains("usage of this code related to login."));
    }

    #[test]
    fn explain_listing() {
        assert_eq!(explain(&PromptPlan::default()).lines().count(), 1);
        let cat = load_builtin_catalog();
        let p = pipe(vec![PipelineStep::new("api-generator"), PipelineStep::new("api-simulator")]);
        let mut plan = compile(&p, &cat, &BTreeMap::new()).unwrap();
        let text = explain(&plan);
        assert!(text.contains("1. [one-shot] api-generator"));
        assert!(text.contains("2. [interactive] api-simulator"));
        assert!(!text.contains("OVER BUDGET"));
        let first = estimate_tokens(&plan.units[0].text).count;
        plan.token_budget = Some(first);
        let text = explain(&plan);
        let flagged: Vec<_> = text.lines().filter(|l| l.contains("OVER BUDGET")).collect();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].starts_with("2. "));
    }
}
