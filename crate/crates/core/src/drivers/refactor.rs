//! Drivers for code-quality and refactoring patterns. Each sends the input
//! files with the pattern prompt, maps returned code blocks back to files
//! and writes proposals plus unified diffs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{code_listing, one_shot, safe_relative, Ctx, DriverError, DriverReport, Entry, FileSet, RefactorJob};
use crate::catalog::ScopeKind;
use crate::composer::PromptPlan;
use crate::extract::{extract_assumptions, extract_fenced_blocks, ArtifactKind};
use crate::pdl::PipelineStep;
use crate::session::Session;

const FILES_CLAUSE: &str = "Return every changed or new file in full, each in its own fenced code block whose first \
line is a comment naming the file, such as `# file: path/to/module.py`.";
const ASSUMPTIONS_CLAUSE: &str = "Answer as a markdown list with one assumption per item.";
const DIFFICULTY_CLAUSE: &str = "End each item with \" - difficulty:\" followed by easy, medium, or hard.";

const TIERS: (&str, &str) =
    ("business logic", "data access code, following a layered architecture of business and data tiers");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum AssumptionMode {
    List,
    Difficulty,
    Migration { from: String, to: String },
}

fn require_files(files: &FileSet) -> Result<(), DriverError> {
    if files.is_empty() {
        Err(DriverError::Precondition("at least one input file is required".into()))
    } else {
        Ok(())
    }
}

fn request_text(lead: &str, files: &FileSet) -> String {
    format!("{lead}\n\n{}\n{FILES_CLAUSE}", code_listing(files))
}

fn match_newline(original: Option<&str>, mut content: String) -> String {
    let wants_newline = original.is_none_or(|o| o.ends_with('\n') || o.is_empty());
    if wants_newline && !content.is_empty() && !content.ends_with('\n') {
        content.push('\n');
    } else if !wants_newline {
        while content.ends_with('\n') {
            content.pop();
        }
    }
    content
}

/// Assigns returned code blocks to files: by `file:` hint, or, for a single
/// input file and no hints at all, the first block.
fn proposed_files(ctx: &mut Ctx, inputs: &FileSet, reply: &str) -> Result<FileSet, DriverError> {
    let blocks = extract_fenced_blocks(reply);
    if blocks.is_empty() {
        return Err(DriverError::NoCodeReturned);
    }
    let mut proposed = FileSet::new();
    let mut unmapped = 0;
    for b in &blocks {
        match &b.filename_hint {
            Some(hint) => match safe_relative(hint) {
                Some(_) => {
                    let path = hint.trim_start_matches("./").to_string();
                    let content =
                        match_newline(inputs.get(&path).map(String::as_str), b.body_without_hint().to_string());
                    proposed.insert(path, content);
                }
                None => ctx.warn("unsafe-path", format!("ignored a block for `{hint}`, which leaves the workdir")),
            },
            None => unmapped += 1,
        }
    }
    if proposed.is_empty() && inputs.len() == 1 && unmapped > 0 {
        let (path, original) = inputs.iter().next().expect("one input");
        let body = blocks.iter().find(|b| b.filename_hint.is_none()).expect("unmapped block").body.clone();
        proposed.insert(path.clone(), match_newline(Some(original), body));
        unmapped -= 1;
    }
    if unmapped > 0 {
        ctx.warn("unmapped-block", format!("{unmapped} code block(s) named no file and were skipped"));
    }
    if proposed.is_empty() {
        return Err(DriverError::NoCodeReturned);
    }
    Ok(proposed)
}

/// Runs the plan, turns the last reply into a verified job and writes
/// `proposed/` and `patch/` outputs.
fn run_refactor(
    ctx: &mut Ctx,
    plan: PromptPlan,
    inputs: &FileSet,
    parameters: BTreeMap<String, String>,
) -> Result<DriverReport, DriverError> {
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let proposed = match proposed_files(ctx, inputs, session.last_reply().unwrap_or("")) {
        Ok(p) => p,
        Err(e) => {
            ctx.save_transcript(&session, "transcript.json")?;
            return Err(e);
        }
    };
    let job = RefactorJob::new(inputs.clone(), parameters, proposed);
    job.verify()?;
    let mut changed = Vec::new();
    for (path, content) in &job.proposed {
        let diff = &job.diffs[path];
        if diff.is_empty() {
            continue;
        }
        ctx.write(&format!("proposed/{path}"), "proposed-file", content)?;
        ctx.write(&format!("patch/{path}.diff"), "patch", diff)?;
        changed.push(path.clone());
    }
    let mut body = format!("## Proposed changes ({} file(s))\n\n", changed.len());
    for p in &changed {
        let tag = if job.inputs.contains_key(p) { "modified" } else { "new" };
        body.push_str(&format!("- {p} ({tag})\n"));
    }
    body.push_str("\nPatches are not applied. Review them, then run the apply step.\n");
    ctx.finish(&session, &body, Some(job))
}

fn rule_then_request(
    ctx: &Ctx,
    step: PipelineStep,
    request: String,
    separate: bool,
) -> Result<PromptPlan, DriverError> {
    let pattern = step.pattern_id.clone();
    let mut plan = ctx.plan(vec![step], &[])?;
    if separate {
        plan.units.push(one_shot(&pattern, request, vec![ArtifactKind::CodeBlock]));
    } else {
        let unit = &mut plan.units[0];
        unit.text = format!("{}\n\n{request}", unit.text);
        unit.kind = ScopeKind::OneShot;
        unit.expected_artifacts = vec![ArtifactKind::CodeBlock];
        plan.session_rules.clear();
    }
    Ok(plan)
}

fn params(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub(super) fn code_cluster(
    ctx: &mut Ctx,
    files: &FileSet,
    property_y: Option<&str>,
    property_z: Option<&str>,
    tiers: bool,
    session_rule: bool,
) -> Result<DriverReport, DriverError> {
    require_files(files)?;
    let (y, z) = if tiers { (Some(TIERS.0), Some(TIERS.1)) } else { (property_y, property_z) };
    let mut step = PipelineStep::new("code-clustering");
    if let Some(y) = y {
        step = step.bind("property_y", y);
    }
    if let Some(z) = z {
        step = step.bind("property_z", z);
    }
    let parameters = step.bindings.clone();
    let plan =
        rule_then_request(ctx, step, request_text("Refactor the following code accordingly.", files), session_rule)?;
    run_refactor(ctx, plan, files, parameters)
}

pub(super) fn intermediate_abstraction(
    ctx: &mut Ctx,
    files: &FileSet,
    multi_library: bool,
) -> Result<DriverReport, DriverError> {
    require_files(files)?;
    let mut lead = "Refactor the following code accordingly.".to_string();
    if multi_library {
        lead.push_str(
            " Then, as a set of few-shot examples, show how each intermediate abstraction could be backed by an alternate library.",
        );
    }
    let step = PipelineStep::new("intermediate-abstraction");
    let plan = rule_then_request(ctx, step, request_text(&lead, files), true)?;
    let parameters = params(&[("multi_library", if multi_library { "true" } else { "false" })]);
    run_refactor(ctx, plan, files, parameters)
}

pub(super) fn principled_code(ctx: &mut Ctx, principle: &str, files: &FileSet) -> Result<DriverReport, DriverError> {
    let principle = principle.trim();
    if principle.is_empty() {
        return Err(DriverError::Precondition("name the principle the code must follow".into()));
    }
    let step = PipelineStep::new("principled-code").bind("principle", principle);
    if files.is_empty() {
        let plan = ctx.plan(vec![step], &[])?;
        let session: Session = ctx.converse(plan, |_, _| Entry::Send)?;
        let rules: Vec<&str> = session.active_rules.iter().map(|r| r.rule_text.as_str()).collect();
        let body = format!("## Session rule\n\n{}\n", rules.join("\n"));
        return ctx.finish(&session, &body, None);
    }
    let lead = format!("Refactor the following code so that it adheres to {principle}.");
    let plan = rule_then_request(ctx, step, request_text(&lead, files), true)?;
    run_refactor(ctx, plan, files, params(&[("principle", principle)]))
}

pub(super) fn hidden_assumptions(
    ctx: &mut Ctx,
    files: &FileSet,
    mode: &AssumptionMode,
) -> Result<DriverReport, DriverError> {
    require_files(files)?;
    let mut plan = ctx.plan(vec![PipelineStep::new("hidden-assumptions")], &[])?;
    let unit = &mut plan.units[0];
    let mut clause = ASSUMPTIONS_CLAUSE.to_string();
    match mode {
        AssumptionMode::List => unit.text = "List the assumptions that this code makes.".into(),
        AssumptionMode::Difficulty => clause = format!("{clause} {DIFFICULTY_CLAUSE}"),
        AssumptionMode::Migration { from, to } => {
            if from.trim().is_empty() || to.trim().is_empty() {
                return Err(DriverError::Precondition("a migration needs both a source and a target".into()));
            }
            unit.text = format!(
                "List the assumptions in this code that make it difficult to change from a {} database to {}.",
                from.trim(),
                to.trim()
            );
        }
    }
    unit.text = format!("{}\n\n{}\n{clause}", unit.text, code_listing(files));
    unit.expected_artifacts = vec![ArtifactKind::AssumptionList];
    let session = ctx.converse(plan, |_, _| Entry::Send)?;
    let items = extract_assumptions(session.last_reply().unwrap_or(""));
    let mut list = String::new();
    for a in &items {
        match &a.difficulty {
            Some(d) => list.push_str(&format!("- {} (difficulty: {d})\n", a.assumption)),
            None => list.push_str(&format!("- {}\n", a.assumption)),
        }
    }
    ctx.write("assumptions.md", ArtifactKind::AssumptionList.as_str(), &list)?;
    let body = format!("## Assumptions ({})\n\n{list}", items.len());
    ctx.finish(&session, &body, None)
}

pub(super) fn pseudo_refactor(ctx: &mut Ctx, files: &FileSet, pseudocode: &str) -> Result<DriverReport, DriverError> {
    if pseudocode.trim().is_empty() {
        return Err(DriverError::Precondition("the pseudo-code must not be empty".into()));
    }
    require_files(files)?;
    let pseudocode = pseudocode.trim_end_matches(['\n', '\r']);
    let mut plan = ctx.plan(vec![PipelineStep::new("pseudo-code-refactoring").bind("pseudocode", pseudocode)], &[])?;
    let unit = &mut plan.units[0];
    unit.text = format!("{}\n\n{}\n{FILES_CLAUSE}", unit.text, code_listing(files));
    unit.expected_artifacts = vec![ArtifactKind::CodeBlock];
    run_refactor(ctx, plan, files, params(&[("pseudocode", pseudocode)]))
}

pub(super) fn data_refactor(
    ctx: &mut Ctx,
    files: &FileSet,
    target: &str,
    subject: &str,
    format: &str,
) -> Result<DriverReport, DriverError> {
    if format.trim().is_empty() {
        return Err(DriverError::Precondition("an example of the target data format is required".into()));
    }
    if target.trim().is_empty() || subject.trim().is_empty() {
        return Err(DriverError::Precondition("name the code to refactor and the data it handles".into()));
    }
    require_files(files)?;
    let step = PipelineStep::new("data-guided-refactoring")
        .bind("target", target.trim())
        .bind("subject", subject.trim())
        .bind("format", format.trim());
    let parameters = step.bindings.clone();
    let mut plan = ctx.plan(vec![step], &[])?;
    let unit = &mut plan.units[0];
    unit.text = format!("{}\n\n{}\n{FILES_CLAUSE}", unit.text, code_listing(files));
    unit.expected_artifacts = vec![ArtifactKind::CodeBlock];
    run_refactor(ctx, plan, files, parameters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newline_matching() {
        assert_eq!(match_newline(Some("a\n"), "b".into()), "b\n");
        assert_eq!(match_newline(Some("a"), "b\n".into()), "b");
        assert_eq!(match_newline(None, "b".into()), "b\n");
        assert_eq!(match_newline(None, String::new()), "");
    }
}
