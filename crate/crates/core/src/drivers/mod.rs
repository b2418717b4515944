//! One workflow per built-in pattern: compile a pipeline, run it as a
//! session, pull artifacts out of the replies and write them under
//! `<workdir>/out/`. Input files are never touched.

mod design;
mod refactor;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::catalog::{load_builtin_catalog, ScopeKind, UnknownValue};
use crate::composer::{compile, CompileError, PromptPlan, PromptUnit};
use crate::diff::{apply_unified_diff, unified_diff, PatchError};
use crate::extract::{ArtifactKind, FencedBlock};
use crate::llm::ChatProvider;
use crate::pdl::{PipelineSpec, PipelineStep};
use crate::session::{Session, SessionError, SessionStatus};

pub use refactor::AssumptionMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverId {
    RequirementsSimulate,
    SpecDisambiguate,
    ApiGenerate,
    ApiSimulate,
    FewshotExamples,
    DslCreate,
    ArchPossibilities,
    ChangeSimulate,
    CodeCluster,
    IntermediateAbstraction,
    PrincipledCode,
    HiddenAssumptions,
    PseudoRefactor,
    DataRefactor,
}

impl DriverId {
    pub const ALL: [DriverId; 14] = [
        DriverId::RequirementsSimulate,
        DriverId::SpecDisambiguate,
        DriverId::ApiGenerate,
        DriverId::ApiSimulate,
        DriverId::FewshotExamples,
        DriverId::DslCreate,
        DriverId::ArchPossibilities,
        DriverId::ChangeSimulate,
        DriverId::CodeCluster,
        DriverId::IntermediateAbstraction,
        DriverId::PrincipledCode,
        DriverId::HiddenAssumptions,
        DriverId::PseudoRefactor,
        DriverId::DataRefactor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DriverId::RequirementsSimulate => "requirements-simulate",
            DriverId::SpecDisambiguate => "spec-disambiguate",
            DriverId::ApiGenerate => "api-generate",
            DriverId::ApiSimulate => "api-simulate",
            DriverId::FewshotExamples => "fewshot-examples",
            DriverId::DslCreate => "dsl-create",
            DriverId::ArchPossibilities => "arch-possibilities",
            DriverId::ChangeSimulate => "change-simulate",
            DriverId::CodeCluster => "code-cluster",
            DriverId::IntermediateAbstraction => "intermediate-abstraction",
            DriverId::PrincipledCode => "principled-code",
            DriverId::HiddenAssumptions => "hidden-assumptions",
            DriverId::PseudoRefactor => "pseudo-refactor",
            DriverId::DataRefactor => "data-refactor",
        }
    }

    /// The catalog pattern this driver runs.
    pub fn pattern_id(self) -> &'static str {
        match self {
            DriverId::RequirementsSimulate => "requirements-simulator",
            DriverId::SpecDisambiguate => "specification-disambiguation",
            DriverId::ApiGenerate => "api-generator",
            DriverId::ApiSimulate => "api-simulator",
            DriverId::FewshotExamples => "fewshot-example-generator",
            DriverId::DslCreate => "dsl-creation",
            DriverId::ArchPossibilities => "architectural-possibilities",
            DriverId::ChangeSimulate => "change-request-simulation",
            DriverId::CodeCluster => "code-clustering",
            DriverId::IntermediateAbstraction => "intermediate-abstraction",
            DriverId::PrincipledCode => "principled-code",
            DriverId::HiddenAssumptions => "hidden-assumptions",
            DriverId::PseudoRefactor => "pseudo-code-refactoring",
            DriverId::DataRefactor => "data-guided-refactoring",
        }
    }
}

impl fmt::Display for DriverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriverId {
    type Err = UnknownValue;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DriverId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| UnknownValue { what: "driver", value: s.to_string() })
    }
}

/// Path → content, ordered by path.
pub type FileSet = BTreeMap<String, String>;

/// Parameters for one driver run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "driver", rename_all = "kebab-case")]
pub enum DriverRequest {
    RequirementsSimulate {
        requirements: String,
        format: Option<String>,
        /// Screen-by-screen walkthrough variant.
        #[serde(default)]
        screen: bool,
        /// Also ask for an image-generator prompt per screen.
        #[serde(default)]
        viz: bool,
    },
    SpecDisambiguate {
        spec: String,
    },
    ApiGenerate {
        requirements: String,
        format: Option<String>,
    },
    ApiSimulate {
        spec: String,
        /// Extra assumptions for the simulated data, e.g. how many users exist.
        scenario: Option<String>,
    },
    FewshotExamples {
        source: String,
        n: u32,
        focus: Option<String>,
        interfaces: Option<String>,
    },
    DslCreate {
        domain: String,
        syntax: Option<String>,
        /// Other DSLs whose identifiers should stay consistent with this one.
        #[serde(default)]
        linked: Vec<String>,
    },
    ArchPossibilities {
        description: String,
        n: u32,
        aspect: Option<String>,
        constraints: Option<String>,
    },
    ChangeSimulate {
        context: String,
        change: String,
        aspect: Option<String>,
        /// Module or feature to examine in a second, narrower pass.
        zoom: Option<String>,
    },
    CodeCluster {
        files: FileSet,
        property_y: Option<String>,
        property_z: Option<String>,
        #[serde(default)]
        tiers: bool,
        /// Send the rule as its own session-scoped turn (default) or inline.
        #[serde(default = "yes")]
        session_rule: bool,
    },
    IntermediateAbstraction {
        files: FileSet,
        #[serde(default)]
        multi_library: bool,
    },
    PrincipledCode {
        principle: String,
        #[serde(default)]
        files: FileSet,
    },
    HiddenAssumptions {
        files: FileSet,
        mode: AssumptionMode,
    },
    PseudoRefactor {
        files: FileSet,
        pseudocode: String,
    },
    DataRefactor {
        files: FileSet,
        target: String,
        subject: String,
        format: String,
    },
}

fn yes() -> bool {
    true
}

impl DriverRequest {
    pub fn id(&self) -> DriverId {
        match self {
            DriverRequest::RequirementsSimulate { .. } => DriverId::RequirementsSimulate,
            DriverRequest::SpecDisambiguate { .. } => DriverId::SpecDisambiguate,
            DriverRequest::ApiGenerate { .. } => DriverId::ApiGenerate,
            DriverRequest::ApiSimulate { .. } => DriverId::ApiSimulate,
            DriverRequest::FewshotExamples { .. } => DriverId::FewshotExamples,
            DriverRequest::DslCreate { .. } => DriverId::DslCreate,
            DriverRequest::ArchPossibilities { .. } => DriverId::ArchPossibilities,
            DriverRequest::ChangeSimulate { .. } => DriverId::ChangeSimulate,
            DriverRequest::CodeCluster { .. } => DriverId::CodeCluster,
            DriverRequest::IntermediateAbstraction { .. } => DriverId::IntermediateAbstraction,
            DriverRequest::PrincipledCode { .. } => DriverId::PrincipledCode,
            DriverRequest::HiddenAssumptions { .. } => DriverId::HiddenAssumptions,
            DriverRequest::PseudoRefactor { .. } => DriverId::PseudoRefactor,
            DriverRequest::DataRefactor { .. } => DriverId::DataRefactor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DriverError {
    #[error("{0} is empty")]
    EmptyContext(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("the API specification has no paths")]
    NoPaths,
    #[error("no context to simulate the change against")]
    MissingContext,
    #[error("the reply contained no code blocks")]
    NoCodeReturned,
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DriverError {
    fn from(e: std::io::Error) -> Self {
        DriverError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverWarning {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrittenArtifact {
    /// Relative to the workdir.
    pub path: String,
    pub kind: String,
}

/// Inputs, proposed outputs and the diff between them.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RefactorJob {
    pub inputs: FileSet,
    pub parameters: BTreeMap<String, String>,
    pub proposed: FileSet,
    /// Unified diff per proposed file.
    pub diffs: BTreeMap<String, String>,
}

impl RefactorJob {
    pub fn new(inputs: FileSet, parameters: BTreeMap<String, String>, proposed: FileSet) -> Self {
        let diffs = proposed
            .iter()
            .map(|(path, new)| {
                let old = inputs.get(path).map(String::as_str).unwrap_or("");
                (path.clone(), unified_diff(path, old, new))
            })
            .collect();
        Self { inputs, parameters, proposed, diffs }
    }

    /// Applies every diff to its input and compares with the proposal.
    pub fn verify(&self) -> Result<(), DriverError> {
        for (path, diff) in &self.diffs {
            let old = self.inputs.get(path).map(String::as_str).unwrap_or("");
            let applied = apply_unified_diff(old, diff)?;
            if Some(&applied) != self.proposed.get(path) {
                return Err(DriverError::Precondition(format!("diff for {path} does not reproduce the proposal")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverReport {
    pub driver_id: DriverId,
    pub transcript_path: PathBuf,
    pub artifacts: Vec<WrittenArtifact>,
    pub warnings: Vec<DriverWarning>,
    /// The first rendered prompt sent to the provider.
    pub first_prompt: String,
    pub status: SessionStatus,
    pub refactor: Option<RefactorJob>,
}

impl DriverReport {
    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings.iter().any(|w| w.code == code)
    }
}

/// Supplies human entries to interactive drivers. `None` ends the loop.
pub trait InputSource {
    fn next_input(&mut self, hint: &str, last_reply: Option<&str>) -> Option<String>;

    /// Local feedback that is not part of the conversation.
    fn notice(&mut self, _message: &str) {}
}

/// Fixed list of entries, for tests and batch runs.
#[derive(Debug, Default, Clone)]
pub struct ScriptedInput {
    entries: std::collections::VecDeque<String>,
    pub notices: Vec<String>,
}

impl ScriptedInput {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = S>) -> Self {
        Self { entries: entries.into_iter().map(Into::into).collect(), notices: Vec::new() }
    }
}

impl InputSource for ScriptedInput {
    fn next_input(&mut self, _hint: &str, _last_reply: Option<&str>) -> Option<String> {
        self.entries.pop_front()
    }

    fn notice(&mut self, message: &str) {
        self.notices.push(message.to_string());
    }
}

/// Runs one driver. Outputs land in `<workdir>/out/`.
pub fn run(
    request: &DriverRequest,
    provider: &dyn ChatProvider,
    workdir: &Path,
    input: &mut dyn InputSource,
) -> Result<DriverReport, DriverError> {
    let mut ctx = Ctx::new(request.id(), provider, workdir, input)?;
    info!(driver = %request.id(), workdir = %workdir.display(), "running driver");
    match request {
        DriverRequest::RequirementsSimulate { requirements, format, screen, viz } => {
            design::requirements_simulate(&mut ctx, requirements, format.as_deref(), *screen, *viz)
        }
        DriverRequest::SpecDisambiguate { spec } => design::spec_disambiguate(&mut ctx, spec),
        DriverRequest::ApiGenerate { requirements, format } => {
            design::api_generate(&mut ctx, requirements, format.as_deref())
        }
        DriverRequest::ApiSimulate { spec, scenario } => design::api_simulate(&mut ctx, spec, scenario.as_deref()),
        DriverRequest::FewshotExamples { source, n, focus, interfaces } => {
            design::fewshot_examples(&mut ctx, source, *n, focus.as_deref(), interfaces.as_deref())
        }
        DriverRequest::DslCreate { domain, syntax, linked } => {
            design::dsl_create(&mut ctx, domain, syntax.as_deref(), linked)
        }
        DriverRequest::ArchPossibilities { description, n, aspect, constraints } => {
            design::arch_possibilities(&mut ctx, description, *n, aspect.as_deref(), constraints.as_deref())
        }
        DriverRequest::ChangeSimulate { context, change, aspect, zoom } => {
            design::change_simulate(&mut ctx, context, change, aspect.as_deref(), zoom.as_deref())
        }
        DriverRequest::CodeCluster { files, property_y, property_z, tiers, session_rule } => {
            refactor::code_cluster(&mut ctx, files, property_y.as_deref(), property_z.as_deref(), *tiers, *session_rule)
        }
        DriverRequest::IntermediateAbstraction { files, multi_library } => {
            refactor::intermediate_abstraction(&mut ctx, files, *multi_library)
        }
        DriverRequest::PrincipledCode { principle, files } => refactor::principled_code(&mut ctx, principle, files),
        DriverRequest::HiddenAssumptions { files, mode } => refactor::hidden_assumptions(&mut ctx, files, mode),
        DriverRequest::PseudoRefactor { files, pseudocode } => refactor::pseudo_refactor(&mut ctx, files, pseudocode),
        DriverRequest::DataRefactor { files, target, subject, format } => {
            refactor::data_refactor(&mut ctx, files, target, subject, format)
        }
    }
}

/// What an interactive driver does with one human entry.
pub(crate) enum Entry {
    Send,
    Skip,
}

pub(crate) struct Ctx<'a> {
    pub id: DriverId,
    pub provider: &'a dyn ChatProvider,
    pub workdir: PathBuf,
    pub input: &'a mut dyn InputSource,
    pub artifacts: Vec<WrittenArtifact>,
    pub warnings: Vec<DriverWarning>,
    pub first_prompt: Option<String>,
}

pub(crate) const OUT_DIR: &str = "out";

impl<'a> Ctx<'a> {
    fn new(
        id: DriverId,
        provider: &'a dyn ChatProvider,
        workdir: &Path,
        input: &'a mut dyn InputSource,
    ) -> Result<Self, DriverError> {
        Ok(Self {
            id,
            provider,
            workdir: workdir.to_path_buf(),
            input,
            artifacts: Vec::new(),
            warnings: Vec::new(),
            first_prompt: None,
        })
    }

    pub fn warn(&mut self, code: &str, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(code, "{message}");
        self.warnings.push(DriverWarning { code: code.into(), message });
    }

    /// Compiles `steps` against the built-in catalog.
    pub fn plan(&self, steps: Vec<PipelineStep>, context: &[(&str, &str)]) -> Result<PromptPlan, DriverError> {
        let mut spec = PipelineSpec::new(self.id.as_str(), steps);
        for (name, _) in context {
            spec = spec.with_context(name);
        }
        let bound: BTreeMap<String, String> = context.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Ok(compile(&spec, &load_builtin_catalog(), &bound)?)
    }

    /// Writes `content` to `out/<rel>` and lists it in the report.
    pub fn write(&mut self, rel: &str, kind: &str, content: &str) -> Result<PathBuf, DriverError> {
        let rel_path = format!("{OUT_DIR}/{rel}");
        let path = self.workdir.join(&rel_path);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, content)?;
        self.artifacts.retain(|a| a.path != rel_path);
        self.artifacts.push(WrittenArtifact { path: rel_path, kind: kind.into() });
        Ok(path)
    }

    /// Sends the setup units and then feeds human entries to any loop.
    /// `filter` sees each entry first and may keep it local.
    pub fn converse(
        &mut self,
        plan: PromptPlan,
        mut filter: impl FnMut(&mut Self, &str) -> Entry,
    ) -> Result<Session, DriverError> {
        if self.first_prompt.is_none() {
            self.first_prompt = plan.units.first().map(|u| u.text.clone());
        }
        let mut session = Session::create(plan.clone(), Session::plan_id(&plan))?;
        session.advance(self.provider)?;
        while session.status == SessionStatus::Interactive {
            let interaction = session.active_interaction().cloned().expect("open loop");
            let entry = self.input.next_input(&interaction.user_prompt_hint, session.last_reply());
            let text = entry.unwrap_or_else(|| interaction.terminator.clone());
            if !interaction.is_terminator(&text) {
                if let Entry::Skip = filter(self, &text) {
                    continue;
                }
            }
            session.user_turn(self.provider, &text)?;
        }
        Ok(session)
    }

    pub fn save_transcript(&mut self, session: &Session, name: &str) -> Result<PathBuf, DriverError> {
        let path = self.write(name, "transcript", &session.to_json())?;
        Ok(path)
    }

    pub fn finish(
        &mut self,
        session: &Session,
        report_body: &str,
        refactor: Option<RefactorJob>,
    ) -> Result<DriverReport, DriverError> {
        let transcript_path = self.save_transcript(session, "transcript.json")?;
        let first_prompt = self.first_prompt.clone().unwrap_or_default();
        let mut md = format!("# {}\n\n", self.id);
        md.push_str(report_body.trim_end());
        md.push_str("\n\n## Outputs\n\n");
        for a in &self.artifacts {
            md.push_str(&format!("- `{}` ({})\n", a.path, a.kind));
        }
        md.push_str(&format!("- `{OUT_DIR}/report.md` (report)\n"));
        if !self.warnings.is_empty() {
            md.push_str("\n## Warnings\n\n");
            for w in &self.warnings {
                md.push_str(&format!("- {}: {}\n", w.code, w.message));
            }
        }
        self.write("report.md", "report", &md)?;
        Ok(DriverReport {
            driver_id: self.id,
            transcript_path,
            artifacts: std::mem::take(&mut self.artifacts),
            warnings: std::mem::take(&mut self.warnings),
            first_prompt,
            status: session.status,
            refactor,
        })
    }
}

pub(crate) fn one_shot(pattern_id: &str, text: String, expected: Vec<ArtifactKind>) -> PromptUnit {
    PromptUnit {
        pattern_id: pattern_id.into(),
        kind: ScopeKind::OneShot,
        text,
        expected_artifacts: expected,
        interaction: None,
    }
}

pub(crate) fn require_text(value: &str, what: &'static str) -> Result<(), DriverError> {
    if value.trim().is_empty() {
        Err(DriverError::EmptyContext(what))
    } else {
        Ok(())
    }
}

pub(crate) fn language_for(path: &str) -> &'static str {
    match Path::new(path).extension().and_then(|e| e.to_str()).unwrap_or("") {
        "py" => "python",
        "rs" => "rust",
        "js" | "mjs" => "javascript",
        "ts" => "typescript",
        "java" => "java",
        "go" => "go",
        "rb" => "ruby",
        "c" | "h" => "c",
        "cpp" | "cc" | "hpp" => "cpp",
        "cs" => "csharp",
        "kt" => "kotlin",
        "swift" => "swift",
        "sh" => "bash",
        "yaml" | "yml" => "yaml",
        "json" => "json",
        "toml" => "toml",
        "sql" => "sql",
        _ => "",
    }
}

fn comment_for(path: &str) -> &'static str {
    match language_for(path) {
        "python" | "ruby" | "bash" | "yaml" | "toml" | "" => "#",
        "sql" => "--",
        _ => "//",
    }
}

/// Input files as fenced blocks, each headed by a `file:` comment.
pub(crate) fn code_listing(files: &FileSet) -> String {
    files
        .iter()
        .map(|(path, content)| {
            let body = format!("{} file: {path}\n{}", comment_for(path), content.strip_suffix('\n').unwrap_or(content));
            FencedBlock { language_tag: language_for(path).into(), body, filename_hint: None, unterminated: false }
                .to_markdown()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A relative path that stays inside its root.
pub(crate) fn safe_relative(path: &str) -> Option<PathBuf> {
    let p = Path::new(path);
    let ok = !path.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    ok.then(|| p.to_path_buf())
}

/// Applies every `*.diff` under `patch_dir` to the matching file under
/// `root`, writing results in place. All patches are checked before any
/// file is written.
pub fn apply_patches(patch_dir: &Path, root: &Path) -> Result<Vec<PathBuf>, DriverError> {
    let mut pending = Vec::new();
    let mut stack = vec![patch_dir.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut entries: Vec<_> = fs::read_dir(&dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let Some(rel) = path.strip_prefix(patch_dir).ok().and_then(|r| r.to_str()) else { continue };
            let Some(target) = rel.strip_suffix(".diff") else { continue };
            let target = root.join(target);
            let old = if target.exists() { fs::read_to_string(&target)? } else { String::new() };
            let new = apply_unified_diff(&old, &fs::read_to_string(&path)?)?;
            pending.push((target, new));
        }
    }
    pending.sort();
    for (target, new) in &pending {
        if let Some(dir) = target.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(target, new)?;
    }
    Ok(pending.into_iter().map(|(p, _)| p).collect())
}
