mod args;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use tracing::debug;

use ppc_core::catalog::{list_by_classification, load_builtin_catalog, Catalog};
use ppc_core::composer::{check, compile, explain, render_pattern, CompileError};
use ppc_core::drivers::{self, AssumptionMode, DriverError, DriverReport, DriverRequest, FileSet, InputSource};
use ppc_core::llm::{record, ChatProvider, HttpProvider, LlmError, ProviderConfig, ReplayProvider};
use ppc_core::pdl::{
    format_patterns, has_errors, parse_file, parse_pipeline_named, Diagnostic, PipelineSpec, PipelineStep,
};
use ppc_core::renderer::{estimate_tokens, fit_to_budget, BudgetOutcome, BudgetReport};
use ppc_core::session::{Session, SessionError, SessionStatus};

use args::{CatalogCmd, Cli, Command, DriverCmd, ExtraPatterns, Files, SessionOpts, SimulateCmd};

#[derive(Debug, thiserror::Error)]
enum CliError {
    /// Input parsed but was rejected; diagnostics already printed.
    #[error("{0}")]
    Rejected(String),
    #[error("{0}")]
    Usage(String),
    /// Provider, network or filesystem trouble.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Rejected(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 3,
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Precondition(m) => CliError::Usage(m),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Provider(p) => p.into(),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<CompileError> for CliError {
    fn from(CompileError::Rejected(diags): CompileError) -> Self {
        print_diagnostics(&diags);
        CliError::Rejected("pipeline rejected".into())
    }
}

impl From<DriverError> for CliError {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Compile(c) => c.into(),
            DriverError::Session(s) => s.into(),
            DriverError::EmptyContext(_) | DriverError::Precondition(_) | DriverError::MissingContext => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Failure(other.to_string()),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| level.into()))
        .with_writer(io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Settings shared by every command.
struct Env {
    workdir: PathBuf,
    config: ProviderConfig,
    budget: Option<usize>,
}

impl Env {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p == Path::new(".") {
            self.workdir.clone()
        } else if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    fn read(&self, p: &Path) -> Result<String> {
        let path = self.resolve(p);
        fs::read_to_string(&path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
    }

    fn write(&self, p: &Path, text: &str) -> Result<PathBuf> {
        let path = self.resolve(p);
        let io_err = |e: io::Error| CliError::Failure(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        fs::write(&path, text).map_err(io_err)?;
        Ok(path)
    }

    fn files(&self, files: &Files) -> Result<FileSet> {
        files.files.iter().map(|p| Ok((p.display().to_string(), self.read(p)?))).collect()
    }

    fn catalog(&self, extra: &ExtraPatterns) -> Result<Catalog> {
        let mut catalog = load_builtin_catalog();
        if let Some(file) = &extra.file {
            let parsed = parse_file(&file.display().to_string(), &self.read(file)?);
            print_diagnostics(&parsed.diagnostics);
            if has_errors(&parsed.diagnostics) {
                return Err(CliError::Rejected(format!("{} has errors", file.display())));
            }
            catalog.extend(parsed.patterns);
        }
        Ok(catalog)
    }

    /// Replay never builds the HTTP client, so it cannot reach the network.
    fn provider(&self, opts: &SessionOpts) -> Result<Box<dyn ChatProvider>> {
        if let Some(f) = &opts.replay {
            let replay = ReplayProvider::load(&self.resolve(f))?.with_model(self.config.model.clone());
            return Ok(Box::new(replay));
        }
        let http = HttpProvider::new(self.config.clone())?;
        Ok(match &opts.record {
            Some(f) => Box::new(record(http, self.resolve(f))?),
            None => Box::new(http),
        })
    }

    fn input(&self, opts: &SessionOpts) -> Result<LineInput> {
        Ok(match &opts.input {
            Some(f) => LineInput::new(Box::new(io::Cursor::new(self.read(f)?)), false),
            None => LineInput::new(Box::new(io::stdin().lock()), io::stdin().is_terminal()),
        })
    }

    fn check_budget(&self, report: &BudgetReport) -> CliError {
        eprintln!(
            "over budget: ~{} tokens against a budget of {} (overflow {}, first overflowing unit {})",
            report.total, report.budget, report.overflow, report.first_overflowing_unit
        );
        for u in report.oversized_units() {
            eprintln!("  unit {} ({}) alone needs ~{} tokens", u.index, u.pattern_id, u.tokens);
        }
        CliError::Rejected("plan exceeds the token budget".into())
    }
}

/// Human entries read line by line. End of input ends the loop.
struct LineInput {
    lines: Box<dyn BufRead>,
    prompt: bool,
}

impl LineInput {
    fn new(lines: Box<dyn BufRead>, prompt: bool) -> Self {
        Self { lines, prompt }
    }

    fn next_line(&mut self, hint: &str) -> Option<String> {
        if self.prompt {
            eprint!("{hint} > ");
            let _ = io::stderr().flush();
        }
        let mut line = String::new();
        match self.lines.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim_end_matches(['\r', '\n']).to_string()),
        }
    }
}

impl InputSource for LineInput {
    fn next_input(&mut self, hint: &str, last_reply: Option<&str>) -> Option<String> {
        if let Some(reply) = last_reply {
            println!("{}\n", reply.trim_end());
        }
        self.next_line(hint)
    }

    fn notice(&mut self, message: &str) {
        eprintln!("note: {message}");
    }
}

fn print_diagnostics(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{d}");
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut config = ProviderConfig::from_env();
    if let Some(url) = cli.provider_url {
        config.base_url = url;
    }
    if let Some(model) = cli.model {
        config.model = model;
    }
    let env = Env { workdir: cli.workdir, config, budget: cli.budget };
    debug!(workdir = %env.workdir.display(), "dispatching");
    match cli.command {
        Command::Catalog(cmd) => catalog_cmd(&env, cmd),
        Command::Render { id, set, patterns } => render_cmd(&env, &id, set, &patterns),
        Command::Check { pipeline, patterns } => check_cmd(&env, &pipeline, &patterns).map(|_| ()),
        Command::Run { pipeline, context, dry_run, transcript, patterns, session } => {
            run_cmd(&env, &pipeline, &context, dry_run, &transcript, &patterns, &session)
        }
        Command::Simulate(SimulateCmd::Requirements { requirements, format, screen, viz, session }) => {
            let req =
                DriverRequest::RequirementsSimulate { requirements: env.read(&requirements)?, format, screen, viz };
            driver_cmd(&env, req, &session)
        }
        Command::Simulate(SimulateCmd::Api { spec, scenario, session }) => {
            let req = DriverRequest::ApiSimulate { spec: env.read(&spec)?, scenario };
            driver_cmd(&env, req, &session)
        }
        Command::Driver { driver, session } => {
            let req = driver_request(&env, driver)?;
            driver_cmd(&env, req, &session)
        }
        Command::Apply { patches, root } => {
            let written = drivers::apply_patches(&env.resolve(&patches), &env.resolve(&root))?;
            for p in &written {
                println!("patched {}", p.display());
            }
            eprintln!("{} file(s) patched", written.len());
            Ok(())
        }
        Command::Serve { port } => serve_cmd(&env, port),
    }
}

fn catalog_cmd(env: &Env, cmd: CatalogCmd) -> Result<()> {
    match cmd {
        CatalogCmd::List { class, patterns } => {
            let catalog = env.catalog(&patterns)?;
            let mut shown: Vec<_> = match class {
                Some(c) => list_by_classification(&catalog, c),
                None => catalog.patterns().iter().collect(),
            };
            shown.sort_by(|a, b| a.id.cmp(&b.id));
            for p in shown {
                println!("{}\t{}\t{}", p.id, p.classification, p.name);
            }
        }
        CatalogCmd::Show { id, json, patterns } => {
            let catalog = env.catalog(&patterns)?;
            let p = catalog.get(&id).map_err(|e| CliError::Usage(e.to_string()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(p).expect("descriptor serializes"));
            } else {
                print!("{}", format_patterns(std::slice::from_ref(p)));
            }
        }
        CatalogCmd::Export { out, patterns } => {
            let text = format_patterns(env.catalog(&patterns)?.patterns());
            match out {
                Some(f) => {
                    let path = env.write(&f, &text)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn render_cmd(env: &Env, id: &str, set: Vec<(String, String)>, extra: &ExtraPatterns) -> Result<()> {
    let catalog = env.catalog(extra)?;
    let mut step = PipelineStep::new(id);
    for (k, v) in &set {
        step = step.bind(k, v);
    }
    let diags = check(&PipelineSpec::new("render", vec![step.clone()]), &catalog);
    print_diagnostics(&diags);
    if has_errors(&diags) {
        return Err(CliError::Rejected(format!("cannot render `{id}`")));
    }
    let p = catalog.get(id).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = render_pattern(p, &step.bindings).map_err(|e| CliError::Rejected(e.to_string()))?;
    let tokens = estimate_tokens(&text).count;
    println!("{text}");
    eprintln!("~{tokens} tokens");
    match env.budget {
        Some(b) if tokens > b => Err(CliError::Rejected(format!("~{tokens} tokens exceeds the budget of {b}"))),
        _ => Ok(()),
    }
}

fn check_cmd(env: &Env, pipeline: &Path, extra: &ExtraPatterns) -> Result<(PipelineSpec, Catalog)> {
    let catalog = env.catalog(extra)?;
    let text = env.read(pipeline)?;
    let (spec, mut diags) = parse_pipeline_named(&pipeline.display().to_string(), &text);
    if let Some(spec) = &spec {
        diags.extend(check(spec, &catalog));
    }
    print_diagnostics(&diags);
    match spec {
        Some(spec) if !has_errors(&diags) => {
            println!("ok: pipeline `{}` with {} step(s), {} warning(s)", spec.name, spec.steps.len(), diags.len());
            Ok((spec, catalog))
        }
        _ => Err(CliError::Rejected(format!("{} has errors", pipeline.display()))),
    }
}

fn run_cmd(
    env: &Env,
    pipeline: &Path,
    context: &[(String, String)],
    dry_run: bool,
    transcript: &Path,
    extra: &ExtraPatterns,
    opts: &SessionOpts,
) -> Result<()> {
    let (spec, catalog) = check_cmd(env, pipeline, extra)?;
    let mut ctx = BTreeMap::new();
    for (name, file) in context {
        ctx.insert(name.clone(), env.read(Path::new(file))?);
    }
    let mut plan = compile(&spec, &catalog, &ctx)?;
    if let Some(budget) = env.budget {
        plan.token_budget = Some(budget);
        if let BudgetOutcome::OverBudget(report) = fit_to_budget(plan.clone(), budget) {
            return Err(env.check_budget(&report));
        }
    }
    if dry_run {
        print!("{}", explain(&plan));
        return Ok(());
    }
    let provider = env.provider(opts)?;
    let mut input = env.input(opts)?;
    let mut session = Session::create(plan, Session::random_id())?;
    let outcome = converse(&mut session, &*provider, &mut input);
    // Saved even on failure so a pending turn can be inspected and resent.
    let path = env.write(transcript, &session.to_json())?;
    outcome?;
    eprintln!(
        "transcript: {} ({} turn(s), {} artifact(s))",
        path.display(),
        session.turns.len(),
        session.artifacts.len()
    );
    Ok(())
}

fn converse(session: &mut Session, provider: &dyn ChatProvider, input: &mut LineInput) -> Result<()> {
    let setup = session.advance(provider)?;
    if let Some(reply) = setup.reply {
        println!("{}\n", reply.trim_end());
    }
    while session.status == SessionStatus::Interactive {
        let interaction = session.active_interaction().cloned().expect("interactive session has a loop");
        let text = input.next_line(&interaction.user_prompt_hint).unwrap_or_else(|| interaction.terminator.clone());
        let outcome = session.user_turn(provider, &text)?;
        if let Some(reply) = outcome.reply {
            println!("{}\n", reply.trim_end());
        }
    }
    Ok(())
}

fn driver_request(env: &Env, cmd: DriverCmd) -> Result<DriverRequest> {
    Ok(match cmd {
        DriverCmd::RequirementsSimulate { requirements, format, screen, viz } => {
            DriverRequest::RequirementsSimulate { requirements: env.read(&requirements)?, format, screen, viz }
        }
        DriverCmd::SpecDisambiguate { spec } => DriverRequest::SpecDisambiguate { spec: env.read(&spec)? },
        DriverCmd::ApiGenerate { requirements, format } => {
            DriverRequest::ApiGenerate { requirements: env.read(&requirements)?, format }
        }
        DriverCmd::ApiSimulate { spec, scenario } => DriverRequest::ApiSimulate { spec: env.read(&spec)?, scenario },
        DriverCmd::FewshotExamples { source, n, focus, interfaces } => {
            DriverRequest::FewshotExamples { source: env.read(&source)?, n, focus, interfaces }
        }
        DriverCmd::DslCreate { domain, syntax, linked } => DriverRequest::DslCreate { domain, syntax, linked },
        DriverCmd::ArchPossibilities { description, n, aspect, constraints } => {
            DriverRequest::ArchPossibilities { description: env.read(&description)?, n, aspect, constraints }
        }
        DriverCmd::ChangeSimulate { context, change, aspect, zoom } => {
            DriverRequest::ChangeSimulate { context: env.read(&context)?, change, aspect, zoom }
        }
        DriverCmd::CodeCluster { files, property_y, property_z, tiers, inline_rule } => DriverRequest::CodeCluster {
            files: env.files(&files)?,
            property_y,
            property_z,
            tiers,
            session_rule: !inline_rule,
        },
        DriverCmd::IntermediateAbstraction { files, multi_library } => {
            DriverRequest::IntermediateAbstraction { files: env.files(&files)?, multi_library }
        }
        DriverCmd::PrincipledCode { principle, files } => {
            DriverRequest::PrincipledCode { principle, files: env.files(&files)? }
        }
        DriverCmd::HiddenAssumptions { files, difficulty, migrate_from, migrate_to } => {
            let mode = match (migrate_from, migrate_to) {
                (Some(from), Some(to)) => AssumptionMode::Migration { from, to },
                _ if difficulty => AssumptionMode::Difficulty,
                _ => AssumptionMode::List,
            };
            DriverRequest::HiddenAssumptions { files: env.files(&files)?, mode }
        }
        DriverCmd::PseudoRefactor { files, pseudocode } => {
            DriverRequest::PseudoRefactor { files: env.files(&files)?, pseudocode: env.read(&pseudocode)? }
        }
        DriverCmd::DataRefactor { files, target, subject, format } => {
            DriverRequest::DataRefactor { files: env.files(&files)?, target, subject, format }
        }
    })
}

fn driver_cmd(env: &Env, req: DriverRequest, opts: &SessionOpts) -> Result<()> {
    let provider = env.provider(opts)?;
    let mut input = env.input(opts)?;
    let report = drivers::run(&req, &*provider, &env.workdir, &mut input)?;
    print_report(&report);
    Ok(())
}

fn print_report(report: &DriverReport) {
    for w in &report.warnings {
        eprintln!("warning[{}]: {}", w.code, w.message);
    }
    for a in &report.artifacts {
        println!("{}\t{}", a.kind, a.path);
    }
    eprintln!("{}: {:?}, {} output(s)", report.driver_id, report.status, report.artifacts.len());
}

fn serve_cmd(env: &Env, port: u16) -> Result<()> {
    let provider: Arc<dyn ChatProvider> = Arc::from(env.provider(&SessionOpts::default())?);
    let state = Arc::new(ppc_server::AppState::new(provider, Some(env.workdir.clone())));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failure(e.to_string()))?;
    runtime
        .block_on(ppc_server::serve(ppc_server::loopback(port), state, |addr| println!("listening on http://{addr}")))
        .map_err(|e| CliError::Failure(format!("serve: {e}")))
}
