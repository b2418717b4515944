use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ppc_core::catalog::Classification;

#[derive(Debug, Parser)]
#[command(name = "ppc", version, about = "Compile and run prompt-pattern pipelines against a chat model")]
pub struct Cli {
    /// Base URL of an OpenAI-compatible API (overrides PPC_BASE_URL).
    #[arg(long, global = true, value_name = "URL")]
    pub provider_url: Option<String>,

    /// Model name (overrides PPC_MODEL).
    #[arg(long, global = true)]
    pub model: Option<String>,

    /// Token budget for compiled plans.
    #[arg(long, global = true, value_name = "N")]
    pub budget: Option<usize>,

    /// Base directory for relative input paths and all outputs.
    #[arg(long, global = true, value_name = "D", default_value = ".")]
    pub workdir: PathBuf,

    /// Log more (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Browse and export the pattern catalog.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Render one pattern's prompt with slot values.
    Render {
        id: String,
        /// Slot binding, repeatable.
        #[arg(long = "set", value_name = "K=V", value_parser = key_value)]
        set: Vec<(String, String)>,
        #[command(flatten)]
        patterns: ExtraPatterns,
    },
    /// Parse and check a pipeline file.
    Check {
        pipeline: PathBuf,
        #[command(flatten)]
        patterns: ExtraPatterns,
    },
    /// Compile a pipeline and run it as a session.
    Run {
        pipeline: PathBuf,
        /// Text for a `context` reference, repeatable.
        #[arg(long, value_name = "NAME=FILE", value_parser = key_value)]
        context: Vec<(String, String)>,
        /// Print the compiled plan and stop.
        #[arg(long)]
        dry_run: bool,
        /// Transcript location, relative to the workdir.
        #[arg(long, default_value = "out/transcript.json")]
        transcript: PathBuf,
        #[command(flatten)]
        patterns: ExtraPatterns,
        #[command(flatten)]
        session: SessionOpts,
    },
    /// Interactive simulations.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Run one pattern workflow and write its outputs under out/.
    Driver {
        #[command(subcommand)]
        driver: DriverCmd,
        #[command(flatten)]
        session: SessionOpts,
    },
    /// Apply the diffs a refactoring driver wrote.
    Apply {
        /// Directory of .diff files, relative to the workdir.
        #[arg(long, default_value = "out/patch")]
        patches: PathBuf,
        /// Tree the diffs apply to, relative to the workdir.
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
    /// Serve the JSON API on loopback.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogCmd {
    /// One line per pattern: id, classification, name.
    List {
        #[arg(long, value_parser = parse_class)]
        class: Option<Classification>,
        #[command(flatten)]
        patterns: ExtraPatterns,
    },
    /// Full descriptor of one pattern.
    Show {
        id: String,
        /// Print JSON instead of PDL.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        patterns: ExtraPatterns,
    },
    /// Write the catalog as PDL.
    Export {
        /// Output file relative to the workdir; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        patterns: ExtraPatterns,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExtraPatterns {
    /// PDL file with additional pattern blocks.
    #[arg(long = "patterns", value_name = "FILE")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SessionOpts {
    /// Record every exchange to a cassette file.
    #[arg(long, global = true, value_name = "F", conflicts_with = "replay")]
    pub record: Option<PathBuf>,
    /// Serve replies from a cassette; no network access.
    #[arg(long, global = true, value_name = "F")]
    pub replay: Option<PathBuf>,
    /// Read human entries from a file, one per line, instead of stdin.
    #[arg(long, global = true, value_name = "FILE")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCmd {
    /// Walk through a system described by user stories.
    Requirements {
        /// File with the requirements.
        requirements: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        screen: bool,
        #[arg(long)]
        viz: bool,
        #[command(flatten)]
        session: SessionOpts,
    },
    /// Act as an HTTP server for an API specification.
    Api {
        /// File with the API specification.
        spec: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        session: SessionOpts,
    },
}

/// Source files for refactoring drivers, keyed by the path as given.
#[derive(Debug, Clone, Default, Args)]
pub struct Files {
    #[arg(long = "file", value_name = "PATH")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DriverCmd {
    /// Simulate the system described by requirements; new stories go to out/requirements-new.md.
    RequirementsSimulate {
        requirements: PathBuf,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        screen: bool,
        #[arg(long)]
        viz: bool,
    },
    /// Ask about ambiguities and omissions in a specification.
    SpecDisambiguate { spec: PathBuf },
    /// Generate an API specification from requirements.
    ApiGenerate {
        requirements: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Act as the server for an API specification.
    ApiSimulate {
        spec: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Generate usage examples for an API or code base.
    FewshotExamples {
        source: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[arg(long)]
        focus: Option<String>,
        #[arg(long)]
        interfaces: Option<String>,
    },
    /// Define a domain-specific language for a domain.
    DslCreate {
        domain: String,
        #[arg(long)]
        syntax: Option<String>,
        #[arg(long)]
        linked: Vec<String>,
    },
    /// Propose alternative architectures.
    ArchPossibilities {
        description: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[arg(long)]
        aspect: Option<String>,
        #[arg(long)]
        constraints: Option<String>,
    },
    /// Estimate the impact of a change request.
    ChangeSimulate {
        context: PathBuf,
        #[arg(long)]
        change: String,
        #[arg(long)]
        aspect: Option<String>,
        #[arg(long)]
        zoom: Option<String>,
    },
    /// Separate code into clusters by a property.
    CodeCluster {
        #[command(flatten)]
        files: Files,
        #[arg(long)]
        property_y: Option<String>,
        #[arg(long)]
        property_z: Option<String>,
        #[arg(long)]
        tiers: bool,
        /// Put the rule inline instead of in its own turn.
        #[arg(long)]
        inline_rule: bool,
    },
    /// Hide third-party libraries behind an intermediate layer.
    IntermediateAbstraction {
        #[command(flatten)]
        files: Files,
        #[arg(long)]
        multi_library: bool,
    },
    /// Set a design principle as a standing rule and optionally refactor files.
    PrincipledCode {
        #[arg(long)]
        principle: String,
        #[command(flatten)]
        files: Files,
    },
    /// List the assumptions baked into code.
    HiddenAssumptions {
        #[command(flatten)]
        files: Files,
        /// Rate how hard each assumption is to change.
        #[arg(long, conflicts_with = "migrate_from")]
        difficulty: bool,
        /// Source of a migration, e.g. MongoDB.
        #[arg(long, requires = "migrate_to")]
        migrate_from: Option<String>,
        #[arg(long, requires = "migrate_from")]
        migrate_to: Option<String>,
    },
    /// Refactor files to match a pseudo-code outline.
    PseudoRefactor {
        #[command(flatten)]
        files: Files,
        /// File with the pseudo-code.
        #[arg(long)]
        pseudocode: PathBuf,
    },
    /// Refactor code to fit a new data format.
    DataRefactor {
        #[command(flatten)]
        files: Files,
        #[arg(long)]
        target: String,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        format: String,
    },
}

fn key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn parse_class(s: &str) -> Result<Classification, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Classification::ALL.iter().map(|c| c.as_str()).collect();
        format!("unknown classification `{s}` (expected one of {})", names.join(", "))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn key_value_splits_on_first_equals() {
        assert_eq!(key_value("a=b=c").unwrap(), ("a".into(), "b=c".into()));
        assert_eq!(key_value("a=").unwrap(), ("a".into(), String::new()));
        assert!(key_value("=b").is_err());
        assert!(key_value("ab").is_err());
    }
}
