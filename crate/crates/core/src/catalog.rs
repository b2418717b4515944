//! Pattern descriptors and the built-in catalog.
//!
//! Every built-in carries two views of its prompt: `statements`, the abstract
//! structure with slots, and `default_prompt`, the concrete wording that is
//! actually rendered. Slots with worked-example defaults render to the
//! reference wording when no bindings are supplied.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::renderer::{is_slot_name, placeholders};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    RequirementsElicitation,
    SystemDesign,
    CodeQuality,
    Refactoring,
    External,
}

impl Classification {
    pub const ALL: [Classification; 5] = [
        Classification::RequirementsElicitation,
        Classification::SystemDesign,
        Classification::CodeQuality,
        Classification::Refactoring,
        Classification::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::RequirementsElicitation => "requirements-elicitation",
            Classification::SystemDesign => "system-design",
            Classification::CodeQuality => "code-quality",
            Classification::Refactoring => "refactoring",
            Classification::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeKind {
    /// Rule persists for the rest of the conversation.
    Session,
    OneShot,
    /// Opens a user-driven loop.
    Interactive,
}

impl ScopeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScopeKind::Session => "session",
            ScopeKind::OneShot => "one-shot",
            ScopeKind::Interactive => "interactive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotKind {
    Text,
    Integer,
    FormatName,
    PrincipleName,
    PropertyDescription,
    Code,
    DataExample,
}

impl SlotKind {
    pub const ALL: [SlotKind; 7] = [
        SlotKind::Text,
        SlotKind::Integer,
        SlotKind::FormatName,
        SlotKind::PrincipleName,
        SlotKind::PropertyDescription,
        SlotKind::Code,
        SlotKind::DataExample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SlotKind::Text => "text",
            SlotKind::Integer => "integer",
            SlotKind::FormatName => "format-name",
            SlotKind::PrincipleName => "principle-name",
            SlotKind::PropertyDescription => "property-description",
            SlotKind::Code => "code",
            SlotKind::DataExample => "data-example",
        }
    }

    /// Whether `value` is acceptable for a slot of this kind.
    pub fn accepts(self, value: &str) -> bool {
        match self {
            SlotKind::Integer => value.trim().parse::<u64>().is_ok_and(|n| n > 0),
            _ => true,
        }
    }
}

macro_rules! str_enum_from_str {
    ($ty:ty, $what:literal, $all:expr) => {
        impl FromStr for $ty {
            type Err = UnknownValue;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $all.into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| UnknownValue { what: $what, value: s.to_string() })
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} `{value}`")]
pub struct UnknownValue {
    pub what: &'static str,
    pub value: String,
}

str_enum_from_str!(Classification, "classification", Classification::ALL);
str_enum_from_str!(ScopeKind, "scope", [ScopeKind::Session, ScopeKind::OneShot, ScopeKind::Interactive]);
str_enum_from_str!(SlotKind, "slot kind", SlotKind::ALL);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementTemplate {
    pub text: String,
    pub optional: bool,
    pub condition: Option<String>,
}

impl StatementTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), optional: false, condition: None }
    }

    pub fn optional(text: impl Into<String>) -> Self {
        Self { text: text.into(), optional: true, condition: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub kind: SlotKind,
    pub required: bool,
    pub default: Option<String>,
}

impl SlotSpec {
    pub fn required(name: &str, kind: SlotKind) -> Self {
        Self { name: name.into(), kind, required: true, default: None }
    }

    pub fn with_default(name: &str, kind: SlotKind, default: &str) -> Self {
        Self { name: name.into(), kind, required: false, default: Some(default.into()) }
    }

    pub fn optional(name: &str, kind: SlotKind) -> Self {
        Self { name: name.into(), kind, required: false, default: None }
    }
}

/// Directed: the output of `from` feeds the context of `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionEdge {
    pub from: String,
    pub to: String,
    pub rationale: String,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDescriptor {
    pub id: String,
    pub name: String,
    pub classification: Classification,
    pub intent: String,
    pub motivation: String,
    pub scope_kind: ScopeKind,
    pub statements: Vec<StatementTemplate>,
    pub default_prompt: String,
    pub slots: Vec<SlotSpec>,
    pub combines_with: Vec<CompositionEdge>,
    pub provenance: String,
}

impl PatternDescriptor {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn is_external(&self) -> bool {
        self.classification == Classification::External
    }

    pub fn has_edge_to(&self, target: &str) -> bool {
        self.combines_with.iter().any(|e| e.to == target)
    }
}

pub fn is_pattern_id(s: &str) -> bool {
    !s.is_empty()
        && s.split('-')
            .all(|part| !part.is_empty() && part.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()))
        && s.starts_with(|c: char| c.is_ascii_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "defect", rename_all = "kebab-case")]
pub enum Defect {
    DuplicateId { id: String },
    BadId { id: String },
    DanglingEdge { from: String, to: String },
    EdgeSourceMismatch { pattern: String, from: String },
    UnboundPlaceholder { pattern: String, placeholder: String },
    UnusedSlot { pattern: String, slot: String },
    DuplicateSlot { pattern: String, slot: String },
    BadSlotName { pattern: String, slot: String },
    RequiredWithDefault { pattern: String, slot: String },
    BadDefault { pattern: String, slot: String },
    EmptyStatement { pattern: String, index: usize },
    ExternalWithStatements { pattern: String },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::DuplicateId { id } => write!(f, "duplicate pattern id `{id}`"),
            Defect::BadId { id } => write!(f, "`{id}` is not a kebab-case identifier"),
            Defect::DanglingEdge { from, to } => write!(f, "edge {from} -> {to} targets an unknown pattern"),
            Defect::EdgeSourceMismatch { pattern, from } => {
                write!(f, "pattern `{pattern}` declares an edge starting at `{from}`")
            }
            Defect::UnboundPlaceholder { pattern, placeholder } => {
                write!(f, "`{pattern}` uses {{{placeholder}}} without declaring the slot")
            }
            Defect::UnusedSlot { pattern, slot } => write!(f, "`{pattern}` declares slot `{slot}` but never uses it"),
            Defect::DuplicateSlot { pattern, slot } => write!(f, "`{pattern}` declares slot `{slot}` twice"),
            Defect::BadSlotName { pattern, slot } => write!(f, "`{pattern}` has invalid slot name `{slot}`"),
            Defect::RequiredWithDefault { pattern, slot } => {
                write!(f, "`{pattern}` slot `{slot}` is required but has a default")
            }
            Defect::BadDefault { pattern, slot } => {
                write!(f, "`{pattern}` slot `{slot}` has a default its kind rejects")
            }
            Defect::EmptyStatement { pattern, index } => write!(f, "`{pattern}` statement {index} is empty"),
            Defect::ExternalWithStatements { pattern } => {
                write!(f, "external stub `{pattern}` must not carry statements")
            }
        }
    }
}

/// Checks the invariants that hold for one descriptor in isolation.
pub fn descriptor_defects(p: &PatternDescriptor) -> Vec<Defect> {
    let pattern = p.id.clone();
    let mut defects = Vec::new();
    if !is_pattern_id(&p.id) {
        defects.push(Defect::BadId { id: p.id.clone() });
    }
    let mut declared = BTreeSet::new();
    for slot in &p.slots {
        if !is_slot_name(&slot.name) {
            defects.push(Defect::BadSlotName { pattern: pattern.clone(), slot: slot.name.clone() });
        }
        if !declared.insert(slot.name.as_str()) {
            defects.push(Defect::DuplicateSlot { pattern: pattern.clone(), slot: slot.name.clone() });
        }
        if slot.required && slot.default.is_some() {
            defects.push(Defect::RequiredWithDefault { pattern: pattern.clone(), slot: slot.name.clone() });
        }
        if let Some(d) = &slot.default {
            if !slot.kind.accepts(d) {
                defects.push(Defect::BadDefault { pattern: pattern.clone(), slot: slot.name.clone() });
            }
        }
    }
    let mut used = BTreeSet::new();
    let texts = p.statements.iter().map(|s| s.text.as_str()).chain(std::iter::once(p.default_prompt.as_str()));
    for text in texts {
        for ph in placeholders(text) {
            if !declared.contains(ph.name.as_str()) {
                defects.push(Defect::UnboundPlaceholder { pattern: pattern.clone(), placeholder: ph.name.clone() });
            }
            used.insert(ph.name);
        }
    }
    for slot in &p.slots {
        if !used.contains(&slot.name) {
            defects.push(Defect::UnusedSlot { pattern: pattern.clone(), slot: slot.name.clone() });
        }
    }
    for (index, s) in p.statements.iter().enumerate() {
        if s.text.trim().is_empty() {
            defects.push(Defect::EmptyStatement { pattern: pattern.clone(), index });
        }
    }
    if p.is_external() && !p.statements.is_empty() {
        defects.push(Defect::ExternalWithStatements { pattern: pattern.clone() });
    }
    for e in &p.combines_with {
        if e.from != p.id {
            defects.push(Defect::EdgeSourceMismatch { pattern: pattern.clone(), from: e.from.clone() });
        }
    }
    defects
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown pattern `{0}`")]
pub struct UnknownPattern(pub String);

/// An immutable set of pattern descriptors.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Catalog {
    patterns: Vec<PatternDescriptor>,
}

impl Catalog {
    /// Builds a catalog without validating it; see [`validate_catalog`].
    pub fn new(patterns: Vec<PatternDescriptor>) -> Self {
        Self { patterns }
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[PatternDescriptor] {
        &self.patterns
    }

    pub fn contains(&self, id: &str) -> bool {
        self.patterns.iter().any(|p| p.id == id)
    }

    pub fn get(&self, id: &str) -> Result<&PatternDescriptor, UnknownPattern> {
        self.patterns.iter().find(|p| p.id == id).ok_or_else(|| UnknownPattern(id.to_string()))
    }

    /// Entries of one classification, sorted by id.
    pub fn by_classification(&self, class: Classification) -> Vec<&PatternDescriptor> {
        let mut out: Vec<_> = self.patterns.iter().filter(|p| p.classification == class).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Whether the catalog has a directed edge `from -> to`.
    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.get(from).is_ok_and(|p| p.has_edge_to(to))
    }

    pub fn edges(&self) -> impl Iterator<Item = &CompositionEdge> {
        self.patterns.iter().flat_map(|p| p.combines_with.iter())
    }

    /// Adds or replaces entries, keeping ids unique. Later entries win.
    pub fn extend(&mut self, extra: impl IntoIterator<Item = PatternDescriptor>) {
        for p in extra {
            match self.patterns.iter_mut().find(|q| q.id == p.id) {
                Some(slot) => *slot = p,
                None => self.patterns.push(p),
            }
        }
    }
}

pub fn get_pattern<'c>(catalog: &'c Catalog, id: &str) -> Result<&'c PatternDescriptor, UnknownPattern> {
    catalog.get(id)
}

pub fn list_by_classification(catalog: &Catalog, class: Classification) -> Vec<&PatternDescriptor> {
    catalog.by_classification(class)
}

/// Every invariant violation in the catalog. Empty means valid.
pub fn validate_catalog(catalog: &Catalog) -> Vec<Defect> {
    let mut defects = Vec::new();
    let mut seen = BTreeSet::new();
    for p in catalog.patterns() {
        if !seen.insert(p.id.as_str()) {
            defects.push(Defect::DuplicateId { id: p.id.clone() });
        }
        defects.extend(descriptor_defects(p));
    }
    for e in catalog.edges() {
        if !catalog.contains(&e.to) {
            defects.push(Defect::DanglingEdge { from: e.from.clone(), to: e.to.clone() });
        }
    }
    defects
}

// ---------------------------------------------------------------------------
// Built-in data
// ---------------------------------------------------------------------------

struct Builder(PatternDescriptor);

impl Builder {
    fn new(id: &str, name: &str, classification: Classification, scope_kind: ScopeKind) -> Self {
        Builder(PatternDescriptor {
            id: id.into(),
            name: name.into(),
            classification,
            intent: String::new(),
            motivation: String::new(),
            scope_kind,
            statements: Vec::new(),
            default_prompt: String::new(),
            slots: Vec::new(),
            combines_with: Vec::new(),
            provenance: String::new(),
        })
    }

    fn about(mut self, intent: &str, motivation: &str, provenance: &str) -> Self {
        self.0.intent = intent.into();
        self.0.motivation = motivation.into();
        self.0.provenance = provenance.into();
        self
    }

    fn stmt(mut self, text: &str) -> Self {
        self.0.statements.push(StatementTemplate::new(text));
        self
    }

    fn opt(mut self, text: &str, condition: Option<&str>) -> Self {
        let mut s = StatementTemplate::optional(text);
        s.condition = condition.map(Into::into);
        self.0.statements.push(s);
        self
    }

    fn prompt(mut self, text: &str) -> Self {
        self.0.default_prompt = text.into();
        self
    }

    fn slot(mut self, slot: SlotSpec) -> Self {
        self.0.slots.push(slot);
        self
    }

    fn edge(mut self, to: &str, rationale: &str, provenance: &str) -> Self {
        let from = self.0.id.clone();
        self.0.combines_with.push(CompositionEdge {
            from,
            to: to.into(),
            rationale: rationale.into(),
            provenance: provenance.into(),
        });
        self
    }

    fn build(self) -> PatternDescriptor {
        self.0
    }
}

use Classification::*;
use SlotKind::*;

fn requirements_simulator() -> PatternDescriptor {
    Builder::new("requirements-simulator", "Requirements Simulator", RequirementsElicitation, ScopeKind::Interactive)
        .about(
            "Explore a requirements set interactively by having the model play the system and report missing requirements.",
            "Requirement gaps found late are expensive; simulating user tasks against the requirements exposes them early.",
            "Requirements Simulator: example implementation",
        )
        .stmt("I want you to act as the system")
        .stmt("Use the requirements to guide your behavior")
        .stmt("I will ask you to do X, and you will tell me if X is possible given the requirements.")
        .stmt("If X is possible, explain why using the requirements.")
        .stmt("If I can't do X based on the requirements, write the missing requirements needed in format {format}.")
        .prompt(
            "Now, I want you to act as this system. Use the requirements to guide your behavior. \
             I am going to say, I want to do X, and you will tell me if X is possible given the requirements. \
             If X is possible, provide a step-by-step set of instructions on how I would accomplish it and provide \
             additional details that would help implement the requirement. If I can't do X based on the requirements, \
             write the missing requirements to make it possible as {format}.",
        )
        .slot(SlotSpec::with_default("format", FormatName, "user stories"))
        .edge(
            "visualization-generator",
            "textual screen descriptions gain wireframe image prompts",
            "Requirements Simulator: consequences",
        )
        .build()
}

fn specification_disambiguation() -> PatternDescriptor {
    Builder::new(
        "specification-disambiguation",
        "Specification Disambiguation",
        RequirementsElicitation,
        ScopeKind::OneShot,
    )
    .about(
        "Review a specification written by non-specialists and flag ambiguous or under-specified items.",
        "Requirements lose context on their way from customers to developers; catching ambiguity before hand-off is cheap.",
        "Specification Disambiguation: example implementation",
    )
    .stmt("Within this scope")
    .stmt("Consider these requirements or specifications")
    .stmt("Point out any areas of ambiguity or potentially unintended outcomes")
    .prompt(
        "The following will represent {subject}. Point out any areas that could be construed as ambiguous \
         or lead to unintended outcomes. Provide ways in which the language can be more precise.",
    )
    .slot(SlotSpec::with_default("subject", Text, "system requirements"))
    .edge("persona", "review the specification from several stakeholder perspectives", "Specification Disambiguation: consequences")
    .edge("api-generator", "reifying the specification as an API surfaces further ambiguity", "Specification Disambiguation: consequences")
    .edge("api-simulator", "simulating the described API surfaces further ambiguity", "Specification Disambiguation: consequences")
    .edge("requirements-simulator", "simulating the described system surfaces further ambiguity", "Specification Disambiguation: consequences")
    .build()
}

fn change_request_simulation() -> PatternDescriptor {
    Builder::new("change-request-simulation", "Change Request Simulation", RequirementsElicitation, ScopeKind::OneShot)
        .about(
            "Estimate the impact of a proposed change on parts of the system.",
            "Stakeholders need quick, neutral feedback on the scope of a change before committing to it.",
            "Change Request Simulation: example implementation",
        )
        .stmt("My software system architecture is {architecture}")
        .stmt("The system must adhere to these constraints")
        .stmt("I want you to simulate a change to the system that I will describe")
        .stmt("Describe the impact of that change in terms of {aspect}")
        .stmt("This is the change to my system")
        .prompt(
            "My software system uses {architecture}. I want you to simulate a change where {change}. \
             List which {aspect} will need to be modified.",
        )
        .slot(SlotSpec::with_default("architecture", Text, "the OpenAPI specification that you generated earlier"))
        .slot(SlotSpec::required("change", Text))
        .slot(SlotSpec::with_default("aspect", PropertyDescription, "functions and which files"))
        .build()
}

fn api_generator() -> PatternDescriptor {
    Builder::new("api-generator", "API Generator", SystemDesign, ScopeKind::OneShot)
        .about(
            "Produce an API specification from natural-language requirements or a system description.",
            "Hand-writing API specifications is slow, so few designs get explored and specs arrive late.",
            "API Generator: example implementation",
        )
        .stmt("Using system description {system}")
        .stmt("Generate an API specification for the system")
        .stmt("The API specification should be in format {format}")
        .prompt("Generate an {format} specification for {system} that would implement the listed requirements.")
        .slot(SlotSpec::with_default("format", FormatName, "OpenAPI"))
        .slot(SlotSpec::with_default("system", Text, "a web application"))
        .edge("api-simulator", "generate a specification, then exercise it", "API Generator: consequences")
        .edge(
            "data-guided-refactoring",
            "reshape the generated API around new data formats",
            "API Generator: consequences",
        )
        .build()
}

fn api_simulator() -> PatternDescriptor {
    Builder::new("api-simulator", "API Simulator", SystemDesign, ScopeKind::Interactive)
        .about(
            "Have the model act as an API described by a specification and answer typed requests.",
            "Trying an API design before it exists exposes omissions and awkward ergonomics.",
            "API Simulator: example implementation",
        )
        .stmt("Act as the described system using specification {spec_format}")
        .stmt("I will type in requests to the API in format {request_format}")
        .stmt("You will respond with the appropriate response in format {response_format} based on specification {spec_format}")
        .prompt(
            "Act as this web application based on the {spec_format} specification. I will type in {request_format} \
             in plain text and you will respond with the appropriate {response_format} based on the {spec_format} specification.",
        )
        .slot(SlotSpec::with_default("spec_format", FormatName, "OpenAPI"))
        .slot(SlotSpec::with_default("request_format", FormatName, "HTTP requests"))
        .slot(SlotSpec::with_default("response_format", FormatName, "HTTP response"))
        .edge("fewshot-example-generator", "recorded interactions become usage examples", "API Simulator: consequences")
        .edge("change-request-simulation", "reason about later changes against the simulated API", "API Simulator: consequences")
        .build()
}

fn fewshot_example_generator() -> PatternDescriptor {
    Builder::new("fewshot-example-generator", "Few-shot Example Generator", SystemDesign, ScopeKind::OneShot)
        .about(
            "Have the model write usage examples that can later stand in for the code itself in prompts.",
            "Large systems exceed the context window; compact usage examples remind the model of earlier designs.",
            "Few-shot Code Example Generation: example implementation",
        )
        .stmt("I am going to provide you {subject}")
        .stmt("Create a set of {count} examples that demonstrate usage of {target}")
        .stmt("Make the examples as complete as possible in their coverage")
        .opt(
            "The examples should be based on the public interfaces of {interfaces}",
            Some("when only the public surface matters"),
        )
        .opt("The examples should focus on {focus}", Some("when one feature should dominate the examples"))
        .prompt(
            "I am going to provide you {subject}. Create a set of {count} examples that demonstrate usage of {target}\
             [[ related to {focus}]]. Make the examples as complete as possible in their coverage.\
             [[ The examples should be based on the public interfaces of {interfaces}.]]",
        )
        .slot(SlotSpec::with_default("subject", Text, "code"))
        .slot(SlotSpec::with_default("count", Integer, "10"))
        .slot(SlotSpec::with_default("target", Text, "this code"))
        .slot(SlotSpec::optional("focus", Text))
        .slot(SlotSpec::optional("interfaces", Text))
        .build()
}

fn dsl_creation() -> PatternDescriptor {
    Builder::new("dsl-creation", "Domain-Specific Language (DSL) Creation", SystemDesign, ScopeKind::OneShot)
        .about(
            "Have the model design a compact language for describing part of the system.",
            "A terse notation fits more system context into a limited prompt.",
            "DSL Creation: example implementation",
        )
        .stmt("I want you to create a domain-specific language for {domain}")
        .stmt("The syntax of the language must adhere to the following constraints")
        .stmt("Explain the language to me and provide some examples")
        .prompt(
            "I want you to create a domain-specific language to document {domain}.\
             [[ The syntax of the language should be {syntax}.]] Explain the language to me and provide some examples.",
        )
        .slot(SlotSpec::with_default("domain", Text, "requirements"))
        .slot(SlotSpec::optional("syntax", Text))
        .edge("fewshot-example-generator", "examples teach users the generated language", "DSL Creation: consequences")
        .build()
}

fn architectural_possibilities() -> PatternDescriptor {
    Builder::new("architectural-possibilities", "Architectural Possibilities", SystemDesign, ScopeKind::OneShot)
        .about(
            "Generate several alternative architectures, described along a chosen aspect.",
            "Teams consider few architectures because each one costs effort to sketch.",
            "Architectural Possibilities: example implementation",
        )
        .stmt("I am developing a software system with {system}")
        .stmt("The system must adhere to these constraints")
        .stmt("Describe {count} possible architectures for this system")
        .stmt("Describe the architecture in terms of {aspect}")
        .prompt(
            "I am developing {system}.[[ The system must adhere to these constraints: {constraints}.]] \
             Describe {count} possible architectures for this system. Describe the architecture with respect to {aspect}.",
        )
        .slot(SlotSpec::required("system", Text))
        .slot(SlotSpec::optional("constraints", Text))
        .slot(SlotSpec::with_default("count", Text, "three"))
        .slot(SlotSpec::with_default("aspect", PropertyDescription, "modules and the functionality that each module contains"))
        .edge("api-generator", "an architecture seeds API generation", "Architectural Possibilities: consequences")
        .edge("api-simulator", "the derived API can then be simulated", "Architectural Possibilities: consequences")
        .edge("change-request-simulation", "probe how hard later changes are under each architecture", "Architectural Possibilities: consequences")
        .build()
}

fn code_clustering() -> PatternDescriptor {
    Builder::new("code-clustering", "Code Clustering", CodeQuality, ScopeKind::Session)
        .about(
            "Keep code with one property apart from code with another, such as impure from pure functions.",
            "Without clustering guidance generated code tends to be monolithic and hard to maintain.",
            "Code Clustering: example implementation",
        )
        .stmt("Within this scope")
        .stmt("I want you to write or refactor code in a way that separates code with property {property_y} from code that has property {property_z}.")
        .opt("These are examples of code with property {property_y}.", None)
        .opt("These are examples of code with property {property_z}.", None)
        .prompt(
            "Whenever I ask you to write code, I want you to write code in a way that separates {property_y} \
             from {property_z}.",
        )
        .slot(SlotSpec::with_default(
            "property_y",
            PropertyDescription,
            "functions with side-effects, such as file system, database, or network access,",
        ))
        .slot(SlotSpec::with_default("property_z", PropertyDescription, "the functions without side-effects"))
        .edge("fewshot-example-generator", "examples demonstrate a custom clustering property", "Code Clustering: example implementation")
        .build()
}

fn intermediate_abstraction() -> PatternDescriptor {
    Builder::new("intermediate-abstraction", "Intermediate Abstraction", CodeQuality, ScopeKind::Session)
        .about(
            "Insert an abstraction layer between business logic and the code it depends on.",
            "Generated code tends to call dependencies directly, coupling logic to third-party libraries.",
            "Intermediate Abstraction: example implementation",
        )
        .stmt("If you write or refactor code with property {logic}")
        .stmt("that uses other code with property {dependency}")
        .opt("Define property {logic}", None)
        .opt("Define property {dependency}", None)
        .stmt("Insert an intermediate abstraction between {logic} and {dependency}")
        .opt("The abstraction should have these properties: {abstraction_properties}", None)
        .prompt(
            "Whenever I ask you to write code, I want you to separate the {logic} as much as possible from any \
             underlying {dependencies}. Whenever {logic} uses a {dependency}, please write an intermediate abstraction \
             that the {logic} uses instead so that the {dependency} could be replaced with an alternate library if needed.\
             [[ The intermediate abstraction should have these properties: {abstraction_properties}.]]",
        )
        .slot(SlotSpec::with_default("logic", PropertyDescription, "business logic"))
        .slot(SlotSpec::with_default("dependency", PropertyDescription, "3rd-party library"))
        .slot(SlotSpec::with_default("dependencies", PropertyDescription, "3rd-party libraries"))
        .slot(SlotSpec::optional("abstraction_properties", PropertyDescription))
        .edge("fewshot-example-generator", "examples of alternative libraries shape a portable interface", "Intermediate Abstraction: consequences")
        .build()
}

fn principled_code() -> PatternDescriptor {
    Builder::new("principled-code", "Principled Code", CodeQuality, ScopeKind::Session)
        .about(
            "Name a well-known design principle and have all code follow it.",
            "Developers can name a methodology far more easily than spell out its rules.",
            "Principled Code: example implementation",
        )
        .stmt("Within this scope")
        .stmt("Generate, refactor, or create code to adhere to named Principle {principle}")
        .prompt("From now on, whenever you write, refactor, or review code, make sure it adheres to {principle}.")
        .slot(SlotSpec::required("principle", PrincipleName))
        .build()
}

fn hidden_assumptions() -> PatternDescriptor {
    Builder::new("hidden-assumptions", "Hidden Assumptions", CodeQuality, ScopeKind::OneShot)
        .about(
            "List the assumptions a piece of code makes, optionally with how hard each is to change.",
            "Unstated assumptions lead people to misuse or mis-modify code, especially generated code.",
            "Hidden Assumptions: example implementation",
        )
        .stmt("Within this scope")
        .stmt("List the assumptions that this code makes")
        .opt(
            "Estimate how hard it would be to change these assumptions or their likelihood of changing",
            Some("when planning for future change"),
        )
        .prompt(
            "List the assumptions that this code makes and how hard it would be to change each of them \
             given the current code structure.",
        )
        .edge(
            "data-guided-refactoring",
            "refactor the code to remove the listed assumptions",
            "Hidden Assumptions: example implementation",
        )
        .build()
}

fn pseudo_code_refactoring() -> PatternDescriptor {
    Builder::new("pseudo-code-refactoring", "Pseudo-code Refactoring", Refactoring, ScopeKind::OneShot)
        .about(
            "Steer a refactoring with a pseudo-code outline of the desired structure.",
            "Spelling out exact code structure duplicates the work the model should do.",
            "Pseudo-code Refactoring: example implementation",
        )
        .stmt("Refactor the code")
        .stmt("So that it matches this pseudo-code")
        .stmt("Match the structure of the pseudo-code as closely as possible")
        .prompt(
            "Refactor the following code to match the following psuedo-code. Match the structure of the pseudo-code \
             as closely as possible.\n```\n{pseudocode}\n```",
        )
        .slot(SlotSpec::required("pseudocode", Code))
        .build()
}

fn data_guided_refactoring() -> PatternDescriptor {
    Builder::new("data-guided-refactoring", "Data-guided Refactoring", Refactoring, ScopeKind::OneShot)
        .about(
            "Refactor code to consume or produce a new data format given only an example of it.",
            "Describing each logic change for a new data format takes longer than making it.",
            "Data-guided Refactoring: example implementation",
        )
        .stmt("Refactor the code")
        .stmt("So that its input, output, or stored data format is {format}")
        .stmt("Provide one or more examples of {format}")
        .prompt("Let's refactor {target} so that {subject} has the following format {format}")
        .slot(SlotSpec::required("target", Code))
        .slot(SlotSpec::required("subject", Text))
        .slot(SlotSpec::required("format", DataExample))
        .build()
}

fn output_automater() -> PatternDescriptor {
    Builder::new("output-automater", "Output Automater", External, ScopeKind::Session)
        .about(
            "Have the model emit a script that automates applying its own output.",
            "Applying multi-file output by hand is tedious and error-prone.",
            "external prior-work pattern",
        )
        .prompt(
            "From now on, whenever you generate code that spans more than one file, generate a python script that can \
             be run to automatically create the specified files or make changes to existing files to insert the generated code.",
        )
        .build()
}

fn persona() -> PatternDescriptor {
    Builder::new("persona", "Persona", External, ScopeKind::Session)
        .about(
            "Have the model answer from a named role's point of view.",
            "A role name carries a whole set of expectations at once.",
            "external prior-work pattern",
        )
        .prompt("From now on, act as {persona}.")
        .slot(SlotSpec::required("persona", Text))
        .build()
}

fn visualization_generator() -> PatternDescriptor {
    Builder::new("visualization-generator", "Visualization Generator", External, ScopeKind::Session)
        .about(
            "Have the model write prompts for an image generator alongside its text.",
            "Pictures of a simulated screen are easier to discuss than prose.",
            "external prior-work pattern",
        )
        .prompt(
            "In addition to the textual screen description, provide a Dall-E prompt that I can use to generate \
             wireframes of what the screen might look like.",
        )
        .build()
}

/// The 14 classified patterns followed by the three external stubs.
pub fn builtin_patterns() -> Vec<PatternDescriptor> {
    vec![
        requirements_simulator(),
        specification_disambiguation(),
        change_request_simulation(),
        api_generator(),
        api_simulator(),
        fewshot_example_generator(),
        dsl_creation(),
        architectural_possibilities(),
        code_clustering(),
        intermediate_abstraction(),
        principled_code(),
        hidden_assumptions(),
        pseudo_code_refactoring(),
        data_guided_refactoring(),
        output_automater(),
        persona(),
        visualization_generator(),
    ]
}

pub fn load_builtin_catalog() -> Catalog {
    Catalog::new(builtin_patterns())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&PatternDescriptor]) -> Vec<String> {
        v.iter().map(|p| p.id.clone()).collect()
    }

    #[test]
    fn builtin_is_valid() {
        let cat = load_builtin_catalog();
        assert_eq!(cat.len(), 17);
        assert_eq!(validate_catalog(&cat), vec![]);
    }

    #[test]
    fn classification_sizes() {
        let cat = load_builtin_catalog();
        let sizes: Vec<usize> = Classification::ALL.iter().map(|c| cat.by_classification(*c).len()).collect();
        assert_eq!(sizes, vec![3, 5, 4, 2, 3]);
        assert_eq!(
            ids(&cat.by_classification(RequirementsElicitation)),
            ["change-request-simulation", "requirements-simulator", "specification-disambiguation"]
        );
        assert_eq!(ids(&cat.by_classification(Refactoring)), ["data-guided-refactoring", "pseudo-code-refactoring"]);
    }

    #[test]
    fn lookups() {
        let cat = load_builtin_catalog();
        assert_eq!(cat.get("api-generator").unwrap().statements.len(), 3);
        assert_eq!(cat.get("nonexistent"), Err(UnknownPattern("nonexistent".into())));
        let persona = cat.get("persona").unwrap();
        assert!(persona.is_external() && persona.statements.is_empty());
    }

    #[test]
    fn required_edges_present() {
        let cat = load_builtin_catalog();
        let expected = [
            ("requirements-simulator", "visualization-generator"),
            ("specification-disambiguation", "persona"),
            ("specification-disambiguation", "api-generator"),
            ("specification-disambiguation", "api-simulator"),
            ("specification-disambiguation", "requirements-simulator"),
            ("api-generator", "api-simulator"),
            ("api-generator", "data-guided-refactoring"),
            ("api-simulator", "fewshot-example-generator"),
            ("api-simulator", "change-request-simulation"),
            ("architectural-possibilities", "api-generator"),
            ("architectural-possibilities", "api-simulator"),
            ("architectural-possibilities", "change-request-simulation"),
            ("dsl-creation", "fewshot-example-generator"),
            ("code-clustering", "fewshot-example-generator"),
            ("intermediate-abstraction", "fewshot-example-generator"),
            ("hidden-assumptions", "data-guided-refactoring"),
        ];
        for (from, to) in expected {
            assert!(cat.has_edge(from, to), "{from} -> {to}");
        }
        assert!(!cat.has_edge("api-simulator", "api-generator"));
    }

    #[test]
    fn dangling_edge_and_unbound_placeholder() {
        let mut pats = builtin_patterns();
        let from = pats[0].id.clone();
        pats[0].combines_with.push(CompositionEdge {
            from,
            to: "ghost".into(),
            rationale: String::new(),
            provenance: String::new(),
        });
        let defects = validate_catalog(&Catalog::new(pats));
        assert_eq!(defects, vec![Defect::DanglingEdge { from: "requirements-simulator".into(), to: "ghost".into() }]);

        let mut pats = builtin_patterns();
        pats[3].statements.push(StatementTemplate::new("{undeclared}"));
        let defects = validate_catalog(&Catalog::new(pats));
        assert_eq!(
            defects,
            vec![Defect::UnboundPlaceholder { pattern: "api-generator".into(), placeholder: "undeclared".into() }]
        );
    }

    #[test]
    fn slot_rules() {
        let mut p = principled_code();
        p.slots[0].default = Some("SOLID".into());
        assert!(descriptor_defects(&p)
            .contains(&Defect::RequiredWithDefault { pattern: "principled-code".into(), slot: "principle".into() }));
        p.slots.push(SlotSpec::with_default("n", Integer, "0"));
        let d = descriptor_defects(&p);
        assert!(d.contains(&Defect::BadDefault { pattern: "principled-code".into(), slot: "n".into() }));
        assert!(d.contains(&Defect::UnusedSlot { pattern: "principled-code".into(), slot: "n".into() }));
        let mut ext = persona();
        ext.statements.push(StatementTemplate::new("x"));
        assert!(descriptor_defects(&ext).contains(&Defect::ExternalWithStatements { pattern: "persona".into() }));
        assert!(Integer.accepts("10") && !Integer.accepts("-1") && !Integer.accepts("ten"));
    }

    #[test]
    fn duplicate_ids() {
        let mut pats = builtin_patterns();
        pats.push(persona());
        assert!(validate_catalog(&Catalog::new(pats)).contains(&Defect::DuplicateId { id: "persona".into() }));
    }

    #[test]
    fn id_syntax() {
        assert!(is_pattern_id("api-generator"));
        assert!(is_pattern_id("p"));
        assert!(!is_pattern_id("Api"));
        assert!(!is_pattern_id("a--b"));
        assert!(!is_pattern_id("-a"));
        assert!(!is_pattern_id("1a"));
    }
}
