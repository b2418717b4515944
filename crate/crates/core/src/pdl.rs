//! Pattern Definition Language.
//!
//! A line-oriented text format holding pattern blocks and pipeline blocks:
//!
//! ```text
//! # comment
//! pattern principled-code
//!   name "Principled Code"
//!   classification code-quality
//!   scope session
//!   stmt "Generate, refactor, or create code to adhere to named Principle {principle}"
//!   prompt "From now on, ... make sure it adheres to {principle}."
//!   slot principle: principle-name required
//! end
//!
//! pipeline design
//!   context requirements
//!   use api-generator with format="OpenAPI"
//!   use api-simulator
//! end
//! ```
//!
//! Parsing never fails outright; every problem is reported as a
//! [`Diagnostic`] and the offending block or step is dropped.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{
    descriptor_defects, is_pattern_id, Classification, CompositionEdge, Defect, PatternDescriptor, ScopeKind, SlotKind,
    SlotSpec, StatementTemplate,
};
use crate::renderer::{is_slot_name, placeholders};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: String,
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub span: Option<SourceSpan>,
}

impl Diagnostic {
    pub fn error(code: &str, message: impl Into<String>, span: Option<SourceSpan>) -> Self {
        Self { severity: Severity::Error, code: code.into(), message: message.into(), span }
    }

    pub fn warning(code: &str, message: impl Into<String>, span: Option<SourceSpan>) -> Self {
        Self { severity: Severity::Warning, code: code.into(), message: message.into(), span }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if let Some(s) = &self.span {
            write!(f, "{}:{}:{}: ", s.file, s.line, s.column)?;
        }
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStep {
    pub pattern_id: String,
    pub bindings: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<SourceSpan>,
}

impl PipelineStep {
    pub fn new(pattern_id: &str) -> Self {
        Self { pattern_id: pattern_id.into(), bindings: BTreeMap::new(), span: None }
    }

    pub fn bind(mut self, slot: &str, value: &str) -> Self {
        self.bindings.insert(slot.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    pub steps: Vec<PipelineStep>,
    /// Named external inputs, e.g. a requirements document.
    pub context_refs: Vec<String>,
}

impl PipelineSpec {
    pub fn new(name: &str, steps: Vec<PipelineStep>) -> Self {
        Self { name: name.into(), steps, context_refs: Vec::new() }
    }

    pub fn with_context(mut self, name: &str) -> Self {
        self.context_refs.push(name.into());
        self
    }
}

/// Everything found in one PDL source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PdlFile {
    pub patterns: Vec<PatternDescriptor>,
    pub pipelines: Vec<PipelineSpec>,
    pub diagnostics: Vec<Diagnostic>,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Colon,
    Eq,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    /// 1-based character column.
    column: usize,
    /// Length in characters.
    length: usize,
}

struct LexError {
    code: &'static str,
    message: String,
    column: usize,
    length: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '/' | '+')
}

fn lex_line(line: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        let start = i;
        let tok = match c {
            ':' => {
                i += 1;
                Tok::Colon
            }
            '=' => {
                i += 1;
                Tok::Eq
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                let mut closed = false;
                while i < chars.len() {
                    match chars[i] {
                        '"' => {
                            closed = true;
                            i += 1;
                            break;
                        }
                        '\\' => {
                            let esc = chars.get(i + 1).copied();
                            let decoded = match esc {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('r') => '\r',
                                Some('t') => '\t',
                                _ => {
                                    return Err(LexError {
                                        code: "bad-escape",
                                        message: "unsupported escape sequence".into(),
                                        column: i + 1,
                                        length: if esc.is_some() { 2 } else { 1 },
                                    })
                                }
                            };
                            s.push(decoded);
                            i += 2;
                        }
                        other => {
                            s.push(other);
                            i += 1;
                        }
                    }
                }
                if !closed {
                    return Err(LexError {
                        code: "unterminated-string",
                        message: "string is missing its closing quote".into(),
                        column: start + 1,
                        length: chars.len() - start,
                    });
                }
                Tok::Str(s)
            }
            c if is_word_char(c) => {
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
                Tok::Word(chars[start..i].iter().collect())
            }
            other => {
                return Err(LexError {
                    code: "bad-token",
                    message: format!("unexpected character `{}`", other.escape_debug()),
                    column: start + 1,
                    length: 1,
                })
            }
        };
        out.push(Token { tok, column: start + 1, length: i - start });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Line<'a> {
    number: usize,
    text: &'a str,
}

struct Parser<'a> {
    file: String,
    lines: Vec<Line<'a>>,
    pos: usize,
    out: PdlFile,
}

enum BlockEnd {
    End,
    Interrupted,
    Eof,
}

impl<'a> Parser<'a> {
    fn new(file: &str, text: &'a str) -> Self {
        let lines = text
            .split('\n')
            .enumerate()
            .map(|(i, l)| Line { number: i + 1, text: l.strip_suffix('\r').unwrap_or(l) })
            .collect();
        Self { file: file.into(), lines, pos: 0, out: PdlFile::default() }
    }

    fn span(&self, line: usize, column: usize, length: usize) -> SourceSpan {
        SourceSpan { file: self.file.clone(), line, column, length }
    }

    fn tok_span(&self, line: usize, t: &Token) -> SourceSpan {
        self.span(line, t.column, t.length)
    }

    fn line_span(&self, line: usize) -> SourceSpan {
        let text = self.lines.get(line - 1).map(|l| l.text).unwrap_or("");
        let lead = text.chars().take_while(|c| c.is_whitespace()).count();
        let len = text.chars().count() - lead;
        self.span(line, lead + 1, len)
    }

    fn err(&mut self, code: &str, msg: impl Into<String>, span: SourceSpan) {
        self.out.diagnostics.push(Diagnostic::error(code, msg, Some(span)));
    }

    fn warn(&mut self, code: &str, msg: impl Into<String>, span: SourceSpan) {
        self.out.diagnostics.push(Diagnostic::warning(code, msg, Some(span)));
    }

    /// Next non-blank line, lexed. Lex errors are reported and the line skipped.
    fn next_tokens(&mut self) -> Option<(usize, Vec<Token>)> {
        while self.pos < self.lines.len() {
            let line = &self.lines[self.pos];
            let number = line.number;
            self.pos += 1;
            match lex_line(line.text) {
                Ok(toks) if toks.is_empty() => continue,
                Ok(toks) => return Some((number, toks)),
                Err(e) => {
                    let span = self.span(number, e.column, e.length);
                    self.err(e.code, e.message, span);
                    // A lex error inside a block still counts as a line of the block.
                    return Some((number, Vec::new()));
                }
            }
        }
        None
    }

    fn run(mut self) -> PdlFile {
        while let Some((line, toks)) = self.next_tokens() {
            let Some(first) = toks.first() else { continue };
            match &first.tok {
                Tok::Word(w) if w == "pattern" => self.pattern_block(line, &toks),
                Tok::Word(w) if w == "pipeline" => self.pipeline_block(line, &toks),
                _ => {
                    let span = self.tok_span(line, first);
                    self.err("unexpected-line", "expected `pattern` or `pipeline` at top level", span);
                }
            }
        }
        self.out
    }

    fn header_id(&mut self, line: usize, toks: &[Token], what: &str) -> Option<String> {
        match toks.get(1) {
            Some(Token { tok: Tok::Word(id), .. }) if toks.len() == 2 => Some(id.clone()),
            Some(t) if toks.len() == 2 => {
                let span = self.tok_span(line, t);
                self.err("bad-header", format!("{what} name must be a bare identifier"), span);
                None
            }
            _ => {
                let span = self.line_span(line);
                self.err("bad-header", format!("expected `{what} <name>`"), span);
                None
            }
        }
    }

    /// Runs `field` for each line until `end`. A nested block header ends the
    /// current block early and is re-read by the caller.
    fn block_body(&mut self, mut field: impl FnMut(&mut Self, usize, &[Token])) -> BlockEnd {
        loop {
            let save = self.pos;
            let Some((line, toks)) = self.next_tokens() else { return BlockEnd::Eof };
            let Some(first) = toks.first() else {
                // Lex error already reported.
                field(self, line, &toks);
                continue;
            };
            match &first.tok {
                Tok::Word(w) if w == "end" => {
                    if toks.len() > 1 {
                        let span = self.tok_span(line, &toks[1]);
                        self.warn("trailing-tokens", "ignoring text after `end`", span);
                    }
                    return BlockEnd::End;
                }
                Tok::Word(w) if w == "pattern" || w == "pipeline" => {
                    let span = self.tok_span(line, first);
                    self.err("unterminated-block", "block is missing `end` before the next block", span);
                    self.pos = save;
                    return BlockEnd::Interrupted;
                }
                _ => field(self, line, &toks),
            }
        }
    }

    fn pattern_block(&mut self, header_line: usize, header: &[Token]) {
        let id = self.header_id(header_line, header, "pattern");
        let errors_before = self.error_count();
        let mut b = PatternBuild::default();
        let end = self.block_body(|p, line, toks| p.pattern_field(&mut b, line, toks));
        if let BlockEnd::Eof = end {
            let span = self.line_span(header_line);
            self.err("unterminated-block", "pattern block is missing `end`", span);
        }
        let Some(id) = id else { return };
        if !is_pattern_id(&id) {
            let span = self.tok_span(header_line, &header[1]);
            self.err("bad-id", format!("`{id}` is not a kebab-case identifier"), span);
        }
        self.finish_pattern(id, header_line, b, errors_before);
    }

    fn error_count(&self) -> usize {
        self.out.diagnostics.iter().filter(|d| d.is_error()).count()
    }

    fn finish_pattern(&mut self, id: String, header_line: usize, b: PatternBuild, errors_before: usize) {
        let header_span = self.line_span(header_line);
        let Some((classification, _)) = b.classification else {
            self.err("missing-field", format!("pattern `{id}` has no classification"), header_span);
            return;
        };
        let Some((scope_kind, _)) = b.scope else {
            self.err("missing-field", format!("pattern `{id}` has no scope"), header_span);
            return;
        };
        let descriptor = PatternDescriptor {
            name: b.name.clone().unwrap_or_else(|| id.clone()),
            id: id.clone(),
            classification,
            intent: b.intent.clone().unwrap_or_default(),
            motivation: b.motivation.clone().unwrap_or_default(),
            scope_kind,
            statements: b.statements.iter().map(|(s, _)| s.clone()).collect(),
            default_prompt: b.prompt.clone().map(|(p, _)| p).unwrap_or_default(),
            slots: b.slots.iter().map(|(s, _)| s.clone()).collect(),
            combines_with: b
                .edges
                .iter()
                .map(|(to, rationale, provenance, _)| CompositionEdge {
                    from: id.clone(),
                    to: to.clone(),
                    rationale: rationale.clone(),
                    provenance: provenance.clone(),
                })
                .collect(),
            provenance: b.provenance.clone().unwrap_or_default(),
        };
        // Semantic checks, each pinned to the line that caused it.
        for defect in descriptor_defects(&descriptor) {
            let (code, span) = match &defect {
                Defect::UnboundPlaceholder { placeholder, .. } => {
                    let span = b
                        .placeholder_line(placeholder)
                        .map(|(line, col, len)| self.span(line, col, len))
                        .unwrap_or_else(|| header_span.clone());
                    ("unbound-placeholder", span)
                }
                Defect::UnusedSlot { slot, .. } => ("unused-slot", b.slot_span(slot).unwrap_or(header_span.clone())),
                Defect::DuplicateSlot { slot, .. } => {
                    ("duplicate-slot", b.slot_span(slot).unwrap_or(header_span.clone()))
                }
                Defect::BadSlotName { slot, .. } => ("bad-slot-name", b.slot_span(slot).unwrap_or(header_span.clone())),
                Defect::RequiredWithDefault { slot, .. } => {
                    ("required-with-default", b.slot_span(slot).unwrap_or(header_span.clone()))
                }
                Defect::BadDefault { slot, .. } => ("bad-default", b.slot_span(slot).unwrap_or(header_span.clone())),
                Defect::EmptyStatement { index, .. } => {
                    ("empty-statement", b.statements.get(*index).map(|(_, s)| s.clone()).unwrap_or(header_span.clone()))
                }
                Defect::ExternalWithStatements { .. } => ("external-with-statements", header_span.clone()),
                // Reported at header parse time or impossible from PDL.
                Defect::BadId { .. } | Defect::EdgeSourceMismatch { .. } => continue,
                Defect::DuplicateId { .. } | Defect::DanglingEdge { .. } => continue,
            };
            self.err(code, defect.to_string(), span);
        }
        if self.out.patterns.iter().any(|p| p.id == id) {
            self.err("duplicate-id", format!("pattern `{id}` is defined twice"), header_span);
            return;
        }
        if self.error_count() == errors_before {
            self.out.patterns.push(descriptor);
        }
    }

    fn expect_string(&mut self, line: usize, toks: &[Token], idx: usize, field: &str) -> Option<String> {
        match toks.get(idx) {
            Some(Token { tok: Tok::Str(s), .. }) => Some(s.clone()),
            Some(t) => {
                let span = self.tok_span(line, t);
                self.err("expected-string", format!("`{field}` expects a quoted string"), span);
                None
            }
            None => {
                let span = self.line_span(line);
                self.err("expected-string", format!("`{field}` expects a quoted string"), span);
                None
            }
        }
    }

    fn no_trailing(&mut self, line: usize, toks: &[Token], from: usize) {
        if let Some(t) = toks.get(from) {
            let span = self.tok_span(line, t);
            self.err("trailing-tokens", "unexpected trailing tokens", span);
        }
    }

    fn pattern_field(&mut self, b: &mut PatternBuild, line: usize, toks: &[Token]) {
        let Some(first) = toks.first() else { return };
        let Tok::Word(kw) = &first.tok else {
            let span = self.tok_span(line, first);
            self.err("bad-field", "expected a field keyword", span);
            return;
        };
        let line_span = self.line_span(line);
        match kw.as_str() {
            "name" | "intent" | "motivation" | "provenance" => {
                let Some(v) = self.expect_string(line, toks, 1, kw) else { return };
                self.no_trailing(line, toks, 2);
                let slot = match kw.as_str() {
                    "name" => &mut b.name,
                    "intent" => &mut b.intent,
                    "motivation" => &mut b.motivation,
                    _ => &mut b.provenance,
                };
                if slot.is_some() {
                    self.err("duplicate-field", format!("`{kw}` given twice"), line_span);
                    return;
                }
                *slot = Some(v);
            }
            "classification" | "scope" => {
                let value = match toks.get(1) {
                    Some(Token { tok: Tok::Word(w), .. }) => w.clone(),
                    _ => {
                        self.err("bad-field", format!("`{kw}` expects a bare value"), line_span);
                        return;
                    }
                };
                self.no_trailing(line, toks, 2);
                let vspan = self.tok_span(line, &toks[1]);
                if kw == "classification" {
                    match value.parse::<Classification>() {
                        Ok(c) if b.classification.is_none() => b.classification = Some((c, vspan)),
                        Ok(_) => self.err("duplicate-field", "`classification` given twice", line_span),
                        Err(e) => self.err("bad-value", e.to_string(), vspan),
                    }
                } else {
                    match value.parse::<ScopeKind>() {
                        Ok(s) if b.scope.is_none() => b.scope = Some((s, vspan)),
                        Ok(_) => self.err("duplicate-field", "`scope` given twice", line_span),
                        Err(e) => self.err("bad-value", e.to_string(), vspan),
                    }
                }
            }
            "stmt" => {
                let Some(text) = self.expect_string(line, toks, 1, "stmt") else { return };
                let mut stmt = StatementTemplate::new(text);
                let mut i = 2;
                while i < toks.len() {
                    match &toks[i].tok {
                        Tok::Word(w) if w == "optional" && !stmt.optional => {
                            stmt.optional = true;
                            i += 1;
                        }
                        Tok::Word(w) if w == "when" && stmt.condition.is_none() => {
                            let Some(c) = self.expect_string(line, toks, i + 1, "when") else { return };
                            stmt.condition = Some(c);
                            i += 2;
                        }
                        _ => {
                            let span = self.tok_span(line, &toks[i]);
                            self.err("trailing-tokens", "expected `optional` or `when \"...\"`", span);
                            return;
                        }
                    }
                }
                let offset = toks[1].column + 1;
                b.statements.push((stmt, line_span));
                b.text_lines.push((line, offset, b.statements.last().unwrap().0.text.clone()));
            }
            "prompt" => {
                let Some(text) = self.expect_string(line, toks, 1, "prompt") else { return };
                self.no_trailing(line, toks, 2);
                b.text_lines.push((line, toks[1].column + 1, text.clone()));
                match &mut b.prompt {
                    Some((p, _)) => {
                        p.push('\n');
                        p.push_str(&text);
                    }
                    None => b.prompt = Some((text, line_span)),
                }
            }
            "slot" => self.slot_field(b, line, toks),
            "combines-with" => {
                let target = match toks.get(1) {
                    Some(Token { tok: Tok::Word(w), .. }) if is_pattern_id(w) => w.clone(),
                    Some(t) => {
                        let span = self.tok_span(line, t);
                        self.err("bad-edge", "`combines-with` expects a pattern id", span);
                        return;
                    }
                    None => {
                        self.err("bad-edge", "`combines-with` expects a pattern id", line_span);
                        return;
                    }
                };
                let Some(rationale) = self.expect_string(line, toks, 2, "combines-with") else { return };
                let provenance = match toks.get(3) {
                    Some(Token { tok: Tok::Str(s), .. }) => s.clone(),
                    Some(t) => {
                        let span = self.tok_span(line, t);
                        self.err("trailing-tokens", "expected an optional provenance string", span);
                        return;
                    }
                    None => String::new(),
                };
                self.no_trailing(line, toks, 4);
                b.edges.push((target, rationale, provenance, line_span));
            }
            other => {
                let span = self.tok_span(line, first);
                self.warn("unknown-field", format!("ignoring unknown field `{other}`"), span);
            }
        }
    }

    fn slot_field(&mut self, b: &mut PatternBuild, line: usize, toks: &[Token]) {
        let line_span = self.line_span(line);
        let (name, name_tok) = match toks.get(1) {
            Some(t @ Token { tok: Tok::Word(w), .. }) => (w.clone(), t.clone()),
            _ => {
                self.err("bad-slot", "expected `slot NAME: KIND [required] [default \"...\"]`", line_span);
                return;
            }
        };
        if !matches!(toks.get(2).map(|t| &t.tok), Some(Tok::Colon)) {
            self.err("bad-slot", "expected `:` after the slot name", line_span);
            return;
        }
        let kind = match toks.get(3) {
            Some(t @ Token { tok: Tok::Word(w), .. }) => match w.parse::<SlotKind>() {
                Ok(k) => k,
                Err(e) => {
                    let span = self.tok_span(line, t);
                    self.err("bad-value", e.to_string(), span);
                    return;
                }
            },
            _ => {
                self.err("bad-slot", "expected a slot kind after `:`", line_span);
                return;
            }
        };
        let mut slot = SlotSpec { name, kind, required: false, default: None };
        let mut i = 4;
        while i < toks.len() {
            match &toks[i].tok {
                Tok::Word(w) if w == "required" && !slot.required => {
                    slot.required = true;
                    i += 1;
                }
                Tok::Word(w) if w == "default" && slot.default.is_none() => {
                    let Some(d) = self.expect_string(line, toks, i + 1, "default") else { return };
                    slot.default = Some(d);
                    i += 2;
                }
                _ => {
                    let span = self.tok_span(line, &toks[i]);
                    self.err("trailing-tokens", "expected `required` or `default \"...\"`", span);
                    return;
                }
            }
        }
        let span = self.tok_span(line, &name_tok);
        b.slots.push((slot, span));
    }

    fn pipeline_block(&mut self, header_line: usize, header: &[Token]) {
        let name = self.header_id(header_line, header, "pipeline");
        let errors_before = self.error_count();
        let mut steps = Vec::new();
        let mut context_refs: Vec<String> = Vec::new();
        let end = self.block_body(|p, line, toks| p.pipeline_line(line, toks, &mut steps, &mut context_refs));
        if let BlockEnd::Eof = end {
            let span = self.line_span(header_line);
            self.err("unterminated-block", "pipeline block is missing `end`", span);
        }
        let Some(name) = name else { return };
        let _ = errors_before;
        if steps.is_empty() {
            let span = self.line_span(header_line);
            self.err("empty-pipeline", format!("pipeline `{name}` has no valid steps"), span);
            return;
        }
        self.out.pipelines.push(PipelineSpec { name, steps, context_refs });
    }

    fn pipeline_line(
        &mut self,
        line: usize,
        toks: &[Token],
        steps: &mut Vec<PipelineStep>,
        context_refs: &mut Vec<String>,
    ) {
        let Some(first) = toks.first() else { return };
        let line_span = self.line_span(line);
        match &first.tok {
            Tok::Word(w) if w == "use" => {
                let (id, id_tok) = match toks.get(1) {
                    Some(t @ Token { tok: Tok::Word(w), .. }) => (w.clone(), t.clone()),
                    _ => {
                        self.err("bad-step", "expected `use <pattern-id>`", line_span);
                        return;
                    }
                };
                let mut bindings = BTreeMap::new();
                if toks.len() > 2 {
                    match &toks[2].tok {
                        Tok::Word(w) if w == "with" => {
                            if !self.bindings(line, &toks[3..], &mut bindings) {
                                return;
                            }
                        }
                        _ => {
                            let span = self.tok_span(line, &toks[2]);
                            self.err("bad-step", "expected `with` after the pattern id", span);
                            return;
                        }
                    }
                }
                let span = self.tok_span(line, &id_tok);
                steps.push(PipelineStep { pattern_id: id, bindings, span: Some(span) });
            }
            Tok::Word(w) if w == "context" => match toks.get(1) {
                Some(Token { tok: Tok::Word(name), .. }) if toks.len() == 2 => {
                    if !context_refs.contains(name) {
                        context_refs.push(name.clone());
                    }
                }
                _ => self.err("bad-context", "expected `context <name>`", line_span),
            },
            Tok::Word(other) => {
                let span = self.tok_span(line, first);
                self.warn("unknown-field", format!("ignoring unknown pipeline keyword `{other}`"), span);
            }
            _ => {
                let span = self.tok_span(line, first);
                self.err("bad-step", "expected a keyword", span);
            }
        }
    }

    /// `ID "=" VALUE ("," ID "=" VALUE)*`. Reports `bad-binding` and returns
    /// false when malformed.
    fn bindings(&mut self, line: usize, toks: &[Token], out: &mut BTreeMap<String, String>) -> bool {
        let mut i = 0;
        if toks.is_empty() {
            let span = self.line_span(line);
            self.err("bad-binding", "`with` must be followed by bindings", span);
            return false;
        }
        loop {
            let bad = |p: &mut Self, t: Option<&Token>, msg: &str| {
                let span = t.map(|t| p.tok_span(line, t)).unwrap_or_else(|| p.line_span(line));
                p.err("bad-binding", msg.to_string(), span);
                false
            };
            let key = match toks.get(i) {
                Some(Token { tok: Tok::Word(k), .. }) if is_slot_name(k) => k.clone(),
                t => return bad(self, t, "expected a slot name"),
            };
            if !matches!(toks.get(i + 1).map(|t| &t.tok), Some(Tok::Eq)) {
                return bad(self, toks.get(i + 1).or(toks.get(i)), "expected `=` after the slot name");
            }
            let value = match toks.get(i + 2) {
                Some(Token { tok: Tok::Str(s), .. }) | Some(Token { tok: Tok::Word(s), .. }) => s.clone(),
                t => return bad(self, t.or(toks.get(i + 1)), "expected a value after `=`"),
            };
            if out.insert(key.clone(), value).is_some() {
                return bad(self, toks.get(i), &format!("slot `{key}` bound twice"));
            }
            i += 3;
            match toks.get(i).map(|t| &t.tok) {
                None => return true,
                Some(Tok::Comma) => i += 1,
                _ => return bad(self, toks.get(i), "expected `,` between bindings"),
            }
        }
    }
}

#[derive(Default)]
struct PatternBuild {
    name: Option<String>,
    intent: Option<String>,
    motivation: Option<String>,
    provenance: Option<String>,
    classification: Option<(Classification, SourceSpan)>,
    scope: Option<(ScopeKind, SourceSpan)>,
    statements: Vec<(StatementTemplate, SourceSpan)>,
    prompt: Option<(String, SourceSpan)>,
    slots: Vec<(SlotSpec, SourceSpan)>,
    edges: Vec<(String, String, String, SourceSpan)>,
    /// (line, column of string contents, decoded text) for stmt/prompt lines.
    text_lines: Vec<(usize, usize, String)>,
}

impl PatternBuild {
    fn slot_span(&self, name: &str) -> Option<SourceSpan> {
        self.slots.iter().rev().find(|(s, _)| s.name == name).map(|(_, sp)| sp.clone())
    }

    /// Line of the first stmt/prompt using `{name}`; the column is the start
    /// of the string, since escapes make exact columns unreliable.
    fn placeholder_line(&self, name: &str) -> Option<(usize, usize, usize)> {
        self.text_lines.iter().find_map(|(line, col, text)| {
            placeholders(text).iter().find(|p| p.name == name).map(|_| (*line, col.saturating_sub(1).max(1), 1))
        })
    }
}

/// Parses every block in `text`.
pub fn parse_file(file: &str, text: &str) -> PdlFile {
    Parser::new(file, text).run()
}

/// Pattern blocks only; pipeline blocks are parsed but discarded.
pub fn parse_patterns(text: &str) -> (Vec<PatternDescriptor>, Vec<Diagnostic>) {
    let f = parse_file("<input>", text);
    (f.patterns, f.diagnostics)
}

/// The first pipeline block. `None` comes with an `empty-pipeline` error.
pub fn parse_pipeline(text: &str) -> (Option<PipelineSpec>, Vec<Diagnostic>) {
    parse_pipeline_named("<input>", text)
}

pub fn parse_pipeline_named(file: &str, text: &str) -> (Option<PipelineSpec>, Vec<Diagnostic>) {
    let mut f = parse_file(file, text);
    if f.pipelines.is_empty() {
        if !f.diagnostics.iter().any(|d| d.code == "empty-pipeline") {
            f.diagnostics.push(Diagnostic::error(
                "empty-pipeline",
                "no pipeline block found",
                Some(SourceSpan { file: file.into(), line: 1, column: 1, length: 0 }),
            ));
        }
        return (None, f.diagnostics);
    }
    if f.pipelines.len() > 1 {
        f.diagnostics.push(Diagnostic::warning(
            "multiple-pipelines",
            "only the first pipeline block is used",
            Some(SourceSpan { file: file.into(), line: 1, column: 1, length: 0 }),
        ));
    }
    (Some(f.pipelines.swap_remove(0)), f.diagnostics)
}

// ---------------------------------------------------------------------------
// Formatter
// ---------------------------------------------------------------------------

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical text: patterns sorted by id, one field per line, LF endings.
pub fn format_patterns(patterns: &[PatternDescriptor]) -> String {
    let mut sorted: Vec<&PatternDescriptor> = patterns.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = String::new();
    for (i, p) in sorted.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        format_pattern_into(&mut out, p);
    }
    out
}

fn format_pattern_into(out: &mut String, p: &PatternDescriptor) {
    out.push_str(&format!("pattern {}\n", p.id));
    out.push_str(&format!("  name {}\n", quote(&p.name)));
    out.push_str(&format!("  classification {}\n", p.classification));
    out.push_str(&format!("  scope {}\n", p.scope_kind));
    out.push_str(&format!("  intent {}\n", quote(&p.intent)));
    out.push_str(&format!("  motivation {}\n", quote(&p.motivation)));
    out.push_str(&format!("  provenance {}\n", quote(&p.provenance)));
    for s in &p.statements {
        out.push_str(&format!("  stmt {}", quote(&s.text)));
        if s.optional {
            out.push_str(" optional");
        }
        if let Some(c) = &s.condition {
            out.push_str(&format!(" when {}", quote(c)));
        }
        out.push('\n');
    }
    if !p.default_prompt.is_empty() {
        for segment in p.default_prompt.split('\n') {
            out.push_str(&format!("  prompt {}\n", quote(segment)));
        }
    }
    for s in &p.slots {
        out.push_str(&format!("  slot {}: {}", s.name, s.kind));
        if s.required {
            out.push_str(" required");
        }
        if let Some(d) = &s.default {
            out.push_str(&format!(" default {}", quote(d)));
        }
        out.push('\n');
    }
    for e in &p.combines_with {
        out.push_str(&format!("  combines-with {} {}", e.to, quote(&e.rationale)));
        if !e.provenance.is_empty() {
            out.push_str(&format!(" {}", quote(&e.provenance)));
        }
        out.push('\n');
    }
    out.push_str("end\n");
}

pub fn format_pipeline(p: &PipelineSpec) -> String {
    let mut out = format!("pipeline {}\n", p.name);
    for c in &p.context_refs {
        out.push_str(&format!("  context {c}\n"));
    }
    for s in &p.steps {
        out.push_str(&format!("  use {}", s.pattern_id));
        if !s.bindings.is_empty() {
            let parts: Vec<String> = s.bindings.iter().map(|(k, v)| format!("{k}={}", quote(v))).collect();
            out.push_str(&format!(" with {}", parts.join(", ")));
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}
