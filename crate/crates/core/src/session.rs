//! Runs a prompt plan as a conversation: setup units, interactive loops,
//! session-rule re-injection, artifact collection and transcripts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::{debug, info};
use uuid::Uuid;

use crate::catalog::ScopeKind;
use crate::composer::{InteractionLoop, PromptPlan};
use crate::extract::{extract_kinds, Artifact, ArtifactKind};
use crate::llm::{ChatMessage, ChatProvider, LlmError, Role};
use crate::renderer::estimate_tokens;

pub const TRANSCRIPT_VERSION: u32 = 1;
pub const DEFAULT_REINJECT_THRESHOLD: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Setup,
    Interactive,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnSource {
    PlanUnit,
    Human,
    Reinjection,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub content: String,
    pub token_estimate: usize,
    pub source: TurnSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveRule {
    pub rule_text: String,
    pub tokens_since_injection: usize,
}

/// Wall-clock data, kept apart so transcripts can be compared without it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionMeta {
    pub created_at: String,
    pub updated_at: String,
    pub turn_timestamps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub version: u32,
    pub session_id: String,
    pub status: SessionStatus,
    pub plan: PromptPlan,
    pub turns: Vec<Turn>,
    pub active_rules: Vec<ActiveRule>,
    pub artifacts: Vec<Artifact>,
    /// Index of the first plan unit whose prompt has not been answered.
    pub cursor: usize,
    /// Unit index of the open interactive loop.
    pub active_loop: Option<usize>,
    pub reinject_threshold: usize,
    pub meta: SessionMeta,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("plan has no units")]
    EmptyPlan,
    #[error("session is {0:?}, not interactive")]
    NotInteractive(SessionStatus),
    #[error("the previous message is still waiting for a reply; resend it or call resume")]
    PendingReply,
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error("io error: {0}")]
    Io(String),
    #[error("transcript parse error: {0}")]
    Parse(String),
    #[error("transcript schema version {found:?}, expected {expected}")]
    SchemaVersionMismatch { expected: u32, found: Option<u64> },
}

impl From<std::io::Error> for SessionError {
    fn from(e: std::io::Error) -> Self {
        SessionError::Io(e.to_string())
    }
}

/// What one human entry produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    /// Last assistant reply produced during the call, if any.
    pub reply: Option<String>,
    pub new_artifacts: Vec<Artifact>,
    pub closed: bool,
    pub reinjected: usize,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Session {
    /// A session in `setup` state; nothing is sent yet.
    pub fn create(plan: PromptPlan, session_id: impl Into<String>) -> Result<Self, SessionError> {
        if plan.units.is_empty() {
            return Err(SessionError::EmptyPlan);
        }
        let t = now();
        Ok(Self {
            version: TRANSCRIPT_VERSION,
            session_id: session_id.into(),
            status: SessionStatus::Setup,
            plan,
            turns: Vec::new(),
            active_rules: Vec::new(),
            artifacts: Vec::new(),
            cursor: 0,
            active_loop: None,
            reinject_threshold: DEFAULT_REINJECT_THRESHOLD,
            meta: SessionMeta { created_at: t.clone(), updated_at: t, turn_timestamps: Vec::new() },
        })
    }

    pub fn random_id() -> String {
        Uuid::new_v4().to_string()
    }

    /// Name-based id derived from the plan, for reproducible runs.
    pub fn plan_id(plan: &PromptPlan) -> String {
        let bytes = serde_json::to_vec(plan).expect("plan serializes");
        Uuid::new_v5(&Uuid::NAMESPACE_OID, &bytes).to_string()
    }

    pub fn with_threshold(mut self, r: usize) -> Self {
        self.reinject_threshold = r;
        self
    }

    pub fn active_interaction(&self) -> Option<&InteractionLoop> {
        self.active_loop.and_then(|i| self.plan.units[i].interaction.as_ref())
    }

    /// The trailing user turn that has no reply yet.
    pub fn pending(&self) -> Option<&Turn> {
        self.turns.last().filter(|t| t.role == Role::User)
    }

    pub fn last_reply(&self) -> Option<&str> {
        self.turns.iter().rev().find(|t| t.role == Role::Assistant).map(|t| t.content.as_str())
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.turns.iter().map(|t| ChatMessage { role: t.role, content: t.content.clone() }).collect()
    }

    fn push_turn(&mut self, role: Role, content: String, source: TurnSource) -> usize {
        let index = self.turns.len();
        let token_estimate = estimate_tokens(&content).count;
        for rule in &mut self.active_rules {
            rule.tokens_since_injection += token_estimate;
        }
        self.turns.push(Turn { index, role, content, token_estimate, source });
        let t = now();
        self.meta.turn_timestamps.push(t.clone());
        self.meta.updated_at = t;
        index
    }

    /// Sends the whole transcript and records the reply.
    fn exchange(&mut self, provider: &dyn ChatProvider) -> Result<(usize, String), SessionError> {
        let reply = provider.complete(&self.messages())?;
        let idx = self.push_turn(Role::Assistant, reply.clone(), TurnSource::Llm);
        Ok((idx, reply))
    }

    fn collect(&mut self, turn: usize, kinds: &[ArtifactKind]) -> Vec<Artifact> {
        let found: Vec<Artifact> = extract_kinds(&self.turns[turn].content, kinds)
            .into_iter()
            .map(|payload| Artifact { payload, origin_turn: turn })
            .collect();
        self.artifacts.extend(found.iter().cloned());
        found
    }

    fn session_rule_for(&self, unit: usize) -> Option<String> {
        if self.plan.units[unit].kind != ScopeKind::Session {
            return None;
        }
        let k = self.plan.units[..unit].iter().filter(|u| u.kind == ScopeKind::Session).count();
        Some(self.plan.session_rules.get(k).cloned().unwrap_or_else(|| self.plan.units[unit].text.clone()))
    }

    /// Finishes the pending turn (if any), then sends plan units until one
    /// opens a loop or the plan is exhausted. On a provider error the
    /// session stays consistent and the call can be repeated.
    pub fn advance(&mut self, provider: &dyn ChatProvider) -> Result<TurnOutcome, SessionError> {
        let mut out = TurnOutcome { reply: None, new_artifacts: Vec::new(), closed: false, reinjected: 0 };
        self.resume_pending(provider, &mut out)?;
        while self.active_loop.is_none() && self.cursor < self.plan.units.len() {
            let unit = self.cursor;
            let text = self.plan.units[unit].text.clone();
            debug!(unit, pattern = %self.plan.units[unit].pattern_id, "sending plan unit");
            self.push_turn(Role::User, text, TurnSource::PlanUnit);
            if let Some(rule) = self.session_rule_for(unit) {
                self.active_rules.push(ActiveRule { rule_text: rule, tokens_since_injection: 0 });
            }
            self.resume_pending(provider, &mut out)?;
        }
        if self.active_loop.is_none() && self.cursor >= self.plan.units.len() {
            self.status = SessionStatus::Closed;
        }
        out.closed = self.status == SessionStatus::Closed;
        Ok(out)
    }

    fn resume_pending(&mut self, provider: &dyn ChatProvider, out: &mut TurnOutcome) -> Result<(), SessionError> {
        let Some(pending) = self.pending().cloned() else { return Ok(()) };
        let (idx, reply) = self.exchange(provider)?;
        out.reply = Some(reply);
        match pending.source {
            TurnSource::PlanUnit => {
                let unit = self.cursor;
                let kinds = self.plan.units[unit].expected_artifacts.clone();
                out.new_artifacts.extend(self.collect(idx, &kinds));
                self.cursor += 1;
                if self.plan.units[unit].interaction.is_some() {
                    self.active_loop = Some(unit);
                    self.status = SessionStatus::Interactive;
                }
            }
            TurnSource::Human => {
                let kinds = self.active_loop.map(|u| self.plan.units[u].expected_artifacts.clone()).unwrap_or_default();
                out.new_artifacts.extend(self.collect(idx, &kinds));
            }
            TurnSource::Reinjection => {
                if let Some(rule) = self.active_rules.iter_mut().find(|r| r.rule_text == pending.content) {
                    rule.tokens_since_injection = 0;
                }
                out.reinjected += 1;
            }
            TurnSource::Llm => unreachable!("pending turns are user turns"),
        }
        Ok(())
    }

    /// Re-sends every rule whose counter passed the threshold, in rule order.
    pub fn reinject_rules(&mut self, provider: &dyn ChatProvider) -> Result<usize, SessionError> {
        if self.status != SessionStatus::Interactive {
            return Err(SessionError::NotInteractive(self.status));
        }
        let mut out = TurnOutcome { reply: None, new_artifacts: Vec::new(), closed: false, reinjected: 0 };
        self.resume_pending(provider, &mut out)?;
        let due: Vec<String> = self
            .active_rules
            .iter()
            .filter(|r| r.tokens_since_injection > self.reinject_threshold)
            .map(|r| r.rule_text.clone())
            .collect();
        for rule in due {
            info!(tokens = self.reinject_threshold, "re-injecting session rule");
            self.push_turn(Role::User, rule, TurnSource::Reinjection);
            self.resume_pending(provider, &mut out)?;
        }
        Ok(out.reinjected)
    }

    /// One human entry in the open loop. The terminator closes the loop and
    /// continues with any remaining plan units; a lone terminator with
    /// nothing left to send makes no provider call.
    ///
    /// After a provider failure, sending the same text again retries it.
    pub fn user_turn(&mut self, provider: &dyn ChatProvider, text: &str) -> Result<TurnOutcome, SessionError> {
        if self.status != SessionStatus::Interactive {
            return Err(SessionError::NotInteractive(self.status));
        }
        let interaction = self.active_interaction().cloned().expect("interactive sessions have an open loop");
        if interaction.is_terminator(text) {
            if self.pending().is_some() {
                return Err(SessionError::PendingReply);
            }
            self.active_loop = None;
            return self.advance(provider);
        }
        let wrapped = interaction.wrap(text);
        let mut out = TurnOutcome { reply: None, new_artifacts: Vec::new(), closed: false, reinjected: 0 };
        match self.pending() {
            Some(p) if p.source == TurnSource::Human && p.content == wrapped => {}
            Some(_) => return Err(SessionError::PendingReply),
            None => {
                out.reinjected = self.reinject_rules(provider)?;
                self.push_turn(Role::User, wrapped, TurnSource::Human);
            }
        }
        let reinjected = out.reinjected;
        self.resume_pending(provider, &mut out)?;
        out.reinjected = reinjected;
        Ok(out)
    }

    /// Serialized transcript with `meta` removed, for equality checks.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("session serializes");
        if let Value::Object(m) = &mut v {
            m.remove("meta");
        }
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let v: Value = serde_json::from_str(text).map_err(|e| SessionError::Parse(e.to_string()))?;
        let found = v.get("version").and_then(Value::as_u64);
        if found != Some(TRANSCRIPT_VERSION as u64) {
            return Err(SessionError::SchemaVersionMismatch { expected: TRANSCRIPT_VERSION, found });
        }
        serde_json::from_value(v).map_err(|e| SessionError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Creates a session with a random id and sends its setup units.
pub fn start(plan: PromptPlan, provider: &dyn ChatProvider) -> Result<Session, SessionError> {
    let mut s = Session::create(plan, Session::random_id())?;
    s.advance(provider)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::catalog::load_builtin_catalog;
    use crate::composer::compile;
    use crate::llm::ScriptedProvider;
    use crate::pdl::{PipelineSpec, PipelineStep};

    fn plan(steps: Vec<PipelineStep>, ctx: &[(&str, &str)]) -> PromptPlan {
        let mut p = PipelineSpec::new("t", steps);
        for (k, _) in ctx {
            p = p.with_context(k);
        }
        let ctx: BTreeMap<String, String> = ctx.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        compile(&p, &load_builtin_catalog(), &ctx).unwrap()
    }

    fn principled() -> PromptPlan {
        plan(vec![PipelineStep::new("principled-code").bind("principle", "SOLID design principles")], &[])
    }

    fn req_sim() -> PromptPlan {
        plan(vec![PipelineStep::new("requirements-simulator")], &[("requirements", "Users can save prompts.")])
    }

    #[test]
    fn session_rule_plan_closes() {
        let p = ScriptedProvider::new(["Understood."]);
        let s = start(principled(), &p).unwrap();
        assert_eq!(s.turns.len(), 2);
        assert_eq!(s.turns[0].source, TurnSource::PlanUnit);
        assert_eq!(s.turns[1].role, Role::Assistant);
        assert_eq!(s.status, SessionStatus::Closed);
        assert_eq!(s.active_rules.len(), 1);
        assert!(s.active_rules[0].rule_text.contains("adheres to SOLID design principles"));
    }

    #[test]
    fn empty_plan() {
        assert_eq!(start(PromptPlan::default(), &ScriptedProvider::default()), Err(SessionError::EmptyPlan));
    }

    #[test]
    fn interactive_loop() {
        let p = ScriptedProvider::new([
            "You see the prompt list.",
            "Not possible.\n\n- As a user, I want to delete my prompt",
        ]);
        let mut s = start(req_sim(), &p).unwrap();
        assert_eq!(s.status, SessionStatus::Interactive);
        let out = s.user_turn(&p, "delete my prompt").unwrap();
        assert_eq!(s.turns[2].content, "I want to do delete my prompt");
        assert_eq!(s.turns[2].source, TurnSource::Human);
        assert_eq!(out.new_artifacts.len(), 1);
        assert_eq!(out.new_artifacts[0].origin_turn, 3);
        let calls = p.call_count();
        let out = s.user_turn(&p, "/done").unwrap();
        assert!(out.closed);
        assert_eq!(p.call_count(), calls);
        assert_eq!(s.status, SessionStatus::Closed);
        assert_eq!(s.user_turn(&p, "more"), Err(SessionError::NotInteractive(SessionStatus::Closed)));
    }

    #[test]
    fn failed_turn_is_retryable() {
        let p = ScriptedProvider::from_results([Ok("setup".into()), Err(LlmError::Timeout), Ok("reply".into())]);
        let mut s = start(req_sim(), &p).unwrap();
        assert!(matches!(s.user_turn(&p, "log in"), Err(SessionError::Provider(LlmError::Timeout))));
        assert_eq!(s.turns.len(), 3);
        assert_eq!(s.user_turn(&p, "something else"), Err(SessionError::PendingReply));
        let out = s.user_turn(&p, "log in").unwrap();
        assert_eq!(out.reply.as_deref(), Some("reply"));
        assert_eq!(s.turns.len(), 4);
    }

    #[test]
    fn failed_setup_resumes_at_unit() {
        let p = ScriptedProvider::from_results([Err(LlmError::Timeout), Ok("ok".into())]);
        let mut s = Session::create(principled(), "id").unwrap();
        assert!(s.advance(&p).is_err());
        assert_eq!(s.cursor, 0);
        s.advance(&p).unwrap();
        assert_eq!(s.turns.len(), 2);
        assert_eq!(s.status, SessionStatus::Closed);
    }

    fn rules_session(n_rules: usize) -> Session {
        let mut steps = vec![PipelineStep::new("principled-code").bind("principle", "SOLID design principles")];
        if n_rules > 1 {
            steps.push(PipelineStep::new("code-clustering"));
        }
        steps.push(PipelineStep::new("requirements-simulator"));
        let p = plan(steps, &[("requirements", "r")]);
        let prov = ScriptedProvider::new(vec!["ok"; n_rules + 1]);
        let mut s = Session::create(p, "id").unwrap();
        s.advance(&prov).unwrap();
        assert_eq!(s.status, SessionStatus::Interactive);
        s
    }

    #[test]
    fn reinjection_policy() {
        let mut s = rules_session(1);
        let p = ScriptedProvider::new(["ack"]);
        assert_eq!(s.reinject_rules(&p).unwrap(), 0);
        s.active_rules[0].tokens_since_injection = s.reinject_threshold + 1;
        assert_eq!(s.reinject_rules(&p).unwrap(), 1);
        assert_eq!(s.active_rules[0].tokens_since_injection, 0);
        let last_user = &s.turns[s.turns.len() - 2];
        assert_eq!(last_user.source, TurnSource::Reinjection);
        assert_eq!(last_user.content, s.active_rules[0].rule_text);

        let mut s = rules_session(2);
        for r in &mut s.active_rules {
            r.tokens_since_injection = 5000;
        }
        let p = ScriptedProvider::new(["a", "b"]);
        assert_eq!(s.reinject_rules(&p).unwrap(), 2);
        let sent: Vec<_> = s.turns.iter().filter(|t| t.source == TurnSource::Reinjection).map(|t| &t.content).collect();
        assert_eq!(sent, [&s.active_rules[0].rule_text, &s.active_rules[1].rule_text]);
    }

    #[test]
    fn counters_grow_with_traffic() {
        let mut s = rules_session(1).with_threshold(200);
        let long = "x".repeat(1000);
        let p = ScriptedProvider::new([long.as_str(), "ack", "fine"]);
        s.user_turn(&p, "a").unwrap();
        let out = s.user_turn(&p, "b").unwrap();
        assert_eq!(out.reinjected, 1);
    }

    #[test]
    fn token_estimates_match() {
        let p = ScriptedProvider::new(["one", "two"]);
        let mut s = start(req_sim(), &p).unwrap();
        s.user_turn(&p, "go").unwrap();
        assert!(s.turns.iter().all(|t| t.token_estimate == estimate_tokens(&t.content).count));
        assert!(s.turns.iter().enumerate().all(|(i, t)| t.index == i));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ScriptedProvider::new(["setup"]);
        let mut s = start(req_sim(), &p).unwrap();
        for i in 0..49 {
            p.push(Ok(format!("reply {i}")));
            s.user_turn(&p, &format!("task {i}")).unwrap();
        }
        assert_eq!(s.turns.len(), 100);
        let path = dir.path().join("t.json");
        s.save(&path).unwrap();
        assert_eq!(Session::load(&path).unwrap(), s);

        let text = fs::read_to_string(&path).unwrap();
        assert!(Session::from_json(&text[..text.len() / 2]).is_err());
        let bumped = text.replacen("\"version\": 1", "\"version\": 9", 1);
        assert_eq!(
            Session::from_json(&bumped),
            Err(SessionError::SchemaVersionMismatch { expected: 1, found: Some(9) })
        );
    }

    #[test]
    fn canonical_json_drops_meta() {
        let p = ScriptedProvider::new(["a"]);
        let mut s = Session::create(principled(), "fixed").unwrap();
        s.advance(&p).unwrap();
        let mut t = s.clone();
        t.meta.created_at = "then".into();
        assert_eq!(s.canonical_json(), t.canonical_json());
        assert!(!s.canonical_json().contains("\"meta\""));
        assert_eq!(Session::plan_id(&s.plan), Session::plan_id(&t.plan));
    }

    #[test]
    fn sequential_loops() {
        let p = plan(
            vec![PipelineStep::new("api-generator"), PipelineStep::new("api-simulator")],
            &[("requirements", "Users can save prompts.")],
        );
        let mut p2 = p.clone();
        p2.units.push(p.units[1].clone());
        let prov = ScriptedProvider::new(["spec", "ready", "HTTP/1.1 200 OK", "ready again"]);
        let mut s = Session::create(p2, "id").unwrap();
        s.advance(&prov).unwrap();
        assert_eq!(s.active_loop, Some(1));
        let out = s.user_turn(&prov, "GET /prompts HTTP/1.1").unwrap();
        assert_eq!(out.new_artifacts.len(), 1);
        let out = s.user_turn(&prov, "/done").unwrap();
        assert!(!out.closed);
        assert_eq!(s.active_loop, Some(2));
        assert!(s.user_turn(&prov, "/done").unwrap().closed);
    }
}
