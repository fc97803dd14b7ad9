//! Analyst-persona ↔ collaborator dialogues over a pluggable chat backend.
//!
//! A session opens with a shared system context (the sample's features plus
//! historical cases from the persona's competence tier), then alternates a
//! collaborator turn and an analyst turn. The analyst closes the session by
//! writing a marker of the form `FINAL: normal|intrusion|caution`; a session
//! that runs out of budget is read as a call for caution.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::expert::{ExpertContext, Tier};

pub const DEFAULT_BUDGET: usize = 12;
pub const ENDPOINT_ENV: &str = "A2C_CHAT_ENDPOINT";
pub const KEY_ENV: &str = "A2C_CHAT_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperienceBand {
    /// Under one year.
    Novice,
    /// One to three years.
    Intermediate,
    /// Five years or more.
    Expert,
}

impl ExperienceBand {
    pub fn years(self) -> &'static str {
        match self {
            ExperienceBand::Novice => "<1",
            ExperienceBand::Intermediate => "1-3",
            ExperienceBand::Expert => "5+",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub name: String,
    pub experience_band: ExperienceBand,
    pub system_prompt: String,
    pub tier: Tier,
    pub known_class_names: BTreeSet<String>,
}

const MARKER_RULE: &str = "When you reach a conclusion, end your message with exactly one line \
`FINAL: normal`, `FINAL: intrusion` or `FINAL: caution`. Do not write that line before you have decided.";

impl PersonaSpec {
    pub fn new(
        name: &str,
        experience_band: ExperienceBand,
        system_prompt: &str,
        tier: Tier,
        known_class_names: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        if system_prompt.trim().is_empty() {
            return Err(Error::InvalidParameter(format!("persona `{name}` has an empty system prompt")));
        }
        Ok(PersonaSpec {
            name: name.to_string(),
            experience_band,
            system_prompt: system_prompt.to_string(),
            tier,
            known_class_names: known_class_names.into_iter().collect(),
        })
    }

    pub fn jordan(tier: Tier, known: impl IntoIterator<Item = String>) -> Self {
        PersonaSpec::new(
            "Jordan",
            ExperienceBand::Novice,
            "You are Jordan Sinclair, a junior SOC analyst with less than a year of experience. \
             You are careful, you double-check before committing, and you prefer to flag uncertainty \
             rather than guess. You are reviewing a network connection record that the automated \
             system could not classify, working with SentinelBot, an analytics assistant.",
            tier,
            known,
        )
        .expect("preset prompt is non-empty")
    }

    pub fn alex(tier: Tier, known: impl IntoIterator<Item = String>) -> Self {
        PersonaSpec::new(
            "Alex",
            ExperienceBand::Intermediate,
            "You are Alex Taylor, a SOC analyst with two years of experience in alert triage. \
             You ask for context, weigh the evidence and commit once it is sufficient. \
             You are reviewing a network connection record that the automated system could not \
             classify, working with SentinelBot, an analytics assistant.",
            tier,
            known,
        )
        .expect("preset prompt is non-empty")
    }

    pub fn john(tier: Tier, known: impl IntoIterator<Item = String>) -> Self {
        PersonaSpec::new(
            "John",
            ExperienceBand::Expert,
            "You are John Carter, a senior SOC analyst with more than five years of incident \
             response experience. You are decisive and trust your pattern recognition. \
             You are reviewing a network connection record that the automated system could not \
             classify, working with SentinelBot, an analytics assistant.",
            tier,
            known,
        )
        .expect("preset prompt is non-empty")
    }

    pub fn preset(name: &str, tier: Tier, known: impl IntoIterator<Item = String>) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "jordan" => Ok(PersonaSpec::jordan(tier, known)),
            "alex" => Ok(PersonaSpec::alex(tier, known)),
            "john" => Ok(PersonaSpec::john(tier, known)),
            other => Err(Error::InvalidParameter(format!("unknown persona preset `{other}`"))),
        }
    }
}

pub const COLLABORATOR_PROMPT: &str = "You are SentinelBot, a security analytics assistant working \
with a SOC analyst on a network connection record that neither the automated classifier nor the \
analyst recognises. Analyse the features, point out anomalies, compare against the historical cases \
provided, suggest next steps and answer the analyst's questions. The analyst makes the final call.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Analyst,
    Collaborator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::Analyst => "analyst",
            Role::Collaborator => "collaborator",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Complete,
    /// Transport failed mid-session; retrying is reasonable.
    Interrupted,
    /// The backend produced an unusable reply.
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub sample_id: u64,
    pub persona: String,
    pub tier: u8,
    pub budget: usize,
    /// Exchanges used; one exchange is a collaborator turn plus an analyst turn.
    pub budget_used: usize,
    pub status: SessionStatus,
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.transcript", self.persona, self.tier, self.sample_id)
    }

    /// Structured text form with fixed field order and LF endings.
    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn from_document(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The document with every timestamp zeroed, for comparing runs.
    pub fn canonical_body(&self) -> String {
        let mut t = self.clone();
        t.messages.iter_mut().for_each(|m| m.timestamp = 0);
        t.to_document()
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_document()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Transcript::from_document(&text)
    }

    /// Roles alternate collaborator/analyst after the opening system message.
    pub fn is_well_formed(&self) -> bool {
        let mut it = self.messages.iter();
        if it.next().map(|m| m.role) != Some(Role::System) {
            return false;
        }
        it.enumerate().all(|(i, m)| {
            m.role
                == if i % 2 == 0 {
                    Role::Collaborator
                } else {
                    Role::Analyst
                }
        }) && self.budget_used <= self.budget
    }
}

/// Which side of the dialogue a completion is requested for. Each side is a
/// separate chat instance with its own system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agent {
    Analyst,
    Collaborator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    /// `system`, `user` or `assistant`.
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

pub trait ChatBackend {
    /// Returns the completion text, `Error::Transport` when the service could
    /// not be reached, or `Error::MalformedReply` for an unusable response.
    fn complete(&mut self, agent: Agent, request: &ChatRequest) -> Result<String>;
}

/// Replays fixed replies per agent. Running out of script is a transport
/// error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    analyst: VecDeque<String>,
    collaborator: VecDeque<String>,
    /// Every request seen, in order.
    pub requests: Vec<(Agent, ChatRequest)>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(analyst: impl IntoIterator<Item = S>, collaborator: impl IntoIterator<Item = S>) -> Self {
        ScriptedBackend {
            analyst: analyst.into_iter().map(Into::into).collect(),
            collaborator: collaborator.into_iter().map(Into::into).collect(),
            requests: Vec::new(),
        }
    }

    /// An analyst that never decides, paired with a chatty collaborator.
    pub fn undecided(turns: usize) -> Self {
        ScriptedBackend::new(
            (0..turns).map(|i| format!("I need more information before deciding (turn {}).", i + 1)),
            (0..turns).map(|i| format!("Here is further analysis of the record (turn {}).", i + 1)),
        )
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, agent: Agent, request: &ChatRequest) -> Result<String> {
        self.requests.push((agent, request.clone()));
        let queue = match agent {
            Agent::Analyst => &mut self.analyst,
            Agent::Collaborator => &mut self.collaborator,
        };
        queue
            .pop_front()
            .ok_or_else(|| Error::Transport(format!("script exhausted for {agent:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub budget: usize,
    pub analyst_model: String,
    pub collaborator_model: String,
    pub feature_names: Vec<String>,
    /// Millisecond clock used for message timestamps.
    pub clock: fn() -> u64,
}

pub fn system_clock() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            budget: DEFAULT_BUDGET,
            analyst_model: "gpt-4".into(),
            collaborator_model: "gpt-4".into(),
            feature_names: Vec::new(),
            clock: system_clock,
        }
    }
}

/// A session that stopped early, with everything exchanged so far.
#[derive(Debug)]
pub struct SessionFailure {
    pub error: Error,
    pub transcript: Transcript,
}

impl SessionFailure {
    pub fn retryable(&self) -> bool {
        matches!(self.error, Error::Transport(_))
    }
}

impl fmt::Display for SessionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "session for sample {} failed: {}", self.transcript.sample_id, self.error)
    }
}

impl std::error::Error for SessionFailure {}

/// Shared opening context: serialized features, the automated stages'
/// outputs and tier-specific history.
pub fn opening_context(sample: &Sample, context: &ExpertContext, persona: &PersonaSpec, feature_names: &[String]) -> String {
    let mut out = format!("Sample {} under review.\nFeatures:\n", sample.id);
    for (i, v) in sample.features.iter().enumerate() {
        let name = feature_names.get(i).cloned().unwrap_or_else(|| format!("f{i}"));
        if *v != 0.0 {
            out.push_str(&format!("  {name} = {v:.4}\n"));
        }
    }
    out.push_str(&format!(
        "Rejector compatibility score: {:.4} ({:?})\n",
        context.reject_score, context.reject_decision.value
    ));
    let probs: Vec<String> = context.classifier_probs.probs.iter().map(|p| format!("{p:.3}")).collect();
    out.push_str(&format!("Classifier probabilities over known classes: [{}]\n", probs.join(", ")));
    let known: Vec<&str> = persona.known_class_names.iter().map(String::as_str).collect();
    out.push_str(&format!(
        "Analyst competence tier {}; familiar categories: {}\n",
        persona.tier,
        if known.is_empty() { "none".to_string() } else { known.join(", ") }
    ));
    if !context.contextual_info.is_empty() {
        out.push_str("Historical cases:\n");
        for c in &context.contextual_info {
            out.push_str(&format!("  - {c}\n"));
        }
    }
    if !context.side_info.is_empty() {
        out.push_str("Side information:\n");
        for c in &context.side_info {
            out.push_str(&format!("  - {c}\n"));
        }
    }
    out
}

fn view_for(agent: Agent, prompt: String, messages: &[Message]) -> Vec<ChatMessage> {
    let own = match agent {
        Agent::Analyst => Role::Analyst,
        Agent::Collaborator => Role::Collaborator,
    };
    let mut out = vec![ChatMessage {
        role: "system".into(),
        content: prompt,
    }];
    for m in messages.iter().filter(|m| m.role != Role::System) {
        out.push(ChatMessage {
            role: if m.role == own { "assistant" } else { "user" }.into(),
            content: m.text.clone(),
        });
    }
    if agent == Agent::Collaborator && messages.len() == 1 {
        out.push(ChatMessage {
            role: "user".into(),
            content: "The analyst has opened a triage session for this record. Give your initial analysis.".into(),
        });
    }
    out
}

/// Runs one dialogue until the analyst writes a decision marker or the
/// budget of exchanges is used up.
pub fn run_persona_session(
    sample: &Sample,
    context: &ExpertContext,
    persona: &PersonaSpec,
    backend: &mut dyn ChatBackend,
    config: &SessionConfig,
) -> std::result::Result<Transcript, SessionFailure> {
    let opening = opening_context(sample, context, persona, &config.feature_names);
    let mut transcript = Transcript {
        sample_id: sample.id,
        persona: persona.name.clone(),
        tier: persona.tier.number(),
        budget: config.budget,
        budget_used: 0,
        status: SessionStatus::Complete,
        messages: vec![Message {
            role: Role::System,
            text: opening.clone(),
            timestamp: (config.clock)(),
        }],
    };
    if config.budget == 0 {
        return Err(SessionFailure {
            error: Error::InvalidParameter("session budget must be at least 1".into()),
            transcript,
        });
    }
    let analyst_prompt = format!("{}\n\n{}\n\n{}", persona.system_prompt, MARKER_RULE, opening);
    let collaborator_prompt = format!("{COLLABORATOR_PROMPT}\n\n{opening}");

    for _ in 0..config.budget {
        transcript.budget_used += 1;
        for (agent, role, prompt, model) in [
            (Agent::Collaborator, Role::Collaborator, &collaborator_prompt, &config.collaborator_model),
            (Agent::Analyst, Role::Analyst, &analyst_prompt, &config.analyst_model),
        ] {
            let request = ChatRequest {
                model: model.clone(),
                messages: view_for(agent, prompt.clone(), &transcript.messages),
            };
            let reply = match backend.complete(agent, &request) {
                Ok(r) if r.trim().is_empty() => Err(Error::MalformedReply(format!("empty reply from {agent:?}"))),
                other => other,
            };
            match reply {
                Ok(text) => transcript.messages.push(Message {
                    role,
                    text,
                    timestamp: (config.clock)(),
                }),
                Err(error) => {
                    transcript.status = match error {
                        Error::Transport(_) => SessionStatus::Interrupted,
                        _ => {
                            log::warn!("invalid session for sample {}: {error}", sample.id);
                            SessionStatus::Invalid
                        }
                    };
                    return Err(SessionFailure { error, transcript });
                }
            }
        }
        let last = transcript.messages.last().map(|m| m.text.as_str()).unwrap_or("");
        if find_marker(last).is_some() {
            break;
        }
    }
    Ok(transcript)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriageOutcome {
    Normal,
    Intrusion,
    Caution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Truth {
    Normal,
    Intrusion,
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bFINAL:\s*(normal|intrusion|caution)\b").expect("valid regex"))
}

/// Last decision marker in `text`, if any.
pub fn find_marker(text: &str) -> Option<TriageOutcome> {
    marker_regex().captures_iter(text).last().map(|c| {
        match c[1].to_ascii_lowercase().as_str() {
            "normal" => TriageOutcome::Normal,
            "intrusion" => TriageOutcome::Intrusion,
            _ => TriageOutcome::Caution,
        }
    })
}

/// Most recent analyst marker; no marker at all means caution.
pub fn parse_final_decision(transcript: &Transcript) -> TriageOutcome {
    transcript
        .messages
        .iter()
        .rev()
        .filter(|m| m.role == Role::Analyst)
        .find_map(|m| find_marker(&m.text))
        .unwrap_or(TriageOutcome::Caution)
}

/// 1 for a correct call, 0.5 for caution, 0 for a wrong call.
pub fn score_outcome(outcome: TriageOutcome, truth: Truth) -> f64 {
    match (outcome, truth) {
        (TriageOutcome::Caution, _) => 0.5,
        (TriageOutcome::Normal, Truth::Normal) | (TriageOutcome::Intrusion, Truth::Intrusion) => 1.0,
        _ => 0.0,
    }
}

/// Mean per-sample score, as a fraction in [0, 1].
pub fn coex_success_rate(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("success-rate scores"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Table-style marks: `Y` correct, `W` caution, `X` wrong.
pub fn outcome_from_mark(mark: char, truth: Truth) -> Result<TriageOutcome> {
    let wrong = match truth {
        Truth::Normal => TriageOutcome::Intrusion,
        Truth::Intrusion => TriageOutcome::Normal,
    };
    let right = match truth {
        Truth::Normal => TriageOutcome::Normal,
        Truth::Intrusion => TriageOutcome::Intrusion,
    };
    match mark {
        'Y' | '✓' => Ok(right),
        'W' | '⚠' => Ok(TriageOutcome::Caution),
        'X' | '✗' => Ok(wrong),
        other => Err(Error::InvalidParameter(format!("unknown outcome mark `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::PredictionDistribution;
    use crate::rejector::{RejectDecision, Verdict};

    fn ctx() -> ExpertContext {
        ExpertContext {
            reject_score: -3.2,
            reject_decision: RejectDecision {
                value: Verdict::Defer,
                score: -3.2,
            },
            classifier_probs: PredictionDistribution {
                probs: vec![0.6, 0.4],
            },
            contextual_info: vec!["smurf: icmp ecr_i SF src_bytes 1032".into()],
            side_info: vec![],
        }
    }

    fn sample() -> Sample {
        Sample {
            id: 42,
            features: vec![1.5, 0.0, -0.25],
            label: Some(3),
        }
    }

    fn fixed_clock() -> u64 {
        1_700_000_000_000
    }

    fn config(budget: usize) -> SessionConfig {
        SessionConfig {
            budget,
            feature_names: vec!["duration".into(), "src_bytes".into(), "count".into()],
            clock: fixed_clock,
            ..Default::default()
        }
    }

    fn persona() -> PersonaSpec {
        PersonaSpec::alex(Tier::T1, ["smurf".to_string()])
    }

    #[test]
    fn decides_on_first_turn() {
        let mut backend = ScriptedBackend::new(["Looks like a flood. FINAL: intrusion"], ["Volume is anomalous."]);
        let t = run_persona_session(&sample(), &ctx(), &persona(), &mut backend, &config(12)).unwrap();
        assert_eq!(t.messages.len(), 3);
        assert_eq!(t.budget_used, 1);
        assert!(t.is_well_formed());
        assert_eq!(parse_final_decision(&t), TriageOutcome::Intrusion);
        // the analyst's view carries the marker rule and the features
        let (_, req) = backend.requests.iter().find(|(a, _)| *a == Agent::Analyst).unwrap();
        assert!(req.messages[0].content.contains("FINAL: caution"));
        assert!(req.messages[0].content.contains("duration = 1.5000"));
        assert_eq!(req.messages[1].role, "user");
    }

    #[test]
    fn budget_exhaustion_means_caution() {
        let mut backend = ScriptedBackend::undecided(4);
        let t = run_persona_session(&sample(), &ctx(), &persona(), &mut backend, &config(4)).unwrap();
        assert_eq!(t.messages.len(), 1 + 2 * 4);
        assert_eq!(t.budget_used, 4);
        assert!(t.is_well_formed());
        assert_eq!(parse_final_decision(&t), TriageOutcome::Caution);
    }

    #[test]
    fn transport_failure_keeps_partial_transcript() {
        let mut backend = ScriptedBackend::new(["thinking"], ["analysis 1", "analysis 2"]);
        let err = run_persona_session(&sample(), &ctx(), &persona(), &mut backend, &config(5)).unwrap_err();
        assert!(err.retryable());
        assert_eq!(err.transcript.status, SessionStatus::Interrupted);
        assert_eq!(err.transcript.messages.len(), 4);
    }

    #[test]
    fn empty_reply_invalidates_session() {
        let mut backend = ScriptedBackend::new(["  "], ["analysis"]);
        let err = run_persona_session(&sample(), &ctx(), &persona(), &mut backend, &config(5)).unwrap_err();
        assert!(!err.retryable());
        assert_eq!(err.transcript.status, SessionStatus::Invalid);
    }

    #[test]
    fn marker_grammar() {
        let msg = |role, text: &str| Message {
            role,
            text: text.into(),
            timestamp: 0,
        };
        let mut t = Transcript {
            sample_id: 1,
            persona: "Jordan".into(),
            tier: 1,
            budget: 3,
            budget_used: 2,
            status: SessionStatus::Complete,
            messages: vec![
                msg(Role::System, "ctx"),
                msg(Role::Collaborator, "FINAL: intrusion"),
                msg(Role::Analyst, "hmm, final: Intrusion maybe"),
                msg(Role::Collaborator, "more"),
                msg(
                    Role::Analyst,
                    "...I would classify this sample as a potential intrusion. FINAL: intrusion",
                ),
            ],
        };
        assert_eq!(parse_final_decision(&t), TriageOutcome::Intrusion);
        t.messages[4].text = "FINAL: intrusion\nOn reflection, FINAL: NORMAL".into();
        assert_eq!(parse_final_decision(&t), TriageOutcome::Normal);
        t.messages[4].text = "no decision".into();
        t.messages[2].text = "nothing".into();
        // collaborator markers never count
        assert_eq!(parse_final_decision(&t), TriageOutcome::Caution);
    }

    #[test]
    fn scoring() {
        assert_eq!(score_outcome(TriageOutcome::Intrusion, Truth::Intrusion), 1.0);
        assert_eq!(score_outcome(TriageOutcome::Caution, Truth::Intrusion), 0.5);
        assert_eq!(score_outcome(TriageOutcome::Normal, Truth::Intrusion), 0.0);
        assert_eq!(score_outcome(TriageOutcome::Normal, Truth::Normal), 1.0);
        assert_eq!(coex_success_rate(&[1.0; 7]).unwrap(), 1.0);
        assert!(coex_success_rate(&[]).is_err());
    }

    #[test]
    fn success_rate_from_marks() {
        let rate = |marks: &str| {
            let scores: Vec<f64> = marks
                .chars()
                .map(|m| score_outcome(outcome_from_mark(m, Truth::Intrusion).unwrap(), Truth::Intrusion))
                .collect();
            coex_success_rate(&scores).unwrap() * 100.0
        };
        assert_eq!(format!("{:.1}", rate("✗⚠⚠✓✓✗✗")), "42.9");
        assert_eq!(format!("{:.1}", rate("✗✗✓✗⚠⚠✗")), "28.6");
    }

    #[test]
    fn transcript_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let run = || {
            let mut b = ScriptedBackend::new(["Checking.", "FINAL: normal"], ["First look.", "Second look."]);
            run_persona_session(&sample(), &ctx(), &persona(), &mut b, &config(6)).unwrap()
        };
        let t = run();
        let path = t.save(dir.path()).unwrap();
        assert!(path.ends_with("Alex_1_42.transcript"));
        let back = Transcript::load(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(parse_final_decision(&back), TriageOutcome::Normal);
        let mut other = run();
        other.messages[1].timestamp += 99;
        assert_eq!(other.canonical_body(), t.canonical_body());
    }

    #[test]
    fn presets() {
        let j = PersonaSpec::preset("jordan", Tier::T2, Vec::new()).unwrap();
        assert_eq!(j.experience_band, ExperienceBand::Novice);
        assert_eq!(PersonaSpec::preset("John", Tier::T3, Vec::new()).unwrap().experience_band.years(), "5+");
        assert!(PersonaSpec::preset("sam", Tier::T1, Vec::new()).is_err());
        assert!(PersonaSpec::new("x", ExperienceBand::Novice, " ", Tier::T1, Vec::new()).is_err());
    }
}
