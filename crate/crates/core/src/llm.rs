//! Chat-model orchestration: two-stage label refinement and ReACT-structured
//! justification generation.
//!
//! Every label-producing prompt ends with a machine-readable contract line,
//! `LABELS: a; b` or `LABELS: none`. Replies that break the contract get one
//! corrective follow-up in the same conversation before the call fails.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Article;
use crate::http::{HttpError, JsonClient, RetryPolicy};
use crate::retrieval::RetrievedEvidence;
use crate::taxonomy::{Level, Taxonomy, TaxonomyError, OTHER_LABEL};

pub const MAX_EXPLANATION_WORDS: usize = 80;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("no candidate labels given")]
    NoCandidates,
    #[error("no evidence sentences given")]
    NoEvidence,
    #[error("prompt stage {actual:?} used where {expected:?} is required")]
    WrongStage { expected: Stage, actual: Stage },
    #[error("reply rejected after retry: {0}")]
    Contract(String),
    #[error("empty conclusion in reply")]
    EmptyConclusion,
    #[error("chat backend returned no choices")]
    NoChoices,
    #[error("mock script: {0}")]
    Mock(String),
    #[error("chat backend config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Flattened conversation text; what mock scripts match against.
pub fn transcript(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push('[');
        out.push_str(role);
        out.push_str("]\n");
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

pub fn fingerprint(messages: &[ChatMessage]) -> String {
    hex::encode(Sha256::digest(transcript(messages).as_bytes()))
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatBackendConfig {
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    /// Scripted test double; when set, no network backend is built.
    pub mock_script: Option<PathBuf>,
}

impl Default for ChatBackendConfig {
    fn default() -> Self {
        ChatBackendConfig {
            endpoint: None,
            model_name: None,
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 500,
            max_in_flight: 4,
            mock_script: None,
        }
    }
}

impl ChatBackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut p = self.cv.wait_while(self.permits.lock().unwrap(), |p| *p == 0).unwrap();
            *p -= 1;
        }
        let out = f();
        *self.permits.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

/// Client for an HTTP endpoint speaking the common chat-completions wire shape.
pub struct HttpChatBackend {
    client: JsonClient,
    model: String,
    temperature: f64,
    max_tokens: u32,
    gate: Semaphore,
}

impl HttpChatBackend {
    pub fn new(cfg: &ChatBackendConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let endpoint = cfg
            .endpoint
            .clone()
            .filter(|e| !e.trim().is_empty())
            .ok_or_else(|| LlmError::Config("chat endpoint is required".into()))?;
        let model = cfg
            .model_name
            .clone()
            .filter(|m| !m.trim().is_empty())
            .ok_or_else(|| LlmError::Config("chat model_name is required".into()))?;
        Ok(HttpChatBackend {
            client: JsonClient::new(
                endpoint,
                RetryPolicy {
                    retries: cfg.retries,
                    backoff: Duration::from_millis(cfg.backoff_ms),
                    timeout: Duration::from_secs(cfg.timeout_secs),
                },
            ),
            model,
            temperature: cfg.temperature,
            max_tokens: cfg.max_output_tokens,
            gate: Semaphore::new(cfg.max_in_flight),
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let req = ChatRequest {
            model: &self.model,
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let resp: ChatResponse = self.gate.run(|| self.client.post(&req))?;
        let choice = resp.choices.into_iter().next().ok_or(LlmError::NoChoices)?;
        Ok(choice.message.content.unwrap_or_default())
    }
}

/// One canned reply. An entry matches when its fingerprint (if any) equals the
/// transcript fingerprint and every `contains` snippet occurs in the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub response: String,
}

impl MockEntry {
    fn matches(&self, text: &str, fp: &str) -> bool {
        self.fingerprint.as_deref().map_or(true, |f| f == fp) && self.contains.iter().all(|c| text.contains(c.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Mock(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Mock(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes") + "\n"
    }

    pub fn push_contains(&mut self, contains: Vec<String>, response: impl Into<String>) {
        self.entries.push(MockEntry {
            fingerprint: None,
            contains,
            response: response.into(),
        });
    }
}

/// Replays a [`MockScript`]. Each entry answers at most once; the first
/// unconsumed matching entry wins.
pub struct ScriptedBackend {
    entries: Vec<MockEntry>,
    used: Mutex<Vec<bool>>,
}

impl ScriptedBackend {
    pub fn new(script: MockScript) -> Self {
        let n = script.entries.len();
        ScriptedBackend {
            entries: script.entries,
            used: Mutex::new(vec![false; n]),
        }
    }

    pub fn consumed(&self) -> usize {
        self.used.lock().unwrap().iter().filter(|u| **u).count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let text = transcript(messages);
        let fp = fingerprint(messages);
        let mut used = self.used.lock().unwrap();
        for (i, e) in self.entries.iter().enumerate() {
            if !used[i] && e.matches(&text, &fp) {
                used[i] = true;
                return Ok(e.response.clone());
            }
        }
        Err(LlmError::Mock(format!("no script entry matches prompt {fp}")))
    }
}

/// Offline stand-in that answers from the structured header lines of our own
/// prompts: keeps every candidate, assigns every allowed sub-narrative and
/// quotes the observed sentences as its conclusion.
pub struct HeuristicBackend;

fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)).map(str::trim)
}

impl ChatBackend for HeuristicBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let prompt = messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        match header_value(prompt, "STAGE:") {
            Some("narrative_refine") => Ok(format!(
                "Each candidate is plausible.\nLABELS: {}",
                header_value(prompt, "CANDIDATES:").unwrap_or("none")
            )),
            Some("sub_assign") => Ok(format!(
                "All listed sub-narratives are plausible.\nLABELS: {}",
                header_value(prompt, "ALLOWED SUB-NARRATIVES:").unwrap_or("none")
            )),
            Some("explain") => {
                let dominant = header_value(prompt, "DOMINANT NARRATIVE:").unwrap_or_default();
                let observed: Vec<&str> = prompt
                    .lines()
                    .skip_while(|l| l.trim() != "## Observation")
                    .skip(1)
                    .take_while(|l| !l.starts_with("## "))
                    .filter_map(|l| l.split_once(". ").map(|(_, s)| s))
                    .collect();
                Ok(format!(
                    "Thought: the retrieved sentences carry the central claims.\nConclusion: The article supports \"{dominant}\". {}",
                    observed.join(" ")
                ))
            }
            _ => Err(LlmError::Mock("heuristic backend cannot read the prompt stage".into())),
        }
    }
}

/// Mock script backend if configured, else the heuristic backend offline,
/// else the HTTP backend.
pub fn build_chat_backend(cfg: &ChatBackendConfig, offline: bool) -> Result<Box<dyn ChatBackend>, LlmError> {
    cfg.validate()?;
    if let Some(path) = &cfg.mock_script {
        return Ok(Box::new(ScriptedBackend::new(MockScript::load(path)?)));
    }
    if offline {
        return Ok(Box::new(HeuristicBackend));
    }
    Ok(Box::new(HttpChatBackend::new(cfg)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    NarrativeRefine,
    SubAssign,
    Explain,
}

impl Stage {
    fn as_str(self) -> &'static str {
        match self {
            Stage::NarrativeRefine => "narrative_refine",
            Stage::SubAssign => "sub_assign",
            Stage::Explain => "explain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub stage: Stage,
    pub injected_labels: Vec<String>,
    /// Only populated for the explanation stage.
    pub evidence: Vec<RetrievedEvidence>,
}

impl PromptBundle {
    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![ChatMessage::system(&self.system), ChatMessage::user(&self.user)]
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.messages())
    }

    fn expect_stage(&self, expected: Stage) -> Result<(), LlmError> {
        if self.stage != expected {
            return Err(LlmError::WrongStage {
                expected,
                actual: self.stage,
            });
        }
        Ok(())
    }
}

const CLASSIFY_SYSTEM: &str = "You are a media analyst who labels news articles with narratives from a fixed taxonomy. \
Only use labels you are explicitly offered, and copy them exactly.";

const EXPLAIN_SYSTEM: &str = "You are a media analyst who writes short justifications of why a news article carries a \
given narrative. Ground every claim in the quoted article sentences.";

fn labels_contract(field: &str) -> String {
    format!(
        "End your reply with exactly one final line of the form `LABELS: <label>; <label>` listing only labels from {field}, \
or `LABELS: none` if none of them applies."
    )
}

pub fn build_stage1_prompt<S: AsRef<str>>(
    article: &Article,
    candidates: &[S],
    taxonomy: &Taxonomy,
) -> Result<PromptBundle, LlmError> {
    if candidates.is_empty() {
        return Err(LlmError::NoCandidates);
    }
    let labels: Vec<String> = candidates.iter().map(|c| c.as_ref().trim().to_string()).collect();
    let block = taxonomy.render_block(&labels, Level::Main)?;
    let user = format!(
        "STAGE: {stage}\nARTICLE ID: {id}\nTAXONOMY DOMAIN: {domain}\nCANDIDATES: {cands}\n\n\
## Article\n{text}\n\n\
## Candidate narratives\n{block}\n\
## How to reason\n\
A first-pass classifier proposed the candidates above and favours recall, so some of them may be wrong.\n\
Treat each candidate as its own branch of reasoning. For every branch:\n\
1. Find the passages of the article that would support the narrative.\n\
2. Weigh them against the definition, example and metadata of that narrative.\n\
3. Decide whether to keep or discard the branch and state how sure you are.\n\
Compare the surviving branches before committing. Discard only candidates the article does not support; \
when unsure, keep the label. Never add a label that is not a candidate.\n\n\
## Output format\n{contract}\n",
        stage = Stage::NarrativeRefine.as_str(),
        id = article.id,
        domain = taxonomy.domain(),
        cands = labels.join("; "),
        text = article.text.trim(),
        contract = labels_contract("CANDIDATES"),
    );
    Ok(PromptBundle {
        system: CLASSIFY_SYSTEM.to_string(),
        user,
        stage: Stage::NarrativeRefine,
        injected_labels: labels,
        evidence: Vec::new(),
    })
}

pub fn build_stage2_prompt(article: &Article, narrative: &str, taxonomy: &Taxonomy) -> Result<PromptBundle, LlmError> {
    let narrative = narrative.trim();
    let subs: Vec<String> = taxonomy.subs_of(narrative)?.to_vec();
    let main_block = taxonomy.render_block(&[narrative], Level::Main)?;
    let sub_block = taxonomy.render_block(&subs, Level::Sub)?;
    let user = format!(
        "STAGE: {stage}\nARTICLE ID: {id}\nTAXONOMY DOMAIN: {domain}\nNARRATIVE UNDER REVIEW: {narrative}\n\
ALLOWED SUB-NARRATIVES: {allowed}\n\n\
## Article\n{text}\n\n\
## Confirmed narrative\n{main_block}\n\
## Sub-narratives of this narrative\n{sub_block}\n\
## How to reason\n\
The narrative under review has been confirmed for this article. Consider each allowed sub-narrative as its own branch:\n\
1. Find the passages that express the more specific claim of the sub-narrative.\n\
2. Check them against its definition, example and metadata.\n\
3. Keep the branch only if the article supports it.\n\
Compare the branches before answering.\n\n\
## Output format\n{contract}\n",
        stage = Stage::SubAssign.as_str(),
        id = article.id,
        domain = taxonomy.domain(),
        allowed = subs.join("; "),
        text = article.text.trim(),
        contract = labels_contract("ALLOWED SUB-NARRATIVES"),
    );
    Ok(PromptBundle {
        system: CLASSIFY_SYSTEM.to_string(),
        user,
        stage: Stage::SubAssign,
        injected_labels: subs,
        evidence: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelsLine {
    Labels(Vec<String>),
    None,
}

/// Reads the last `LABELS:` line of a reply.
pub fn parse_labels_line(reply: &str) -> Option<LabelsLine> {
    let line = reply.lines().rev().find_map(|l| {
        let l = l.trim().trim_matches(|c| c == '`' || c == '*').trim();
        let head = l.get(..7)?;
        head.eq_ignore_ascii_case("labels:").then(|| l[7..].trim())
    })?;
    let line = line.trim_matches(|c| c == '`' || c == '*').trim();
    if line.eq_ignore_ascii_case("none") {
        return Some(LabelsLine::None);
    }
    let mut seen = HashSet::new();
    let labels: Vec<String> = line
        .split(';')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(s.clone()))
        .collect();
    if labels.is_empty() {
        None
    } else {
        Some(LabelsLine::Labels(labels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReply {
    pub labels: Vec<String>,
    pub raw_responses: Vec<String>,
    pub retries_used: usize,
}

fn ask_for_labels(
    backend: &dyn ChatBackend,
    bundle: &PromptBundle,
    check: impl Fn(&str) -> Result<(), String>,
) -> Result<LabelReply, LlmError> {
    let mut messages = bundle.messages();
    let mut raw = Vec::new();
    for attempt in 0..2 {
        let reply = backend.complete(&messages)?;
        raw.push(reply.clone());
        let problem = match parse_labels_line(&reply) {
            None => "no `LABELS:` line found".to_string(),
            Some(LabelsLine::None) => {
                return Ok(LabelReply {
                    labels: Vec::new(),
                    raw_responses: raw,
                    retries_used: attempt,
                })
            }
            Some(LabelsLine::Labels(labels)) => match labels.iter().try_for_each(|l| check(l)) {
                Ok(()) => {
                    return Ok(LabelReply {
                        labels,
                        raw_responses: raw,
                        retries_used: attempt,
                    })
                }
                Err(p) => p,
            },
        };
        if attempt == 1 {
            return Err(LlmError::Contract(problem));
        }
        tracing::debug!(%problem, "re-prompting after contract violation");
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(format!(
            "Your previous reply could not be accepted: {problem}. Allowed labels: {}. \
Answer again and end with exactly one line `LABELS: <label>; <label>` using only allowed labels, or `LABELS: none`.",
            bundle.injected_labels.join("; ")
        )));
    }
    unreachable!("loop returns on the second attempt")
}

/// Stage 1: filter the candidate narratives. The result is always a subset of `candidates`.
pub fn refine_narratives<S: AsRef<str>>(
    backend: &dyn ChatBackend,
    bundle: &PromptBundle,
    candidates: &[S],
) -> Result<LabelReply, LlmError> {
    bundle.expect_stage(Stage::NarrativeRefine)?;
    let allowed: HashSet<&str> = candidates.iter().map(|c| c.as_ref().trim()).collect();
    ask_for_labels(backend, bundle, |l| {
        if allowed.contains(l) {
            Ok(())
        } else {
            Err(format!("{l:?} is not one of the candidates"))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub narratives: Vec<String>,
    pub subs: Vec<String>,
    pub raw_responses: Vec<String>,
    pub retries_used: usize,
}

impl RefinementResult {
    pub fn other() -> Self {
        RefinementResult {
            narratives: vec![OTHER_LABEL.to_string()],
            subs: vec![OTHER_LABEL.to_string()],
            raw_responses: Vec::new(),
            retries_used: 0,
        }
    }
}

/// Stage 2: one prompt per confirmed narrative, scoped to that narrative's sub-narratives.
pub fn assign_subnarratives<S: AsRef<str>>(
    backend: &dyn ChatBackend,
    article: &Article,
    narratives: &[S],
    taxonomy: &Taxonomy,
) -> Result<RefinementResult, LlmError> {
    let narratives: Vec<String> = narratives.iter().map(|n| n.as_ref().trim().to_string()).collect();
    if narratives.is_empty() {
        return Ok(RefinementResult::other());
    }
    for n in &narratives {
        if !taxonomy.has_narrative(n) {
            return Err(TaxonomyError::UnknownNarrative(n.clone()).into());
        }
    }
    let confirmed: HashSet<&str> = narratives.iter().map(String::as_str).collect();
    let mut result = RefinementResult {
        narratives: narratives.clone(),
        subs: Vec::new(),
        raw_responses: Vec::new(),
        retries_used: 0,
    };
    let mut seen = HashSet::new();
    for n in &narratives {
        let bundle = build_stage2_prompt(article, n, taxonomy)?;
        let reply = ask_for_labels(backend, &bundle, |l| match taxonomy.parent_of(l) {
            Ok(parent) if confirmed.contains(parent) => Ok(()),
            Ok(parent) => Err(format!("{l:?} belongs to {parent:?}, which is not a confirmed narrative")),
            Err(_) => Err(format!("{l:?} is not a known sub-narrative")),
        })?;
        result.retries_used += reply.retries_used;
        result.raw_responses.extend(reply.raw_responses);
        for s in reply.labels {
            if seen.insert(s.clone()) {
                result.subs.push(s);
            }
        }
    }
    Ok(result)
}

pub fn build_react_prompt<S: AsRef<str>>(
    evidence: &[RetrievedEvidence],
    dominant: &str,
    subs: &[S],
    taxonomy: &Taxonomy,
) -> Result<PromptBundle, LlmError> {
    if evidence.is_empty() {
        return Err(LlmError::NoEvidence);
    }
    let dominant = dominant.trim();
    let subs: Vec<String> = subs.iter().map(|s| s.as_ref().trim().to_string()).collect();
    let mut action = taxonomy.render_block(&[dominant], Level::Main)?;
    if !subs.is_empty() {
        action.push('\n');
        action.push_str(&taxonomy.render_block(&subs, Level::Sub)?);
    }
    let mut ordered: Vec<&RetrievedEvidence> = evidence.iter().collect();
    ordered.sort_by_key(|e| e.article_index);
    let observation: String = ordered
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}\n", i + 1, e.sentence.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect();
    let sub_line = if subs.is_empty() {
        "none given".to_string()
    } else {
        subs.join("; ")
    };
    let user = format!(
        "STAGE: {stage}\nDOMINANT NARRATIVE: {dominant}\nSUB-NARRATIVES: {sub_line}\n\n\
Work through the procedure (1) identifying central claims, (2) justifying the dominant narrative, and (3) justifying the sub-narrative, \
using the four sections below.\n\n\
## Thought\n\
Read the Observation sentences and identify the central claims they make, including implicit messaging and \
references to the key themes of the narrative.\n\n\
## Action\n\
Look up the taxonomy entries below. Match the central claims against the definition, example and metadata of the \
dominant narrative, then of each sub-narrative.\n\n{action}\n\
## Observation\n{observation}\n\
## Conclusion\n\
Write a justification of at most {max} words explaining why the article carries the dominant narrative, citing only \
claims found in the Observation sentences. Start this part of your reply with `Conclusion:`.\n",
        stage = Stage::Explain.as_str(),
        max = MAX_EXPLANATION_WORDS,
    );
    let mut injected = vec![dominant.to_string()];
    injected.extend(subs);
    Ok(PromptBundle {
        system: EXPLAIN_SYSTEM.to_string(),
        user,
        stage: Stage::Explain,
        injected_labels: injected,
        evidence: ordered.into_iter().cloned().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Single line, whitespace-normalized.
    pub text: String,
    pub word_count: usize,
    pub evidence_used: Vec<RetrievedEvidence>,
    pub dominant: String,
    pub retries_used: usize,
    pub truncated: bool,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Text after the last `Conclusion:` marker, or the whole reply if there is none.
pub fn extract_conclusion(reply: &str) -> String {
    let lower = reply.to_lowercase();
    let body = match lower.rfind("conclusion:") {
        // lowercase mapping can shift byte offsets for non-ASCII text
        Some(pos) if lower.len() == reply.len() => &reply[pos + "conclusion:".len()..],
        Some(_) => reply.rsplit_once("Conclusion:").map_or(reply, |(_, b)| b),
        None => reply,
    };
    body.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches(|c| c == '*' || c == '`')
        .trim()
        .to_string()
}

fn ends_sentence(token: &str) -> bool {
    let core = token.trim_end_matches(['"', '\'', ')', '\u{201d}', '\u{2019}', '»']);
    core.ends_with(['.', '!', '?', '\u{0964}'])
}

/// Cuts to at most `max` words, preferring the last sentence end within them.
pub fn truncate_words(text: &str, max: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= max {
        return tokens.join(" ");
    }
    let head = &tokens[..max];
    match head.iter().rposition(|t| ends_sentence(t)) {
        Some(i) => head[..=i].join(" "),
        None => head.join(" "),
    }
}

pub fn generate_explanation(backend: &dyn ChatBackend, bundle: &PromptBundle) -> Result<Explanation, LlmError> {
    bundle.expect_stage(Stage::Explain)?;
    let dominant = bundle.injected_labels.first().cloned().unwrap_or_default();
    let mut messages = bundle.messages();
    let first = backend.complete(&messages)?;
    let mut text = extract_conclusion(&first);
    if text.is_empty() {
        return Err(LlmError::EmptyConclusion);
    }
    let mut retries_used = 0;
    let mut truncated = false;
    if word_count(&text) > MAX_EXPLANATION_WORDS {
        retries_used = 1;
        messages.push(ChatMessage::assistant(first));
        messages.push(ChatMessage::user(format!(
            "That conclusion has {} words. Shorten it to at most {MAX_EXPLANATION_WORDS} words, keeping it grounded in the \
Observation sentences. Reply with `Conclusion:` followed by the shortened justification only.",
            word_count(&text)
        )));
        let second = extract_conclusion(&backend.complete(&messages)?);
        if !second.is_empty() {
            text = second;
        }
        if word_count(&text) > MAX_EXPLANATION_WORDS {
            text = truncate_words(&text, MAX_EXPLANATION_WORDS);
            truncated = true;
        }
    }
    Ok(Explanation {
        word_count: word_count(&text),
        text,
        evidence_used: bundle.evidence.clone(),
        dominant,
        retries_used,
        truncated,
    })
}
