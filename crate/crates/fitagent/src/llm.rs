//! Chat-completion backends: live HTTP, deterministic replay, and recording.
//!
//! Every request the agent makes goes through the [`ChatBackend`] trait, so a
//! whole run can be captured once with [`RecordBackend`] and then re-executed
//! byte-for-byte with [`ReplayBackend`] and no network access. Replay matches
//! requests by a canonical digest that ignores formatting noise (whitespace
//! runs inside message content) but is sensitive to everything that changes
//! the meaning of a request: model id, temperature, roles, and text.

use std::collections::VecDeque;
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Who authored a chat message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::System => f.write_str("system"),
            Role::User => f.write_str("user"),
            Role::Assistant => f.write_str("assistant"),
        }
    }
}

/// A single chat message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// A chat-completion request.
///
/// Invariants, enforced by [`ChatRequest::new`]: at least one message, the
/// first message has the system role, and `temperature` (when present) lies
/// in `[0, 2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl ChatRequest {
    pub fn new(
        model: impl Into<String>,
        messages: Vec<Message>,
        temperature: Option<f64>,
    ) -> Result<Self, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::InvalidRequest("request has no messages".into()));
        }
        if messages[0].role != Role::System {
            return Err(LlmError::InvalidRequest(format!(
                "first message must be a system message, got {}",
                messages[0].role
            )));
        }
        if let Some(t) = temperature {
            if !t.is_finite() || !(0.0..=2.0).contains(&t) {
                return Err(LlmError::InvalidRequest(format!(
                    "temperature {t} outside [0, 2]"
                )));
            }
        }
        Ok(ChatRequest { model: model.into(), messages, temperature })
    }
}

/// Token accounting reported by a live endpoint, absent in fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A chat-completion response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl ChatResponse {
    pub fn text(content: impl Into<String>) -> Self {
        ChatResponse { content: content.into(), finish_reason: "stop".into(), usage: None }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("replay transcript exhausted at position {position}")]
    ReplayExhausted { position: usize },
    #[error("replay digest mismatch at position {position}: expected {expected}, got {actual}")]
    DigestMismatch { position: usize, expected: String, actual: String },
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that can answer a chat request.
pub trait ChatBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
    /// Short identifier for traces ("live", "replay", "record(live)").
    fn id(&self) -> String;
}

/// Collapses every whitespace run to one space, so formatting-only prompt
/// changes (wrapping, indentation) do not invalidate recorded transcripts.
fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical digest of a request: SHA-256 hex over model, temperature, and
/// each message's role plus whitespace-collapsed content, all separated by
/// newlines. `None` temperature and any set temperature always differ.
pub fn digest_request(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request.model.as_bytes());
    hasher.update(b"\n");
    match request.temperature {
        // {:?} keeps 0.1 and 0.10 identical while separating None from 0.0.
        Some(t) => hasher.update(format!("temp={t:?}\n").as_bytes()),
        None => hasher.update(b"temp=none\n"),
    }
    for message in &request.messages {
        hasher.update(message.role.to_string().as_bytes());
        hasher.update(b":");
        hasher.update(collapse_whitespace(&message.content).as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Default sampling temperature per model family: deterministic-ish 0.1 for
/// GPT-4-class models, endpoint default (absent) for GPT-5-class models.
pub fn default_temperature(model: &str) -> Option<f64> {
    if model.to_ascii_lowercase().contains("gpt-4") {
        Some(0.1)
    } else {
        None
    }
}

/// Model, sampling, and system-prompt settings shared by every request in a
/// run. Keeping them in one place means the recall, codegen, and reasoning
/// prompts of a single run always agree on the chat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatConfig {
    pub model: String,
    pub temperature: Option<f64>,
    pub system_prompt: String,
}

impl ChatConfig {
    /// Applies the per-family default temperature for `model`.
    pub fn new(model: impl Into<String>, system_prompt: impl Into<String>) -> Self {
        let model = model.into();
        let temperature = default_temperature(&model);
        ChatConfig { model, temperature, system_prompt: system_prompt.into() }
    }

    /// A one-shot request: the run's system prompt plus one user message.
    pub fn request(&self, user_text: impl Into<String>) -> Result<ChatRequest, LlmError> {
        ChatRequest::new(
            &self.model,
            vec![Message::system(&self.system_prompt), Message::user(user_text.into())],
            self.temperature,
        )
    }
}

/// One request/response pair in a transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// An ordered record of every exchange in a run.
///
/// The JSONL serialization holds entries only; `backend_id` and
/// `recorded_at` exist in memory for diagnostics and never reach disk, so
/// record-then-replay round trips are byte-identical.
#[derive(Debug, Clone, Default)]
pub struct ChatTranscript {
    pub entries: Vec<TranscriptEntry>,
    pub backend_id: Option<String>,
    pub recorded_at: Option<String>,
}

impl ChatTranscript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                LlmError::Transcript(format!("line {}: {e}", lineno + 1))
            })?;
            entries.push(entry);
        }
        Ok(ChatTranscript { entries, backend_id: None, recorded_at: None })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        let mut out = String::new();
        for entry in &self.entries {
            let line = serde_json::to_string(entry)
                .map_err(|e| LlmError::Transcript(e.to_string()))?;
            out.push_str(&line);
            out.push('\n');
        }
        std::fs::write(path.as_ref(), out)?;
        Ok(())
    }
}

/// How strictly replay checks that the run matches the recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Digest of each incoming request must equal the recorded digest.
    Strict,
    /// Answers by position only; tolerates prompt edits since recording.
    Lenient,
}

/// Serves recorded responses in order, never touching the network.
pub struct ReplayBackend {
    queue: VecDeque<TranscriptEntry>,
    position: usize,
    mode: ReplayMode,
}

impl ReplayBackend {
    pub fn new(transcript: ChatTranscript, mode: ReplayMode) -> Self {
        ReplayBackend { queue: transcript.entries.into(), position: 0, mode }
    }

    pub fn from_file(path: impl AsRef<Path>, mode: ReplayMode) -> Result<Self, LlmError> {
        Ok(Self::new(ChatTranscript::load(path)?, mode))
    }

    /// Entries not yet consumed.
    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let entry = self
            .queue
            .pop_front()
            .ok_or(LlmError::ReplayExhausted { position: self.position })?;
        if self.mode == ReplayMode::Strict {
            let actual = digest_request(request);
            if actual != entry.digest {
                return Err(LlmError::DigestMismatch {
                    position: self.position,
                    expected: entry.digest,
                    actual,
                });
            }
        }
        self.position += 1;
        Ok(entry.response)
    }

    fn id(&self) -> String {
        "replay".into()
    }
}

/// Wraps another backend and appends every exchange to a JSONL file.
pub struct RecordBackend {
    inner: Box<dyn ChatBackend>,
    file: std::fs::File,
}

impl RecordBackend {
    pub fn new(inner: Box<dyn ChatBackend>, path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let file = OpenOptions::new().create(true).append(true).open(path.as_ref())?;
        Ok(RecordBackend { inner, file })
    }
}

impl ChatBackend for RecordBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(request)?;
        let entry = TranscriptEntry {
            digest: digest_request(request),
            request: request.clone(),
            response: response.clone(),
        };
        let line = serde_json::to_string(&entry)
            .map_err(|e| LlmError::Transcript(e.to_string()))?;
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        Ok(response)
    }

    fn id(&self) -> String {
        format!("record({})", self.inner.id())
    }
}

/// Talks to an OpenAI-compatible chat-completions endpoint.
pub struct LiveBackend {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

/// Environment variable holding the API key for live runs.
pub const API_KEY_VAR: &str = "FITAGENT_API_KEY";
/// Environment variable overriding the endpoint base URL.
pub const BASE_URL_VAR: &str = "FITAGENT_BASE_URL";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

impl LiveBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(std::time::Duration::from_secs(120))
            .build();
        LiveBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads credentials from `FITAGENT_API_KEY` and an optional base URL
    /// from `FITAGENT_BASE_URL`.
    pub fn from_env() -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_VAR).map_err(|_| {
            LlmError::InvalidRequest(format!("missing credential: set {API_KEY_VAR}"))
        })?;
        let base_url =
            std::env::var(BASE_URL_VAR).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Ok(Self::new(base_url, api_key))
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
        });
        if let Some(t) = request.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let url = format!("{}/chat/completions", self.base_url);
        let result = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_json(body);
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(LlmError::Http { status, body });
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(LlmError::Network(t.to_string()));
            }
        };
        let parsed: serde_json::Value = response
            .into_json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        let first = parsed
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| LlmError::MalformedResponse("no choices in response".into()))?;
        let content = first
            .pointer("/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| LlmError::MalformedResponse("choice has no message content".into()))?
            .to_string();
        let finish_reason = first
            .get("finish_reason")
            .and_then(|f| f.as_str())
            .unwrap_or("stop")
            .to_string();
        let usage = parsed.get("usage").and_then(|u| {
            Some(Usage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(ChatResponse { content, finish_reason, usage })
    }

    fn id(&self) -> String {
        "live".into()
    }
}
