//! Chat backends: a scripted fixture replayer for offline runs plus HTTP
//! clients for OpenAI-compatible and Ollama-native endpoints.
//!
//! Backends are deliberately dumb transports. They never retry, never
//! reshape content, and report exactly what the server (or fixture file)
//! returned; parse handling and retry policy live in the pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::domain::AgentKind;
use crate::prompts::Message;

/// Default request timeout for HTTP backends.
pub const DEFAULT_TIMEOUT_SECS: u64 = 300;

/// One chat completion request, backend-agnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// Why the model stopped emitting tokens, normalized across dialects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    /// Natural stop.
    Stop,
    /// Output hit the token cap; the tail may be missing.
    LengthCapped,
    /// Anything else the server reported.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency: Duration,
    pub token_counts: Option<TokenCounts>,
}

/// Identifies which agent/article pair a request serves. HTTP backends
/// ignore it; the scripted backend uses it as the fixture key and every
/// backend logs it for audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRoute {
    pub agent: AgentKind,
    pub article_id: String,
}

impl RequestRoute {
    pub fn new(agent: AgentKind, article_id: impl Into<String>) -> Self {
        RequestRoute {
            agent,
            article_id: article_id.into(),
        }
    }

    pub fn key(&self) -> String {
        scripted_fixture_key(self.agent, &self.article_id)
    }
}

/// Fixture key for an (agent, article) pair: `<agent_slug>/<article_id>`.
pub fn scripted_fixture_key(agent: AgentKind, article_id: &str) -> String {
    format!("{}/{}", agent.slug(), article_id)
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Network-level failure: connect, timeout, broken pipe.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The server answered with a non-success status.
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    /// The response body did not have the expected shape.
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    /// Scripted backend has no fixture for the requested key.
    #[error("no fixture for key {0}")]
    FixtureMissing(String),
}

impl BackendError {
    /// Transport failures abort the article; everything else is recorded as
    /// a stage failure and the run moves on.
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// A synchronous chat completion backend.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        route: &RequestRoute,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, BackendError>;

    /// Short human-readable identity, recorded in run records.
    fn descriptor(&self) -> String;
}

/// Replays canned agent outputs from a fixture directory. Fixtures are
/// loaded once at construction and the store is read-only afterwards, so
/// identical runs are byte-for-byte identical.
///
/// A fixture whose whitespace-delimited token count reaches the request's
/// output cap is reported as length-capped, which is how truncated-output
/// fixtures exercise the parser's truncation handling.
pub struct ScriptedBackend {
    root: PathBuf,
    fixtures: BTreeMap<String, String>,
    request_log: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    /// Loads every `<agent_slug>/<article_id>.txt` under `root`.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, std::io::Error> {
        let root = root.as_ref().to_path_buf();
        let mut fixtures = BTreeMap::new();
        for agent in AgentKind::ALL {
            let dir = root.join(agent.slug());
            if !dir.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                let text = fs::read_to_string(&path)?;
                fixtures.insert(scripted_fixture_key(agent, stem), text);
            }
        }
        Ok(ScriptedBackend {
            root,
            fixtures,
            request_log: Mutex::new(Vec::new()),
        })
    }

    /// Builds a backend from in-memory fixtures, for tests.
    pub fn from_fixtures(fixtures: BTreeMap<String, String>) -> Self {
        ScriptedBackend {
            root: PathBuf::from("<memory>"),
            fixtures,
            request_log: Mutex::new(Vec::new()),
        }
    }

    pub fn fixture_count(&self) -> usize {
        self.fixtures.len()
    }

    /// Every fixture key requested so far, in request order.
    pub fn request_log(&self) -> Vec<String> {
        self.request_log.lock().expect("request log poisoned").clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        route: &RequestRoute,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, BackendError> {
        let key = route.key();
        self.request_log
            .lock()
            .expect("request log poisoned")
            .push(key.clone());
        let text = self
            .fixtures
            .get(&key)
            .ok_or(BackendError::FixtureMissing(key))?;
        let tokens = text.split_whitespace().count();
        let finish_reason = if tokens >= request.max_output_tokens as usize {
            FinishReason::LengthCapped
        } else {
            FinishReason::Stop
        };
        Ok(CompletionResponse {
            text: text.clone(),
            finish_reason,
            latency: Duration::ZERO,
            token_counts: Some(TokenCounts {
                prompt: 0,
                completion: tokens as u64,
            }),
        })
    }

    fn descriptor(&self) -> String {
        format!("scripted:{}", self.root.display())
    }
}

/// Wire formats spoken by [`HttpBackend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireDialect {
    /// `POST {base}/v1/chat/completions`, OpenAI chat completions shape.
    OpenAi,
    /// `POST {base}/api/chat`, Ollama native shape.
    Ollama,
}

/// HTTP chat backend speaking either dialect. The API key, when set, goes
/// into the Authorization header and is never logged or persisted.
pub struct HttpBackend {
    dialect: WireDialect,
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(
        dialect: WireDialect,
        base_url: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, BackendError> {
        Self::with_timeout(dialect, base_url, api_key, Duration::from_secs(DEFAULT_TIMEOUT_SECS))
    }

    pub fn with_timeout(
        dialect: WireDialect,
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            dialect,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        match self.dialect {
            WireDialect::OpenAi => format!("{}/v1/chat/completions", self.base_url),
            WireDialect::Ollama => format!("{}/api/chat", self.base_url),
        }
    }
}

fn messages_json(messages: &[Message]) -> Value {
    Value::Array(
        messages
            .iter()
            .map(|m| json!({"role": m.role, "content": m.content}))
            .collect(),
    )
}

/// Request body for the OpenAI chat completions dialect.
pub fn openai_payload(request: &CompletionRequest) -> Value {
    json!({
        "model": request.model_id,
        "messages": messages_json(&request.messages),
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
        "stream": false,
    })
}

/// Request body for the Ollama native chat dialect.
pub fn ollama_payload(request: &CompletionRequest) -> Value {
    json!({
        "model": request.model_id,
        "messages": messages_json(&request.messages),
        "options": {
            "temperature": request.temperature,
            "num_predict": request.max_output_tokens,
        },
        "stream": false,
    })
}

/// Maps a finish/done reason string onto the normalized enum. Both dialects
/// use "stop" and "length".
pub fn map_finish_reason(reason: Option<&str>) -> FinishReason {
    match reason {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::LengthCapped,
        _ => FinishReason::Other,
    }
}

fn parse_openai_response(body: &Value) -> Result<(String, FinishReason, Option<TokenCounts>), BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0]".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::MalformedResponse("missing message.content".into()))?
        .to_string();
    let finish = map_finish_reason(choice.get("finish_reason").and_then(Value::as_str));
    let tokens = match (
        body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        body.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    ) {
        (Some(prompt), Some(completion)) => Some(TokenCounts { prompt, completion }),
        _ => None,
    };
    Ok((text, finish, tokens))
}

fn parse_ollama_response(body: &Value) -> Result<(String, FinishReason, Option<TokenCounts>), BackendError> {
    let text = body
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::MalformedResponse("missing message.content".into()))?
        .to_string();
    let finish = map_finish_reason(body.get("done_reason").and_then(Value::as_str));
    let tokens = match (
        body.get("prompt_eval_count").and_then(Value::as_u64),
        body.get("eval_count").and_then(Value::as_u64),
    ) {
        (Some(prompt), Some(completion)) => Some(TokenCounts { prompt, completion }),
        _ => None,
    };
    Ok((text, finish, tokens))
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        _route: &RequestRoute,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, BackendError> {
        let payload = match self.dialect {
            WireDialect::OpenAi => openai_payload(request),
            WireDialect::Ollama => ollama_payload(request),
        };
        let mut http = self.client.post(self.endpoint()).json(&payload);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }

        let started = Instant::now();
        let response = http
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let body_text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let latency = started.elapsed();

        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: body_text.chars().take(500).collect(),
            });
        }
        let body: Value = serde_json::from_str(&body_text)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let (text, finish_reason, token_counts) = match self.dialect {
            WireDialect::OpenAi => parse_openai_response(&body)?,
            WireDialect::Ollama => parse_ollama_response(&body)?,
        };
        Ok(CompletionResponse {
            text,
            finish_reason,
            latency,
            token_counts,
        })
    }

    fn descriptor(&self) -> String {
        let dialect = match self.dialect {
            WireDialect::OpenAi => "openai",
            WireDialect::Ollama => "ollama",
        };
        format!("{}:{}", dialect, self.base_url)
    }
}
