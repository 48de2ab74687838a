use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::codec::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};

use super::error::StageError;

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Semantic,
    Signal,
    Cluster,
    Arbitration,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Semantic => "semantic",
            Stage::Signal => "signal",
            Stage::Cluster => "cluster",
            Stage::Arbitration => "arbitration",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One chat completion request. `attempt` is 0 for the first try and 1 for
/// the repair retry.
#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub stage: Stage,
    pub sample_id: &'a str,
    pub attempt: u32,
    pub system: &'a str,
    pub user: String,
    pub image_locator: Option<&'a str>,
}

/// A text or vision language model.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, StageError>;
}

/// A canned reply keyed by stage, sample and attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub stage: Stage,
    pub sample_id: String,
    #[serde(default)]
    pub attempt: u32,
    pub reply: String,
}

/// Replays canned replies. A request without a script is an error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    replies: HashMap<(Stage, String, u32), String>,
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = ScriptedReply>) -> Self {
        let mut c = Self::new();
        for r in records {
            c.insert(r);
        }
        c
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::from_records(read_jsonl::<ScriptedReply>(path)?))
    }

    pub fn insert(&mut self, r: ScriptedReply) {
        self.replies.insert((r.stage, r.sample_id, r.attempt), r.reply);
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

pub fn write_transcript(path: &Path, records: &[ScriptedReply]) -> Result<()> {
    write_jsonl(path, None, records)
}

impl LanguageModel for ScriptedClient {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, StageError> {
        self.replies
            .get(&(req.stage, req.sample_id.to_string(), req.attempt))
            .cloned()
            .ok_or_else(|| StageError::MissingScript {
                stage: req.stage.as_str(),
                sample_id: req.sample_id.to_string(),
                attempt: req.attempt,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientMode {
    Live,
    Scripted,
    /// No language model; deterministic templates and the rule arbiter.
    Rule,
}

impl FromStr for ClientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(ClientMode::Live),
            "scripted" => Ok(ClientMode::Scripted),
            "rule" => Ok(ClientMode::Rule),
            other => Err(Error::Parse(format!("unknown client mode {other:?}"))),
        }
    }
}

pub const LLM_ENDPOINT_VAR: &str = "FUSION_LLM_ENDPOINT";
pub const LLM_API_KEY_VAR: &str = "FUSION_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub mode: ClientMode,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Transcript for scripted mode.
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    #[serde(default = "default_client_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_seed() -> u64 {
    42
}

fn default_client_timeout_ms() -> u64 {
    120_000
}

impl ClientConfig {
    pub fn rule() -> Self {
        Self {
            mode: ClientMode::Rule,
            endpoint: None,
            model: String::new(),
            temperature: 0.0,
            seed: default_seed(),
            transcript: None,
            timeout_ms: default_client_timeout_ms(),
        }
    }

    pub fn scripted(transcript: impl Into<PathBuf>) -> Self {
        Self {
            mode: ClientMode::Scripted,
            transcript: Some(transcript.into()),
            ..Self::rule()
        }
    }

    /// Builds the client. Rule mode has none.
    pub fn build(&self) -> Result<Option<Box<dyn LanguageModel>>> {
        match self.mode {
            ClientMode::Rule => Ok(None),
            ClientMode::Scripted => {
                let path = self.transcript.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("scripted mode needs a transcript file".into())
                })?;
                Ok(Some(Box::new(ScriptedClient::from_file(path)?)))
            }
            ClientMode::Live => {
                let endpoint = std::env::var(LLM_ENDPOINT_VAR)
                    .ok()
                    .or_else(|| self.endpoint.clone())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "live mode needs an endpoint (config or {LLM_ENDPOINT_VAR})"
                        ))
                    })?;
                Ok(Some(Box::new(LiveClient::new(
                    endpoint,
                    self.model.clone(),
                    self.temperature,
                    self.seed,
                    Duration::from_millis(self.timeout_ms),
                ))))
            }
        }
    }
}

/// Chat-completions style HTTP client.
pub struct LiveClient {
    endpoint: String,
    model: String,
    temperature: f64,
    seed: u64,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl LiveClient {
    pub fn new(endpoint: String, model: String, temperature: f64, seed: u64, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint,
            model,
            temperature,
            seed,
            api_key: std::env::var(LLM_API_KEY_VAR).ok(),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    /// Request body; a local image file is inlined as a data URL.
    pub fn request_body(&self, req: &ChatRequest<'_>) -> Value {
        let mut content = vec![json!({"type": "text", "text": req.user})];
        if let Some(loc) = req.image_locator {
            if let Some(url) = image_url(loc) {
                content.push(json!({"type": "image_url", "image_url": {"url": url}}));
            }
        }
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "seed": self.seed,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": content},
            ],
        })
    }
}

fn image_url(locator: &str) -> Option<String> {
    if locator.starts_with("http://") || locator.starts_with("https://") || locator.starts_with("data:") {
        return Some(locator.to_string());
    }
    let path = Path::new(locator);
    let bytes = std::fs::read(path).ok()?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    };
    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
    Some(format!("data:{mime};base64,{data}"))
}

impl LanguageModel for LiveClient {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, StageError> {
        let unavailable = |detail: String| StageError::ClientUnavailable {
            stage: req.stage.as_str(),
            detail,
        };
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(self.request_body(req))
            .map_err(|e| unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("HTTP status {}", resp.status())));
        }
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| unavailable(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| StageError::Schema {
                stage: req.stage.as_str(),
                detail: "reply has no choices[0].message.content".into(),
            })
    }
}

/// The JSON object a reply ends with: the last fenced block that parses, or
/// the whole reply when it is bare JSON.
pub fn extract_json_block(text: &str) -> Option<Value> {
    let mut found = None;
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let Some(end) = after[body_start..].find("```") else {
            break;
        };
        let body = &after[body_start..body_start + end];
        if let Ok(v) = serde_json::from_str::<Value>(body.trim()) {
            if v.is_object() {
                found = Some(v);
            }
        }
        rest = &after[body_start + end + 3..];
    }
    if found.is_some() {
        return found;
    }
    serde_json::from_str::<Value>(text.trim())
        .ok()
        .filter(Value::is_object)
}
