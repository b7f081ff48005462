use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::decompose::task_description;
use super::tables;
use super::PlannerError;

/// Environment variable holding the bearer token for the remote backend.
pub const API_KEY_ENV: &str = "HOMEPLAN_LLM_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RuleBased,
    RemoteChat,
    Replay,
}

/// A text-completion service the planner consults with rendered prompts.
pub trait PlannerBackend {
    fn kind(&self) -> BackendKind;
    fn complete(&self, prompt: &str) -> Result<String, PlannerError>;
}

/// Offline, deterministic stand-in for a chat model. Its only free-text
/// skill is expanding a vague task description into items through the
/// bundled intent table; allocation is computed directly by the planner.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedBackend;

impl PlannerBackend for RuleBasedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::RuleBased
    }

    fn complete(&self, prompt: &str) -> Result<String, PlannerError> {
        let Some(task) = task_description(prompt) else {
            return Ok(String::new());
        };
        let task = task.to_lowercase();
        let items = tables::INTENTS
            .iter()
            .find(|(keys, _)| keys.iter().any(|k| task.contains(k)))
            .map(|(_, items)| *items)
            .unwrap_or(&[]);
        Ok(items
            .iter()
            .enumerate()
            .map(|(i, item)| format!("SubTask {}: Bring a {item}.\n", i + 1))
            .collect())
    }
}

/// SHA-256 of the prompt text, hex encoded. Names replay files.
pub fn request_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Serves canned responses from `<dir>/<request_hash>.txt`.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", request_hash(prompt)))
    }

    /// Stores `response` as the canned answer to `prompt`.
    pub fn record(&self, prompt: &str, response: &str) -> Result<PathBuf, PlannerError> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(prompt);
        std::fs::write(&path, response)?;
        Ok(path)
    }
}

impl PlannerBackend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete(&self, prompt: &str) -> Result<String, PlannerError> {
        let path = self.path_for(prompt);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(PlannerError::ReplayMiss(request_hash(prompt)))
            }
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
        }
    }
}

/// Chat-completions client: POSTs `{model, messages}` and reads
/// `choices[0].message.content`. Calls on one instance are serialized.
pub struct RemoteChatBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    lock: Mutex<()>,
}

impl RemoteChatBackend {
    /// Reads the API key from [`API_KEY_ENV`] if set.
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: RemoteConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        RemoteChatBackend { config, api_key, agent, lock: Mutex::new(()) }
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": [{ "role": "system", "content": prompt }],
        })
    }

    fn call_once(&self, body: &serde_json::Value) -> Result<String, PlannerError> {
        let mut req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(body).map_err(|e| PlannerError::Remote(e.to_string()))?;
        let value: serde_json::Value = resp
            .into_body()
            .read_json()
            .map_err(|e| PlannerError::Remote(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| PlannerError::Remote("response has no choices[0].message.content".into()))
    }
}

impl PlannerBackend for RemoteChatBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::RemoteChat
    }

    fn complete(&self, prompt: &str) -> Result<String, PlannerError> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let body = self.request_body(prompt);
        let mut last = None;
        for _ in 0..=self.config.retries {
            match self.call_once(&body) {
                Ok(text) => return Ok(text),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
