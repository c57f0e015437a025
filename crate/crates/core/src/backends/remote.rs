//! Remote hosted-model backend over a chat-completions-style endpoint.
//!
//! Requests are fully deterministic (temperature zero plus a fixed seed) and
//! cached on disk keyed by the SHA-256 of the canonical request JSON, so a
//! repeated run performs zero network calls and reproduces its report byte
//! for byte. Cache writes go through a temp file rename; reads re-hash the
//! stored request and reject corrupted entries.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codebook::Token;
use crate::decode::{BackendError, BackendKind, Context, ModelBackend, Response};

/// TOML-loadable configuration. The credential is named, never stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; absent means no auth.
    pub credential_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    pub cache_dir: PathBuf,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_window")]
    pub context_window: usize,
}

fn default_seed() -> u64 {
    7
}
fn default_max_tokens() -> usize {
    64
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff() -> u64 {
    50
}
fn default_window() -> usize {
    8192
}

impl RemoteConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Counters exposed for cache-contract tests.
#[derive(Debug, Default)]
pub struct RemoteCounters {
    pub network_calls: u64,
    pub cache_hits: u64,
    pub attempts: u64,
}

pub struct RemoteChatBackend {
    config: RemoteConfig,
    system_prompt: Vec<Token>,
    client: reqwest::blocking::Client,
    /// Serializes requests; cache reads stay concurrent.
    pipeline: Mutex<()>,
    counters: Mutex<RemoteCounters>,
}

#[derive(Serialize, Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

#[derive(Serialize, Deserialize)]
struct ChatRequest {
    model: String,
    messages: Vec<ChatMessage>,
    temperature: f64,
    seed: u64,
    max_tokens: usize,
}

impl RemoteChatBackend {
    pub fn new(config: RemoteConfig, system_prompt: Vec<Token>) -> Result<Self, BackendError> {
        fs::create_dir_all(&config.cache_dir)
            .map_err(|e| BackendError::Other(format!("cache dir: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(RemoteChatBackend {
            config,
            system_prompt,
            client,
            pipeline: Mutex::new(()),
            counters: Mutex::new(RemoteCounters::default()),
        })
    }

    pub fn counters(&self) -> RemoteCounters {
        let c = self.counters.lock().unwrap();
        RemoteCounters { network_calls: c.network_calls, cache_hits: c.cache_hits, attempts: c.attempts }
    }

    fn canonical_request(&self, user_content: &str) -> (String, String) {
        let system = self
            .system_prompt
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: vec![
                ChatMessage { role: "system".into(), content: system },
                ChatMessage { role: "user".into(), content: user_content.to_string() },
            ],
            temperature: self.config.temperature,
            seed: self.config.seed,
            max_tokens: self.config.max_tokens,
        };
        let body = serde_json::to_string(&request).expect("request serializes");
        let hash = hex::encode(Sha256::digest(body.as_bytes()));
        (body, hash)
    }

    fn cache_paths(&self, hash: &str) -> (PathBuf, PathBuf) {
        (
            self.config.cache_dir.join(format!("{hash}.request.json")),
            self.config.cache_dir.join(format!("{hash}.response.json")),
        )
    }

    fn read_cache(&self, hash: &str, body: &str) -> Result<Option<String>, BackendError> {
        let (req_path, resp_path) = self.cache_paths(hash);
        if !resp_path.exists() {
            return Ok(None);
        }
        let stored_request = fs::read_to_string(&req_path)
            .map_err(|e| BackendError::CacheCorruption(format!("{}: {e}", req_path.display())))?;
        let stored_hash = hex::encode(Sha256::digest(stored_request.as_bytes()));
        if stored_hash != hash || stored_request != body {
            return Err(BackendError::CacheCorruption(format!(
                "stored request does not match key {hash}"
            )));
        }
        let response = fs::read_to_string(&resp_path)
            .map_err(|e| BackendError::CacheCorruption(format!("{}: {e}", resp_path.display())))?;
        Ok(Some(response))
    }

    fn write_cache(&self, hash: &str, body: &str, response: &str) -> Result<(), BackendError> {
        let (req_path, resp_path) = self.cache_paths(hash);
        atomic_write(&req_path, body)?;
        atomic_write(&resp_path, response)?;
        Ok(())
    }

    fn post_once(&self, body: &str) -> Result<(u16, String), BackendError> {
        let mut request = self
            .client
            .post(&self.config.endpoint)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(var) = &self.config.credential_env {
            if let Ok(secret) = std::env::var(var) {
                request = request.bearer_auth(secret);
            }
        }
        let response = request.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok((status, text))
    }

    /// Full request pipeline: cache, then network with retries.
    fn complete(&self, user_content: &str) -> Result<String, BackendError> {
        let (body, hash) = self.canonical_request(user_content);
        if let Some(cached) = self.read_cache(&hash, &body)? {
            self.counters.lock().unwrap().cache_hits += 1;
            return extract_content(&cached);
        }
        let _serialize = self.pipeline.lock().unwrap();
        // Re-check after acquiring the pipeline: another worker may have
        // filled the entry meanwhile.
        if let Some(cached) = self.read_cache(&hash, &body)? {
            self.counters.lock().unwrap().cache_hits += 1;
            return extract_content(&cached);
        }
        let mut last_error = BackendError::Transport("no attempts made".into());
        for attempt in 0..self.config.max_attempts {
            {
                let mut c = self.counters.lock().unwrap();
                c.attempts += 1;
                c.network_calls += 1;
            }
            match self.post_once(&body) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    self.write_cache(&hash, &body, &text)?;
                    return extract_content(&text);
                }
                Ok((status, text)) if (400..500).contains(&status) => {
                    return Err(BackendError::Refusal(format!("HTTP {status}: {text}")));
                }
                Ok((status, text)) => {
                    last_error = BackendError::Transport(format!("HTTP {status}: {text}"));
                }
                Err(e) => last_error = e,
            }
            if attempt + 1 < self.config.max_attempts {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms << attempt.min(8),
                ));
            }
        }
        Err(last_error)
    }
}

fn atomic_write(path: &Path, content: &str) -> Result<(), BackendError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(|e| BackendError::Other(format!("cache write: {e}")))?;
    fs::rename(&tmp, path).map_err(|e| BackendError::Other(format!("cache rename: {e}")))?;
    Ok(())
}

fn extract_content(response_text: &str) -> Result<String, BackendError> {
    let value: serde_json::Value = serde_json::from_str(response_text)
        .map_err(|e| BackendError::Transport(format!("bad response JSON: {e}")))?;
    let content = value["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| BackendError::Transport("response has no message content".into()))?;
    Ok(content.to_string())
}

impl ModelBackend for RemoteChatBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Token
    }

    fn context_window(&self) -> usize {
        self.config.context_window
    }

    /// One full model response, whitespace-segmented into tokens.
    fn respond(&self, context: &Context) -> Result<Response, BackendError> {
        let Context::Tokens(tokens) = context else {
            return Err(BackendError::Other("remote backend expects tokens".into()));
        };
        if tokens.len() < self.system_prompt.len()
            || tokens[..self.system_prompt.len()] != self.system_prompt[..]
        {
            return Err(BackendError::Other(
                "context does not start with the configured system prompt".into(),
            ));
        }
        let user = tokens[self.system_prompt.len()..]
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let content = self.complete(&user)?;
        let toks: Vec<Token> = content.split_whitespace().map(Token::new).collect();
        if toks.is_empty() {
            return Err(BackendError::Transport("empty model response".into()));
        }
        Ok(Response::Tokens(toks))
    }

    fn identity(&self) -> String {
        format!("remote({} @ {})", self.config.model, self.config.endpoint)
    }
}
