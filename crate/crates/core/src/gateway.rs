//! Chat-completion client with retries, an in-flight limit and a
//! content-addressed response cache.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Temperature for evaluated models and the judge.
pub const EVAL_TEMPERATURE: f64 = 0.0;
/// Temperature for SQL-to-text paraphrasing.
pub const SQL_TO_TEXT_TEMPERATURE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_retries: u32,
}

impl ChatRequest {
    pub fn new(model: &str, system: &str, user: &str, temperature: f64) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            system: system.to_string(),
            user: user.to_string(),
            temperature,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub name: String,
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; `None` sends no auth.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication failed for `{endpoint}`: {detail}")]
    Auth { endpoint: String, detail: String },
    #[error("`{endpoint}` failed after {attempts} attempts: {last}")]
    ExhaustedRetries {
        endpoint: String,
        attempts: u32,
        last: String,
    },
    #[error("`{endpoint}` returned an unusable response: {detail}")]
    NonText { endpoint: String, detail: String },
    #[error("cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Wire transport for one request. Implementations classify failures so
/// the gateway can decide whether to retry.
pub trait ChatBackend: Send + Sync {
    fn send(&self, endpoint: &EndpointConfig, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Backend driven by a closure, for tests and offline replays.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&EndpointConfig, &ChatRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn send(&self, endpoint: &EndpointConfig, request: &ChatRequest) -> Result<String, TransportError> {
        (self.0)(endpoint, request)
    }
}

/// OpenAI-style `POST {base_url}/chat/completions`.
pub struct HttpBackend {
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> HttpBackend {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend { agent }
    }
}

impl Default for HttpBackend {
    fn default() -> Self {
        HttpBackend::new(Duration::from_secs(120))
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, endpoint: &EndpointConfig, request: &ChatRequest) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let mut call = self.agent.post(&url);
        if let Some(var) = &endpoint.credential_env {
            let key = std::env::var(var).map_err(|_| TransportError::Auth(format!("environment variable {var} is not set")))?;
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(TransportError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(TransportError::Transient(format!("HTTP {status}"))),
            _ => return Err(TransportError::Fatal(format!("HTTP {status}: {text}"))),
        }
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| TransportError::Fatal(format!("invalid JSON: {e}")))?;
        json.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| TransportError::Fatal("no text content in choices[0].message".into()))
    }
}

struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    endpoint: EndpointConfig,
    backoff: Duration,
    calls: AtomicUsize,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(endpoint: EndpointConfig, backend: Arc<dyn ChatBackend>) -> Gateway {
        let max = endpoint.max_concurrency.max(1);
        Gateway {
            backend,
            endpoint,
            backoff: Duration::from_millis(500),
            calls: AtomicUsize::new(0),
            limiter: Limiter {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                max,
            },
        }
    }

    pub fn http(endpoint: EndpointConfig) -> Gateway {
        Gateway::new(endpoint, Arc::new(HttpBackend::default()))
    }

    /// Base delay before the first retry; doubles per attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Gateway {
        self.backoff = backoff;
        self
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    /// Requests sent to the backend so far (cache hits excluded).
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let attempts = request.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff.saturating_mul(1 << (attempt - 1).min(6)));
            }
            let result = {
                let _slot = self.limiter.acquire();
                self.calls.fetch_add(1, Ordering::SeqCst);
                self.backend.send(&self.endpoint, request)
            };
            match result {
                Ok(text) => return Ok(text),
                Err(TransportError::Transient(e)) => {
                    log::warn!("{}: attempt {} failed: {e}", self.endpoint.name, attempt + 1);
                    last = e;
                }
                Err(TransportError::Auth(detail)) => {
                    return Err(GatewayError::Auth {
                        endpoint: self.endpoint.name.clone(),
                        detail,
                    })
                }
                Err(TransportError::Fatal(detail)) => {
                    return Err(GatewayError::NonText {
                        endpoint: self.endpoint.name.clone(),
                        detail,
                    })
                }
            }
        }
        Err(GatewayError::ExhaustedRetries {
            endpoint: self.endpoint.name.clone(),
            attempts,
            last,
        })
    }

    pub fn cached_complete(&self, request: &ChatRequest, cache: &ResponseCache) -> Result<String, GatewayError> {
        let key = ResponseCache::key(&self.endpoint, request);
        if let Some(text) = cache.get(&key)? {
            return Ok(text);
        }
        let text = self.complete(request)?;
        cache.put(&key, &text)?;
        Ok(text)
    }
}

/// One file per request under `dir`, named by the hex SHA-256 of the
/// request identity, holding the raw response text.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: &Path) -> Result<ResponseCache, GatewayError> {
        std::fs::create_dir_all(dir).map_err(|source| GatewayError::Cache {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(ResponseCache { dir: dir.to_path_buf() })
    }

    pub fn key(endpoint: &EndpointConfig, request: &ChatRequest) -> String {
        let identity = serde_json::json!([
            endpoint.base_url,
            request.model,
            request.system,
            request.user,
            request.temperature,
        ]);
        hex::encode(Sha256::digest(identity.to_string().as_bytes()))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    /// Cached text, or `None` on a miss. Unreadable entries count as misses.
    pub fn get(&self, key: &str) -> Result<Option<String>, GatewayError> {
        let path = self.path(key);
        match std::fs::read(&path) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(text) => Ok(Some(text)),
                Err(_) => {
                    log::warn!("cache entry {} is corrupt; refetching", path.display());
                    Ok(None)
                }
            },
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(source) => Err(GatewayError::Cache { path, source }),
        }
    }

    pub fn put(&self, key: &str, text: &str) -> Result<(), GatewayError> {
        let path = self.path(key);
        static SEQ: AtomicUsize = AtomicUsize::new(0);
        let n = SEQ.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        let io = |source| GatewayError::Cache {
            path: path.clone(),
            source,
        };
        std::fs::write(&tmp, text.as_bytes()).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }
}
