//! Blocking chat-completion client with retries, an on-disk response cache,
//! JSONL request logging and a cap on concurrent requests.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompts::{fnv1a, PromptKind, PromptSet};
use super::{CotText, LanguageModel, RelVerdict, TermList};
use crate::corpus::{Document, QueryRecord};
use crate::error::{Error, Result};

pub const ENV_ENDPOINT: &str = "PROQE_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "PROQE_LLM_API_KEY";
pub const ENV_MODEL: &str = "PROQE_LLM_MODEL";

const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Debug, Clone)]
pub struct ChatClientConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub cache_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            api_key: None,
            model: DEFAULT_MODEL.to_string(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            cache_path: None,
            log_path: None,
        }
    }
}

impl ChatClientConfig {
    /// Defaults overridden by `PROQE_LLM_ENDPOINT`, `PROQE_LLM_API_KEY` and
    /// `PROQE_LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            cfg.endpoint = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            cfg.api_key = Some(v).filter(|k| !k.is_empty());
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            cfg.model = v;
        }
        cfg
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    response: String,
}

struct Permits {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct PermitGuard<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.in_flight.lock().expect("permit lock poisoned");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("permit lock poisoned");
        }
        *n += 1;
        PermitGuard(self)
    }
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("permit lock poisoned");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

pub struct ChatClient {
    config: ChatClientConfig,
    prompts: PromptSet,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, String>>,
    cache_file: Option<Mutex<File>>,
    log_file: Option<Mutex<File>>,
    permits: Permits,
}

impl ChatClient {
    pub fn new(config: ChatClientConfig, prompts: PromptSet) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();

        let mut cache = HashMap::new();
        let cache_file = match &config.cache_path {
            Some(path) => {
                if path.exists() {
                    let f = File::open(path).map_err(|e| Error::io(path, e))?;
                    for (i, line) in BufReader::new(f).lines().enumerate() {
                        let line = line.map_err(|e| Error::io(path, e))?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        let entry: CacheEntry = serde_json::from_str(&line)
                            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
                        cache.insert(entry.key, entry.response);
                    }
                }
                Some(Mutex::new(open_append(path)?))
            }
            None => None,
        };
        let log_file = match &config.log_path {
            Some(path) => Some(Mutex::new(open_append(path)?)),
            None => None,
        };
        let limit = config.max_in_flight.max(1);
        Ok(Self {
            config,
            prompts,
            agent,
            cache: Mutex::new(cache),
            cache_file,
            log_file,
            permits: Permits {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
        })
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn cached_responses(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    fn cache_key(&self, kind: PromptKind, prompt: &str) -> String {
        let template = self.prompts.get(kind).fingerprint();
        let inputs = fnv1a(format!("{}\u{0}{prompt}", self.config.model).as_bytes());
        format!("{template:016x}-{inputs:016x}")
    }

    /// Renders `kind`, then answers from cache or the endpoint.
    fn complete(&self, kind: PromptKind, prompt: String) -> Result<String> {
        let key = self.cache_key(kind, &prompt);
        if let Some(hit) = self.cache.lock().expect("cache lock poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let body = json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": 0,
        });

        let mut last_error = String::new();
        let mut backoff = self.config.initial_backoff;
        let attempts = self.config.max_attempts.max(1);
        for attempt in 1..=attempts {
            let outcome = {
                let _permit = self.permits.acquire();
                self.send_once(&body)
            };
            match outcome {
                Attempt::Done(text) => {
                    self.log(kind, &body, Some(&text), None, attempt);
                    self.store(key, &text)?;
                    return Ok(text);
                }
                Attempt::Fatal(msg) => {
                    self.log(kind, &body, None, Some(&msg), attempt);
                    return Err(Error::LlmTransport {
                        attempts: attempt,
                        message: msg,
                    });
                }
                Attempt::Retry(msg) => {
                    tracing::warn!(attempt, error = %msg, "llm request failed");
                    self.log(kind, &body, None, Some(&msg), attempt);
                    last_error = msg;
                    if attempt < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(Error::LlmTransport {
            attempts,
            message: last_error,
        })
    }

    fn send_once(&self, body: &serde_json::Value) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}: {text}"));
        }
        if status >= 400 {
            return Attempt::Fatal(format!("HTTP {status}: {text}"));
        }
        let parsed: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(format!("invalid JSON response: {e}")),
        };
        match parsed["choices"][0]["message"]["content"].as_str() {
            Some(content) => Attempt::Done(content.to_string()),
            None => Attempt::Fatal(format!("response has no choices[0].message.content: {text}")),
        }
    }

    fn store(&self, key: String, response: &str) -> Result<()> {
        if let Some(file) = &self.cache_file {
            let line = serde_json::to_string(&CacheEntry {
                key: key.clone(),
                response: response.to_string(),
            })?;
            let mut f = file.lock().expect("cache file lock poisoned");
            writeln!(f, "{line}").map_err(|e| {
                Error::io(self.config.cache_path.clone().unwrap_or_default(), e)
            })?;
        }
        self.cache
            .lock()
            .expect("cache lock poisoned")
            .insert(key, response.to_string());
        Ok(())
    }

    fn log(
        &self,
        kind: PromptKind,
        request: &serde_json::Value,
        response: Option<&str>,
        error: Option<&str>,
        attempt: u32,
    ) {
        let Some(file) = &self.log_file else { return };
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let line = json!({
            "ts": ts,
            "template": kind.file_name(),
            "attempt": attempt,
            "request": request,
            "response": response,
            "error": error,
        });
        let mut f = file.lock().expect("log lock poisoned");
        if let Err(e) = writeln!(f, "{line}") {
            tracing::warn!(error = %e, "could not write llm log");
        }
    }
}

fn open_append(path: &PathBuf) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

impl LanguageModel for ChatClient {
    fn judge_relevance(&self, query: &QueryRecord, passage: &Document) -> Result<RelVerdict> {
        let prompt = self.prompts.relevance.render(&query.text, Some(&passage.text), None);
        Ok(RelVerdict::from_response(self.complete(PromptKind::Relevance, prompt)?))
    }

    fn extract_terms(&self, query: &QueryRecord, passage: &Document, m: usize) -> Result<TermList> {
        let prompt = self.prompts.keywords.render(&query.text, Some(&passage.text), Some(m));
        let raw = self.complete(PromptKind::Keywords, prompt)?;
        Ok(TermList::from_response(&raw, m))
    }

    fn generate_cot(&self, query: &QueryRecord) -> Result<CotText> {
        let prompt = self.prompts.cot.render(&query.text, None, None);
        Ok(CotText::new(self.complete(PromptKind::Cot, prompt)?))
    }

    fn generate_passage(&self, query: &QueryRecord) -> Result<CotText> {
        let prompt = self.prompts.query2doc.render(&query.text, None, None);
        Ok(CotText::new(self.complete(PromptKind::Query2Doc, prompt)?))
    }
}
