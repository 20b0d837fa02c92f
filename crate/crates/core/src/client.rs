//! Chat-completion client for OpenAI-compatible endpoints (Ollama, vLLM,
//! llama.cpp server and the like), plus a deterministic mock backend.
//!
//! Requests go to `POST {endpoint_url}/v1/chat/completions` with a single
//! user message. Transport failures and 5xx responses are retried with
//! exponential backoff; 4xx responses fail immediately. If `MER_API_KEY` is
//! set it is sent as a bearer token.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{render_markup, Corpus, SentenceKey};
use crate::prompt::AssembledPrompt;

pub const API_KEY_ENV: &str = "MER_API_KEY";
/// Endpoint URLs with this prefix select the mock backend.
pub const MOCK_SCHEME: &str = "mock://";
/// Tag the mock writes when asked to emit out-of-schema entities.
pub const MOCK_INVALID_TAG: &str = "medication";

fn default_temperature() -> f64 {
    0.0
}
fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_parallelism() -> usize {
    1
}
fn default_backoff() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub endpoint_url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Fixed generation budget; when absent it is derived from the input
    /// length, see [`default_max_tokens`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// First retry delay in seconds; doubles on each further retry.
    #[serde(default = "default_backoff")]
    pub backoff_base_s: f64,
}

impl ClientConfig {
    pub fn new(endpoint_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model: model.into(),
            temperature: default_temperature(),
            max_tokens: None,
            timeout_s: default_timeout(),
            retries: default_retries(),
            parallelism: default_parallelism(),
            backoff_base_s: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |msg: &str| Err(ClientError::Config(msg.to_string()));
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be >= 1");
        }
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return bad("timeout_s must be > 0");
        }
        if self.backoff_base_s.is_nan() || self.backoff_base_s < 0.0 {
            return bad("backoff_base_s must be >= 0");
        }
        if self.endpoint_url.is_empty() {
            return bad("endpoint_url is empty");
        }
        Ok(())
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint_url.starts_with(MOCK_SCHEME)
    }

    fn max_tokens_for(&self, prompt: &AssembledPrompt) -> u32 {
        self.max_tokens
            .unwrap_or_else(|| default_max_tokens(prompt.input_chars))
    }
}

/// `2n/3 + 256` tokens for an `n`-character input, capped at 2048.
pub fn default_max_tokens(input_chars: usize) -> u32 {
    (2 * input_chars / 3 + 256).min(2048) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server error {status} after {attempts} attempt(s): {body}")]
    Server { status: u16, attempts: u32, body: String },
    #[error("HTTP {status} (check endpoint, model and credentials): {body}")]
    Http { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid client configuration: {0}")]
    Config(String),
    #[error("mock has no gold entry for {0}")]
    UnknownInput(SentenceKey),
}

impl ClientError {
    /// Number of requests made before giving up.
    pub fn attempts(&self) -> u32 {
        match self {
            ClientError::Transport { attempts, .. } | ClientError::Server { attempts, .. } => *attempts,
            ClientError::Http { .. } | ClientError::Protocol(_) => 1,
            ClientError::Config(_) | ClientError::UnknownInput(_) => 0,
        }
    }
}

/// Something that turns a prompt into model text.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &AssembledPrompt) -> Result<Completion, ClientError>;
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: [ChatMessage<'a>; 1],
}

/// The exact JSON body sent for `prompt`. Byte-stable for equal inputs.
pub fn request_body(prompt: &AssembledPrompt, cfg: &ClientConfig) -> String {
    let request = ChatRequest {
        model: &cfg.model,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens_for(prompt),
        messages: [ChatMessage {
            role: "user",
            content: &prompt.text,
        }],
    };
    serde_json::to_string(&request).expect("request serializes")
}

/// Reads `choices[0].message.content`.
pub fn extract_content(body: &str) -> Result<String, ClientError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ClientError::Protocol(format!("response is not JSON: {e}")))?;
    let choices = value
        .get("choices")
        .and_then(|c| c.as_array())
        .ok_or_else(|| ClientError::Protocol("response has no choices array".into()))?;
    let first = choices
        .first()
        .ok_or_else(|| ClientError::Protocol("empty choices array".into()))?;
    first
        .pointer("/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| ClientError::Protocol("choices[0].message.content missing".into()))
}

pub struct HttpClient {
    cfg: ClientConfig,
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpClient {
    pub fn new(cfg: ClientConfig) -> Result<Self, ClientError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .build()
            .into();
        let url = format!("{}/v1/chat/completions", cfg.endpoint_url.trim_end_matches('/'));
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self {
            cfg,
            agent,
            url,
            api_key,
        })
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.cfg.backoff_base_s * 2f64.powi(retry as i32 - 1);
        let jitter = rand::thread_rng().gen_range(0.0..0.25);
        Duration::from_secs_f64(base * (1.0 + jitter))
    }

    fn send_once(&self, body: &str) -> Result<(u16, String), String> {
        let mut request = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

impl CompletionBackend for HttpClient {
    fn complete(&self, prompt: &AssembledPrompt) -> Result<Completion, ClientError> {
        let body = request_body(prompt, &self.cfg);
        let started = Instant::now();
        let max_attempts = self.cfg.retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let last = attempt == max_attempts;
            match self.send_once(&body) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    return Ok(Completion {
                        raw_text: extract_content(&text)?,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt_count: attempt,
                    });
                }
                Ok((status, text)) if (400..500).contains(&status) => {
                    return Err(ClientError::Http { status, body: text });
                }
                Ok((status, text)) if status >= 500 => {
                    log::warn!("{} returned {status} (attempt {attempt}/{max_attempts})", self.url);
                    if last {
                        return Err(ClientError::Server {
                            status,
                            attempts: attempt,
                            body: text,
                        });
                    }
                }
                Ok((status, _)) => {
                    return Err(ClientError::Protocol(format!("unexpected HTTP status {status}")));
                }
                Err(message) => {
                    log::warn!("{}: {message} (attempt {attempt}/{max_attempts})", self.url);
                    if last {
                        return Err(ClientError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                }
            }
            std::thread::sleep(self.backoff(attempt));
        }
    }
}

/// Scripted transformations of the gold markup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockBehavior {
    EchoGold,
    /// Omits every n-th gold entity, counting across the corpus in key order.
    DropEveryNthEntity(usize),
    /// Relabels every n-th gold entity with [`MOCK_INVALID_TAG`].
    InjectInvalidTagEveryNth(usize),
    /// Doubles every other space in the output.
    ShuffleWhitespace,
}

impl fmt::Display for MockBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MockBehavior::EchoGold => f.write_str("echo_gold"),
            MockBehavior::DropEveryNthEntity(n) => write!(f, "drop_every_nth_entity/{n}"),
            MockBehavior::InjectInvalidTagEveryNth(n) => write!(f, "inject_invalid_tag_every_nth/{n}"),
            MockBehavior::ShuffleWhitespace => f.write_str("shuffle_whitespace"),
        }
    }
}

impl FromStr for MockBehavior {
    type Err = ClientError;

    /// Accepts `echo_gold`, `drop_every_nth_entity/N`,
    /// `inject_invalid_tag_every_nth/N` and `shuffle_whitespace`, with or
    /// without the `mock://` prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix(MOCK_SCHEME).unwrap_or(s).trim_end_matches('/');
        let bad = || ClientError::Config(format!("unknown mock behavior \"{s}\""));
        let (name, arg) = match s.split_once('/') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let n = || -> Result<usize, ClientError> {
            arg.and_then(|a| a.parse().ok()).filter(|&n| n > 0).ok_or_else(bad)
        };
        match (name, arg) {
            ("echo_gold", None) => Ok(MockBehavior::EchoGold),
            ("shuffle_whitespace", None) => Ok(MockBehavior::ShuffleWhitespace),
            ("drop_every_nth_entity", Some(_)) => Ok(MockBehavior::DropEveryNthEntity(n()?)),
            ("inject_invalid_tag_every_nth", Some(_)) => Ok(MockBehavior::InjectInvalidTagEveryNth(n()?)),
            _ => Err(bad()),
        }
    }
}

/// Offline backend answering from the gold corpus. Outputs are computed up
/// front, so they depend only on the input key and the behavior.
pub struct MockClient {
    behavior: MockBehavior,
    outputs: HashMap<SentenceKey, String>,
    delay: Option<Duration>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    seen: Mutex<Vec<SentenceKey>>,
}

impl MockClient {
    pub fn new(gold: &Corpus, behavior: MockBehavior) -> Self {
        let mut outputs = HashMap::with_capacity(gold.len());
        let mut ordinal = 0usize;
        for sentence in gold.sorted() {
            let mut spans: Vec<_> = sentence.gold.iter().collect();
            spans.sort_by_key(|s| (s.start, s.end));
            let mut kept = Vec::new();
            for span in spans {
                ordinal += 1;
                let tag = match behavior {
                    MockBehavior::DropEveryNthEntity(n) if ordinal.is_multiple_of(n) => continue,
                    MockBehavior::InjectInvalidTagEveryNth(n) if ordinal.is_multiple_of(n) => MOCK_INVALID_TAG,
                    _ => span.etype.tag(),
                };
                kept.push((span.start, span.end, tag));
            }
            let mut text = render_markup(&sentence.text, kept);
            if behavior == MockBehavior::ShuffleWhitespace {
                text = double_alternate_spaces(&text);
            }
            outputs.insert(sentence.key(), text);
        }
        Self {
            behavior,
            outputs,
            delay: None,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Makes every call sleep, so concurrent calls overlap observably.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn behavior(&self) -> MockBehavior {
        self.behavior
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously running calls seen so far.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    /// Input keys in the order calls arrived.
    pub fn seen(&self) -> Vec<SentenceKey> {
        self.seen.lock().expect("mock lock").clone()
    }

    pub fn mock_complete(&self, prompt: &AssembledPrompt) -> Result<Completion, ClientError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().expect("mock lock").push(prompt.input_key.clone());
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        let result = self
            .outputs
            .get(&prompt.input_key)
            .cloned()
            .ok_or_else(|| ClientError::UnknownInput(prompt.input_key.clone()))
            .map(|raw_text| Completion {
                raw_text,
                latency_ms: 0,
                attempt_count: 1,
            });
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

impl CompletionBackend for MockClient {
    fn complete(&self, prompt: &AssembledPrompt) -> Result<Completion, ClientError> {
        self.mock_complete(prompt)
    }
}

fn double_alternate_spaces(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + s.len() / 8);
    let mut spaces = 0;
    for c in s.chars() {
        out.push(c);
        if c == ' ' {
            spaces += 1;
            if spaces % 2 == 1 {
                out.push(' ');
            }
        }
    }
    out
}

/// Runs `backend` over `prompts` with at most `parallelism` calls in flight.
/// Results come back in input order.
pub fn complete_all<B: CompletionBackend + ?Sized>(
    backend: &B,
    prompts: &[AssembledPrompt],
    parallelism: usize,
) -> Vec<Result<Completion, ClientError>> {
    let workers = parallelism.max(1).min(prompts.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Completion, ClientError>>>> =
        prompts.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(prompt) = prompts.get(i) else { break };
                let result = backend.complete(prompt);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}
