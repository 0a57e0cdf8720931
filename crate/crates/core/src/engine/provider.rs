//! Language-model providers: an OpenAI-compatible chat-completion client and a
//! deterministic offline stub.

use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::engine::prompt::{PromptBundle, ResponseFormat, Role};
use crate::engine::summary::first_sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("provider error: {message}")]
pub struct ProviderError {
    pub message: String,
    /// The request may succeed if the caller tries again later.
    pub retryable: bool,
}

impl ProviderError {
    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError>;
}

/// Offline provider whose output is a pure function of the bundle and seed.
///
/// Text completions look like
/// `Hi! I'm Emily. <body> [strategy:role-play] [grounding:syn-e01#0]`
/// so tests can assert on persona name, strategy and the top grounding passage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider {
    seed: u64,
}

const OPENERS: [&str; 4] = ["Hi!", "Hello!", "Well,", "Sure."];

const STOPWORDS: &[&str] = &[
    "about", "after", "also", "because", "been", "before", "being", "from", "have", "helps",
    "into", "just", "like", "more", "much", "some", "that", "their", "them", "then", "there",
    "they", "this", "very", "what", "when", "which", "while", "with", "would", "your",
];

impl StubProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn digest(&self, bundle: &PromptBundle) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(serde_json::to_vec(bundle).expect("bundle serializes"));
        let out = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&out[..8]);
        u64::from_le_bytes(bytes)
    }

    fn text_reply(&self, bundle: &PromptBundle) -> String {
        let opener = OPENERS[(self.digest(bundle) % OPENERS.len() as u64) as usize];
        let name = persona_name(bundle);
        let (body, marker) = match bundle.grounding.first() {
            Some(p) => (
                format!("A story I relate to: {}", first_sentence(&p.text)),
                p.marker(),
            ),
            None => (
                "I can only speak from my own everyday experience.".to_string(),
                "none".to_string(),
            ),
        };
        format!(
            "{opener} I'm {name}. {body} [strategy:{}] [grounding:{marker}]",
            bundle.strategy.tag()
        )
    }

    fn ability_reply(&self, bundle: &PromptBundle) -> String {
        let Some(top) = bundle.grounding.first() else {
            return "[]".into();
        };
        let term = dominant_term(&top.tokens).unwrap_or_else(|| "everyday".into());
        let title = capitalize(&term);
        let sentences = sentences(&top.text);
        let first = sentences.first().cloned().unwrap_or_else(|| top.text.clone());
        let last = sentences.last().cloned().unwrap_or_else(|| top.text.clone());
        let entry = serde_json::json!([{
            "name": title,
            "description": format!("I rely on my {term} every day. {first}"),
            "drivers": [{ "name": format!("Support with {term}"), "story": first }],
            "blockers": [{ "name": format!("Barriers to {term}"), "story": last }],
        }]);
        entry.to_string()
    }
}

impl LlmProvider for StubProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Stub
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError> {
        Ok(match bundle.format {
            ResponseFormat::Text => self.text_reply(bundle),
            ResponseFormat::AbilityEntries => self.ability_reply(bundle),
        })
    }
}

/// Name the bundle's persona: `You are <name>` in the system turn, else a
/// `Name: <name>` attribute line, else a neutral fallback.
pub(crate) fn persona_name(bundle: &PromptBundle) -> String {
    let system = bundle.system().unwrap_or("");
    let cut = |s: &str| {
        s.split(['.', ',', '\n'])
            .next()
            .unwrap_or("")
            .trim()
            .to_string()
    };
    if let Some(rest) = system.find("You are ").map(|i| &system[i + 8..]) {
        let name = cut(rest);
        if !name.is_empty() {
            return name;
        }
    }
    if let Some(rest) = system.find("Name: ").map(|i| &system[i + 6..]) {
        let name = cut(rest);
        if !name.is_empty() {
            return name;
        }
    }
    "the persona".into()
}

fn dominant_term(tokens: &[String]) -> Option<String> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for t in tokens {
        if t.len() < 4 || t.chars().all(|c| c.is_ascii_digit()) || STOPWORDS.contains(&t.as_str())
        {
            continue;
        }
        match counts.iter_mut().find(|(w, _)| *w == t) {
            Some((_, c)) => *c += 1,
            None => counts.push((t, 1)),
        }
    }
    // max_by_key keeps the last maximum; reverse so the earliest wins ties
    counts
        .into_iter()
        .rev()
        .max_by_key(|(_, c)| *c)
        .map(|(w, _)| w.to_string())
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let s = first_sentence(rest);
        rest = rest[s.len()..].trim_start();
        out.push(s.to_string());
    }
    out
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl RemoteConfig {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(30),
            retries: 1,
        }
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
///
/// Uses the blocking client; async callers should run it on a blocking thread.
pub struct RemoteProvider {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::fatal(format!("building HTTP client: {e}")))?;
        Ok(Self { client, config })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Result<String, ProviderError> {
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() {
                    ProviderError::transient(e.to_string())
                } else {
                    ProviderError::fatal(e.to_string())
                }
            })?;

        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            let msg = format!("provider returned {status}: {text}");
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                ProviderError::transient(msg)
            } else {
                ProviderError::fatal(msg)
            });
        }

        let value: serde_json::Value = resp
            .json()
            .map_err(|e| ProviderError::fatal(format!("invalid provider response: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::fatal("provider response has no message content"))
    }
}

impl LlmProvider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError> {
        let body = WireRequest {
            model: &self.config.model,
            messages: bundle
                .turns
                .iter()
                .map(|t| WireMessage {
                    role: match t.role {
                        Role::System => "system",
                        Role::Assistant => "assistant",
                        Role::User => "user",
                    },
                    content: &t.content,
                })
                .collect(),
        };

        let mut last = None;
        for attempt in 0..=self.config.retries {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable => {
                    tracing::warn!(attempt, error = %e.message, "provider call failed");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| ProviderError::transient("provider unavailable")))
    }
}
