//! Client for OpenAI-compatible chat-completions endpoints.
//!
//! Requests go through a [`Transport`] so tests can replay recorded
//! responses; [`HttpTransport`] is the real network implementation.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::{build_prompt, CORRECTION_SUFFIX};
use super::{extract_architecture, GenerationContext, Generator, GeneratorError, GeneratorResult, Phase};
use crate::arch::{parse_architecture, validate};
use crate::resource::{check, estimate};

pub const API_KEY_ENV: &str = "PHASENAS_API_KEY";
pub const BASE_URL_ENV: &str = "PHASENAS_BASE_URL";
const REDACTED: &str = "[REDACTED]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

/// API key that never prints itself.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(REDACTED)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_explore: String,
    pub model_refine: String,
    pub temperature_explore: f64,
    pub temperature_refine: f64,
    pub timeout: Duration,
    pub max_retries: usize,
    pub api_key: Option<ApiKey>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model_explore: String::new(),
            model_refine: String::new(),
            temperature_explore: 1.0,
            temperature_refine: 0.2,
            timeout: Duration::from_secs(120),
            max_retries: 2,
            api_key: None,
        }
    }
}

impl EndpointConfig {
    /// Fills `api_key` and, when unset, `base_url` from the environment.
    pub fn with_env(mut self, base_url_configured: bool) -> Self {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(ApiKey::new(key));
            }
        }
        if !base_url_configured {
            if let Ok(url) = std::env::var(BASE_URL_ENV) {
                if !url.is_empty() {
                    self.base_url = url;
                }
            }
        }
        self
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn model_for(&self, phase: Phase) -> (&str, f64) {
        match phase {
            Phase::Exploration => (&self.model_explore, self.temperature_explore),
            Phase::Refinement => (&self.model_refine, self.temperature_refine),
        }
    }

    /// Replaces any occurrence of the API key in `text`.
    pub fn redact(&self, text: &str) -> String {
        match &self.api_key {
            Some(key) if !key.expose().is_empty() => text.replace(key.expose(), REDACTED),
            _ => text.to_string(),
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
    pub timeout: Duration,
}

impl fmt::Debug for HttpRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let headers: Vec<(&str, &str)> = self
            .headers
            .iter()
            .map(|(k, v)| (k.as_str(), if k.eq_ignore_ascii_case("authorization") { REDACTED } else { v.as_str() }))
            .collect();
        f.debug_struct("HttpRequest")
            .field("url", &self.url)
            .field("headers", &headers)
            .field("body", &self.body)
            .field("timeout", &self.timeout)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait Transport {
    fn post(&mut self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTP transport.
#[derive(Default)]
pub struct HttpTransport {
    client: Option<reqwest::blocking::Client>,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for HttpTransport {
    fn post(&mut self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        if self.client.is_none() {
            let client = reqwest::blocking::Client::builder()
                .build()
                .map_err(|e| TransportError(format!("cannot build HTTP client: {e}")))?;
            self.client = Some(client);
        }
        let client = self.client.as_ref().expect("client initialized above");
        let mut builder = client.post(&request.url).timeout(request.timeout).body(request.body.clone());
        for (name, value) in &request.headers {
            builder = builder.header(name, value);
        }
        let response = builder.send().map_err(|e| TransportError(e.without_url().to_string()))?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| TransportError(e.without_url().to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

fn response_content(body: &str) -> Result<String, String> {
    let parsed: CompletionResponse = serde_json::from_str(body).map_err(|e| format!("malformed response: {e}"))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| "response has no choices[0].message.content".to_string())
}

fn truncate(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

/// Checks generator text the same way the controller will, so failures can be
/// fed back to the model before the attempt budget is spent.
fn check_candidate(dsl: &str, ctx: &GenerationContext) -> Result<(), String> {
    let arch = parse_architecture(dsl, ctx.mode).map_err(|e| format!("parse error at {e}"))?;
    let errors = validate(&arch, &ctx.constraints);
    if !errors.is_empty() {
        return Err(errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "));
    }
    let violations = check(&estimate(&arch), &ctx.constraints);
    if !violations.is_empty() {
        return Err(violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "));
    }
    Ok(())
}

enum Failure {
    Transport(String),
    Candidate(String),
}

/// Requests one architecture, re-prompting with the failure reason up to
/// `max_retries` times. Performs at most `max_retries + 1` requests.
pub fn llm_generate(
    ctx: &GenerationContext,
    endpoint: &EndpointConfig,
    transport: &mut dyn Transport,
) -> Result<GeneratorResult, GeneratorError> {
    let prompt = build_prompt(ctx);
    let (model, temperature) = endpoint.model_for(ctx.phase);
    let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
    if let Some(key) = &endpoint.api_key {
        headers.push(("Authorization".to_string(), format!("Bearer {}", key.expose())));
    }

    let mut messages = prompt.clone();
    let mut last_raw = String::new();
    let mut failure = Failure::Transport("no request made".into());
    let attempts = endpoint.max_retries + 1;

    for attempt in 1..=attempts {
        let body = json!({ "model": model, "messages": messages, "temperature": temperature });
        let request = HttpRequest {
            url: endpoint.completions_url(),
            headers: headers.clone(),
            body: body.to_string(),
            timeout: endpoint.timeout,
        };
        let response = match transport.post(&request) {
            Ok(r) => r,
            Err(e) => {
                failure = Failure::Transport(endpoint.redact(&e.0));
                continue;
            }
        };
        if response.status >= 400 {
            failure = Failure::Transport(endpoint.redact(&format!(
                "HTTP {}: {}",
                response.status,
                truncate(&response.body, 200)
            )));
            continue;
        }
        let content = match response_content(&response.body) {
            Ok(c) => c,
            Err(e) => {
                failure = Failure::Transport(endpoint.redact(&e));
                continue;
            }
        };
        last_raw = content;
        let error = match extract_architecture(&last_raw) {
            Err(e) => e.to_string(),
            Ok(dsl) => match check_candidate(&dsl, ctx) {
                Ok(()) => return Ok(GeneratorResult { raw_text: last_raw, extracted: Ok(dsl), attempts: attempt }),
                Err(e) => e,
            },
        };
        failure = Failure::Candidate(error.clone());
        messages = prompt.clone();
        messages.push(ChatMessage::user(CORRECTION_SUFFIX.replace("{error}", &error)));
    }

    match failure {
        Failure::Transport(message) => Err(GeneratorError::Transport { attempts, message }),
        Failure::Candidate(error) => Ok(GeneratorResult { raw_text: last_raw, extracted: Err(error), attempts }),
    }
}

/// [`Generator`] backed by a chat-completions endpoint.
pub struct LlmGenerator {
    endpoint: EndpointConfig,
    transport: Box<dyn Transport + Send>,
}

impl LlmGenerator {
    pub fn new(endpoint: EndpointConfig, transport: Box<dyn Transport + Send>) -> Self {
        Self { endpoint, transport }
    }
}

impl Generator for LlmGenerator {
    fn name(&self) -> String {
        format!("llm:{}|{}", self.endpoint.model_explore, self.endpoint.model_refine)
    }

    fn generate(&mut self, ctx: &GenerationContext) -> Result<GeneratorResult, GeneratorError> {
        llm_generate(ctx, &self.endpoint, self.transport.as_mut())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debug_output_hides_the_key() {
        let ep = EndpointConfig { api_key: Some(ApiKey::new("sk-very-secret")), ..EndpointConfig::default() };
        assert!(!format!("{ep:?}").contains("sk-very-secret"));
        let req = HttpRequest {
            url: ep.completions_url(),
            headers: vec![("Authorization".into(), "Bearer sk-very-secret".into())],
            body: String::new(),
            timeout: Duration::from_secs(1),
        };
        assert!(!format!("{req:?}").contains("sk-very-secret"));
        assert_eq!(ep.redact("key=sk-very-secret!"), "key=[REDACTED]!");
    }

    #[test]
    fn url_joins_without_double_slash() {
        let ep = EndpointConfig { base_url: "https://api.example.com/v1/".into(), ..EndpointConfig::default() };
        assert_eq!(ep.completions_url(), "https://api.example.com/v1/chat/completions");
    }

    #[test]
    fn response_content_is_read_from_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(response_content(body).unwrap(), "hi");
        assert!(response_content(r#"{"choices":[]}"#).is_err());
        assert!(response_content("not json").is_err());
    }
}
