//! Chat-completions endpoints: the HTTP client and scripted test doubles.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::llmrun::DecodingConfig;

/// One logical chat request. `user_content` is the rendered instruction
/// followed by the source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub user_content: String,
    pub decoding: DecodingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// Whether the server accepted the `min_p` parameter; `None` when it was
    /// not sent.
    pub min_p_acknowledged: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum EndpointError {
    /// Networking failure or 4xx/5xx status; retried with backoff.
    #[error("transport failure{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    /// Authentication failure; never retried.
    #[error("credential error: {0}")]
    Credential(String),
}

/// A chat-completions-compatible endpoint. One call is one model attempt;
/// retry policy lives in the runner.
pub trait ChatEndpoint: Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, EndpointError>;
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_p: Option<f64>,
    frequency_penalty: f64,
    max_tokens: usize,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

/// HTTP endpoint speaking the chat-completions POST protocol. The API key
/// comes from an environment variable; the base URL from configuration.
pub struct HttpEndpoint {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

/// Environment variable consulted for the API key.
pub const API_KEY_ENV: &str = "STEER_API_KEY";

impl HttpEndpoint {
    /// `base_url` is the API root (e.g. `http://host:8000/v1`); the
    /// chat-completions path is appended if absent.
    pub fn new(base_url: &str) -> HttpEndpoint {
        let trimmed = base_url.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/chat/completions")
        };
        HttpEndpoint {
            url,
            api_key: std::env::var(API_KEY_ENV).ok(),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> HttpEndpoint {
        self.api_key = key;
        self
    }

    fn post_once(&self, request: &ChatRequest, send_min_p: bool) -> Result<String, EndpointError> {
        let d = &request.decoding;
        let body = WireRequest {
            model: &request.model,
            messages: vec![WireMessage { role: "user", content: &request.user_content }],
            temperature: d.temperature,
            min_p: if send_min_p { d.min_p } else { None },
            frequency_penalty: d.frequency_penalty,
            max_tokens: d.max_context_tokens,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EndpointError::Transport {
            status: None,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| EndpointError::Transport {
            status: Some(status.as_u16()),
            message: e.to_string(),
        })?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(EndpointError::Credential(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(EndpointError::Transport {
                status: Some(status.as_u16()),
                message: text,
            });
        }
        Ok(text)
    }
}

impl ChatEndpoint for HttpEndpoint {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        let send_min_p = request.decoding.min_p.is_some();
        let result = self.post_once(request, send_min_p);
        // Servers that reject min_p as an unknown parameter get one resend
        // without it; the record notes the parameter was not honored.
        let (body, acknowledged) = match result {
            Ok(body) => (body, if send_min_p { Some(true) } else { None }),
            Err(EndpointError::Transport { status: Some(s), ref message })
                if send_min_p && (400..500).contains(&s) && message.contains("min_p") =>
            {
                (self.post_once(request, false)?, Some(false))
            }
            Err(e) => return Err(e),
        };
        let parsed: WireResponse = serde_json::from_str(&body).map_err(|e| {
            EndpointError::Transport { status: None, message: format!("malformed response body: {e}") }
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        Ok(ChatResponse { text, min_p_acknowledged: acknowledged })
    }
}

/// Scripted outcome for mock endpoints.
#[derive(Debug, Clone)]
pub enum ScriptedOutcome {
    Text(String),
    /// Echo the request content back as the completion.
    Echo,
    Status(u16),
    NetworkError(String),
}

fn outcome_to_result(outcome: &ScriptedOutcome, request: &ChatRequest) -> Result<ChatResponse, EndpointError> {
    match outcome {
        ScriptedOutcome::Text(t) => Ok(ChatResponse { text: t.clone(), min_p_acknowledged: request.decoding.min_p.map(|_| true) }),
        ScriptedOutcome::Echo => Ok(ChatResponse {
            text: request.user_content.clone(),
            min_p_acknowledged: request.decoding.min_p.map(|_| true),
        }),
        ScriptedOutcome::Status(s) => {
            if *s == 401 || *s == 403 {
                Err(EndpointError::Credential(format!("HTTP {s}")))
            } else {
                Err(EndpointError::Transport { status: Some(*s), message: format!("scripted HTTP {s}") })
            }
        }
        ScriptedOutcome::NetworkError(m) => {
            Err(EndpointError::Transport { status: None, message: m.clone() })
        }
    }
}

/// Replays a fixed sequence of outcomes in call order, then a default.
pub struct ScriptedEndpoint {
    script: Mutex<VecDeque<ScriptedOutcome>>,
    default: ScriptedOutcome,
    calls: AtomicUsize,
}

impl ScriptedEndpoint {
    pub fn new(outcomes: Vec<ScriptedOutcome>) -> ScriptedEndpoint {
        ScriptedEndpoint {
            script: Mutex::new(outcomes.into()),
            default: ScriptedOutcome::Echo,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_default(mut self, default: ScriptedOutcome) -> ScriptedEndpoint {
        self.default = default;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatEndpoint for ScriptedEndpoint {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let outcome = self.script.lock().unwrap().pop_front().unwrap_or_else(|| self.default.clone());
        outcome_to_result(&outcome, request)
    }
}

/// Computes each outcome from the request and a per-endpoint call counter,
/// for content-keyed mocks that stay deterministic under parallelism.
pub struct FnEndpoint<F>
where
    F: Fn(&ChatRequest, usize) -> ScriptedOutcome + Sync,
{
    f: F,
    calls: AtomicUsize,
}

impl<F> FnEndpoint<F>
where
    F: Fn(&ChatRequest, usize) -> ScriptedOutcome + Sync,
{
    pub fn new(f: F) -> FnEndpoint<F> {
        FnEndpoint { f, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> ChatEndpoint for FnEndpoint<F>
where
    F: Fn(&ChatRequest, usize) -> ScriptedOutcome + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, EndpointError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        outcome_to_result(&(self.f)(request, call), request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ChatRequest {
        ChatRequest {
            model: "test".into(),
            user_content: "hello".into(),
            decoding: DecodingConfig::greedy(),
        }
    }

    #[test]
    fn scripted_endpoint_replays_in_order() {
        let ep = ScriptedEndpoint::new(vec![
            ScriptedOutcome::Status(500),
            ScriptedOutcome::Text("ok".into()),
        ]);
        assert!(matches!(
            ep.complete(&request()),
            Err(EndpointError::Transport { status: Some(500), .. })
        ));
        assert_eq!(ep.complete(&request()).unwrap().text, "ok");
        // Default outcome afterwards: echo.
        assert_eq!(ep.complete(&request()).unwrap().text, "hello");
        assert_eq!(ep.calls(), 3);
    }

    #[test]
    fn credential_statuses_map_to_credential_error() {
        let ep = ScriptedEndpoint::new(vec![ScriptedOutcome::Status(401)]);
        assert!(matches!(ep.complete(&request()), Err(EndpointError::Credential(_))));
    }

    #[test]
    fn fn_endpoint_sees_call_index() {
        let ep = FnEndpoint::new(|_req, call| {
            if call == 0 {
                ScriptedOutcome::Status(503)
            } else {
                ScriptedOutcome::Text(format!("call {call}"))
            }
        });
        assert!(ep.complete(&request()).is_err());
        assert_eq!(ep.complete(&request()).unwrap().text, "call 1");
    }
}
