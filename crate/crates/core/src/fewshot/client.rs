use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Connection and decoding settings for the completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Extra attempts after the first one.
    pub retries: u32,
    /// Base delay of the exponential backoff between attempts.
    pub retry_backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000".into(),
            model: None,
            max_tokens: 128,
            temperature: 0.0,
            stop_sequences: vec!["\n\n".into()],
            timeout_secs: 60,
            max_in_flight: 8,
            retries: 3,
            retry_backoff_ms: 250,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be >= 1".into());
        }
        if self.base_url.trim().is_empty() {
            return Err("base_url is empty".into());
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/v1/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Request body of `POST {base_url}/v1/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionChoice {
    pub text: String,
}

/// Response body; only `choices[].text` is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub choices: Vec<CompletionChoice>,
}

impl CompletionResponse {
    pub fn single(text: impl Into<String>) -> Self {
        Self {
            choices: vec![CompletionChoice { text: text.into() }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Status(code) => *code == 429 || *code >= 500,
            TransportError::Protocol(_) => false,
        }
    }
}

/// One request/response exchange with a completion server.
pub trait CompletionTransport: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError>;
}

impl<T: CompletionTransport + ?Sized> CompletionTransport for Box<T> {
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        (**self).send(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("endpoint failed after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: TransportError },
    #[error("endpoint rejected request after {attempts} attempt(s): {error}")]
    Fatal { attempts: u32, error: TransportError },
    #[error("response had no choices")]
    NoChoices,
}

impl EndpointError {
    pub fn attempts(&self) -> u32 {
        match self {
            EndpointError::Exhausted { attempts, .. } | EndpointError::Fatal { attempts, .. } => {
                *attempts
            }
            EndpointError::NoChoices => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

/// Cuts `text` before the earliest stop sequence and trims whitespace.
fn post_process(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].trim().to_string()
}

/// Retrying completion client over any transport.
pub struct CompletionClient<T> {
    transport: T,
    cfg: EndpointConfig,
}

impl<T: CompletionTransport> CompletionClient<T> {
    pub fn new(transport: T, cfg: EndpointConfig) -> Self {
        Self { transport, cfg }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn complete(&self, prompt: &str) -> Result<Completion, EndpointError> {
        let request = CompletionRequest {
            model: self.cfg.model.clone(),
            prompt: prompt.to_string(),
            max_tokens: self.cfg.max_tokens,
            temperature: self.cfg.temperature,
            stop: self.cfg.stop_sequences.clone(),
        };
        let max_attempts = self.cfg.retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.send(&request) {
                Ok(response) => {
                    let first = response.choices.first().ok_or(EndpointError::NoChoices)?;
                    return Ok(Completion {
                        text: post_process(&first.text, &self.cfg.stop_sequences),
                        attempts: attempt,
                    });
                }
                Err(error) if !error.is_transient() => {
                    return Err(EndpointError::Fatal {
                        attempts: attempt,
                        error,
                    })
                }
                Err(error) if attempt >= max_attempts => {
                    return Err(EndpointError::Exhausted {
                        attempts: attempt,
                        last: error,
                    })
                }
                Err(error) => {
                    tracing::debug!(attempt, %error, "retrying completion");
                    let backoff = self.cfg.retry_backoff_ms.saturating_mul(1 << (attempt - 1).min(6));
                    if backoff > 0 {
                        thread::sleep(Duration::from_millis(backoff));
                    }
                }
            }
        }
    }
}

/// Blocking HTTP transport speaking the `/v1/completions` protocol.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpTransport {
    pub fn new(cfg: &EndpointConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .pool_max_idle_per_host(cfg.max_in_flight)
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(Self {
            client,
            url: cfg.completions_url(),
        })
    }
}

impl CompletionTransport for HttpTransport {
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        let response = self
            .client
            .post(&self.url)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Connect(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportError::Status(status.as_u16()));
        }
        let body = response.bytes().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        serde_json::from_slice(&body).map_err(|e| TransportError::Protocol(e.to_string()))
    }
}

/// One-off completion over HTTP with the retry policy of `cfg`.
pub fn complete(prompt: &str, cfg: &EndpointConfig) -> Result<Completion, EndpointError> {
    let transport = HttpTransport::new(cfg).map_err(|error| EndpointError::Fatal {
        attempts: 0,
        error,
    })?;
    CompletionClient::new(transport, cfg.clone()).complete(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<CompletionResponse, TransportError>>>,
        calls: AtomicU32,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<CompletionResponse, TransportError>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                calls: AtomicU32::new(0),
            }
        }
    }

    impl CompletionTransport for Scripted {
        fn send(&self, _: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().pop().expect("script exhausted")
        }
    }

    fn cfg(retries: u32) -> EndpointConfig {
        EndpointConfig {
            retries,
            retry_backoff_ms: 0,
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn echo() {
        let client = CompletionClient::new(Scripted::new(vec![Ok(CompletionResponse::single("OK"))]), cfg(0));
        assert_eq!(client.complete("p").unwrap(), Completion { text: "OK".into(), attempts: 1 });
    }

    #[test]
    fn retries_transient_failures() {
        let transport = Scripted::new(vec![
            Err(TransportError::Status(500)),
            Err(TransportError::Status(500)),
            Ok(CompletionResponse::single("fine")),
        ]);
        let client = CompletionClient::new(transport, cfg(3));
        let done = client.complete("p").unwrap();
        assert_eq!(done.attempts, 3);
        assert_eq!(done.text, "fine");
    }

    #[test]
    fn gives_up_after_retries() {
        let transport = Scripted::new(vec![Err(TransportError::Timeout), Err(TransportError::Timeout)]);
        let client = CompletionClient::new(transport, cfg(1));
        let err = client.complete("p").unwrap_err();
        assert_eq!(err, EndpointError::Exhausted { attempts: 2, last: TransportError::Timeout });
    }

    #[test]
    fn protocol_errors_are_not_retried() {
        let transport = Scripted::new(vec![Err(TransportError::Protocol("bad".into()))]);
        let client = CompletionClient::new(transport, cfg(5));
        let err = client.complete("p").unwrap_err();
        assert!(matches!(err, EndpointError::Fatal { attempts: 1, .. }));
        let transport = Scripted::new(vec![Err(TransportError::Status(404))]);
        assert!(CompletionClient::new(transport, cfg(5)).complete("p").is_err());
    }

    #[test]
    fn truncates_at_first_stop_sequence() {
        let transport = Scripted::new(vec![Ok(CompletionResponse::single(" yes\n\nInput: next"))]);
        let client = CompletionClient::new(transport, cfg(0));
        assert_eq!(client.complete("p").unwrap().text, "yes");
        assert_eq!(post_process("a###b\n\nc", &["\n\n".into(), "###".into()]), "a");
    }

    #[test]
    fn validation() {
        assert!(EndpointConfig::default().validate().is_ok());
        assert!(EndpointConfig { temperature: -0.1, ..Default::default() }.validate().is_err());
        assert!(EndpointConfig { max_in_flight: 0, ..Default::default() }.validate().is_err());
        assert_eq!(
            EndpointConfig { base_url: "http://h:1/".into(), ..Default::default() }.completions_url(),
            "http://h:1/v1/completions"
        );
    }
}
