//! Blocking chat-completion client over a hand-rolled HTTP/1.1 POST.
//! Transport failures and 5xx responses retry with exponential backoff;
//! malformed bodies surface as protocol errors.

use crate::protocol::{ChatMessage, ChatRequest, ChatResponse, CHAT_COMPLETIONS_PATH};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

pub const ENDPOINT_ENV: &str = "VSF_VLM_ENDPOINT";
pub const API_KEY_ENV: &str = "VSF_VLM_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct VlmEndpointConfig {
    /// e.g. "http://127.0.0.1:8080"
    pub base_url: String,
    pub model_name: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// Sent as a bearer header when set (from VSF_VLM_API_KEY).
    pub api_key: Option<String>,
    /// Initial backoff delay; doubles per attempt.
    pub backoff: Duration,
}

impl VlmEndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        VlmEndpointConfig {
            base_url: base_url.into(),
            model_name: "mock-vlm".to_string(),
            timeout: Duration::from_secs(10),
            max_retries: 2,
            temperature: 0.0,
            api_key: std::env::var(API_KEY_ENV).ok(),
            backoff: Duration::from_millis(50),
        }
    }

    /// Endpoint from VSF_VLM_ENDPOINT / VSF_VLM_API_KEY.
    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV).ok().map(Self::new)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("bad endpoint url {0:?}")]
    BadUrl(String),
}

struct HttpResponse {
    status: u16,
    body: Vec<u8>,
}

fn host_of(base_url: &str) -> Result<String, VlmError> {
    let rest = base_url
        .strip_prefix("http://")
        .ok_or_else(|| VlmError::BadUrl(base_url.to_string()))?;
    let host = rest.trim_end_matches('/');
    if host.is_empty() {
        return Err(VlmError::BadUrl(base_url.to_string()));
    }
    Ok(host.to_string())
}

fn http_post(
    host: &str,
    path: &str,
    body: &[u8],
    api_key: Option<&str>,
    timeout: Duration,
) -> std::io::Result<HttpResponse> {
    let mut stream = TcpStream::connect(host)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    let mut request = format!(
        "POST {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        body.len()
    );
    if let Some(key) = api_key {
        request.push_str(&format!("Authorization: Bearer {key}\r\n"));
    }
    request.push_str("\r\n");
    let mut wire = request.into_bytes();
    wire.extend_from_slice(body);
    stream.write_all(&wire)?;

    let mut raw = Vec::new();
    stream.read_to_end(&mut raw)?;
    let header_end = find_header_end(&raw).ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidData, "missing header terminator")
    })?;
    let head = String::from_utf8_lossy(&raw[..header_end]);
    let status_line = head.lines().next().unwrap_or_default();
    let status: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad status line"))?;
    let content_length = head
        .lines()
        .skip(1)
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            if name.eq_ignore_ascii_case("content-length") {
                value.trim().parse::<usize>().ok()
            } else {
                None
            }
        });
    let body_bytes = raw[header_end + 4..].to_vec();
    if let Some(len) = content_length {
        if body_bytes.len() < len {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!("truncated body: got {} of {len} bytes", body_bytes.len()),
            ));
        }
        return Ok(HttpResponse { status, body: body_bytes[..len].to_vec() });
    }
    Ok(HttpResponse { status, body: body_bytes })
}

fn find_header_end(raw: &[u8]) -> Option<usize> {
    raw.windows(4).position(|w| w == b"\r\n\r\n")
}

/// Issue one chat completion. Transport failures (connect/read errors and
/// 5xx statuses) retry up to `max_retries` extra attempts with doubling
/// backoff; anything unparseable in a 200 body is a protocol error.
pub fn query_vlm(messages: Vec<ChatMessage>, cfg: &VlmEndpointConfig) -> Result<String, VlmError> {
    let host = host_of(&cfg.base_url)?;
    let request = ChatRequest {
        model: cfg.model_name.clone(),
        temperature: cfg.temperature,
        messages,
    };
    let body = serde_json::to_vec(&request).expect("request serialization");

    let attempts = cfg.max_retries + 1;
    let mut last_error = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(cfg.backoff * (1u32 << (attempt - 1).min(6)));
        }
        match http_post(&host, CHAT_COMPLETIONS_PATH, &body, cfg.api_key.as_deref(), cfg.timeout) {
            Ok(resp) if resp.status >= 500 => {
                last_error = format!("HTTP {}", resp.status);
            }
            Ok(resp) if resp.status != 200 => {
                return Err(VlmError::Transport {
                    attempts: attempt + 1,
                    message: format!("HTTP {}", resp.status),
                });
            }
            Ok(resp) => {
                let parsed: ChatResponse = serde_json::from_slice(&resp.body)
                    .map_err(|e| VlmError::Protocol(format!("malformed response body: {e}")))?;
                let choice = parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| VlmError::Protocol("response has no choices".to_string()))?;
                return Ok(choice.message.content);
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                // a truncated body is a malformed reply, not a transport flake
                return Err(VlmError::Protocol(e.to_string()));
            }
            Err(e) => {
                last_error = e.to_string();
            }
        }
    }
    Err(VlmError::Transport { attempts, message: last_error })
}
