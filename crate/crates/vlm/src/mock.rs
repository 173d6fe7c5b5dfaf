//! Deterministic in-process chat-completion server for hermetic tests and
//! the `serve-mock-vlm` subcommand. Speaks exactly the wire format the
//! client sends, handles concurrent connections, and answers according to
//! a fixed policy.

use crate::protocol::{ChatRequest, ChatResponse};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockPolicy {
    /// Always pick the first listed candidate.
    First,
    /// Always pick this label.
    Fixed(char),
    /// Parse the candidate score table from the user message and pick the
    /// highest-scoring label.
    RuleHighestListedScore,
}

impl std::str::FromStr for MockPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if lower == "first" {
            return Ok(MockPolicy::First);
        }
        if lower == "rule" || lower == "rule-highest-listed-score" {
            return Ok(MockPolicy::RuleHighestListedScore);
        }
        if let Some(label) = lower.strip_prefix("fixed:") {
            let mut chars = label.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if c.is_ascii_alphabetic() {
                    return Ok(MockPolicy::Fixed(c.to_ascii_uppercase()));
                }
            }
        }
        Err(format!("unknown mock policy {s:?} (first | fixed:<letter> | rule)"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MockServerError {
    #[error("failed to bind mock server port {port}: {source}")]
    BindFailure {
        port: u16,
        #[source]
        source: std::io::Error,
    },
}

pub struct MockVlmServer {
    port: u16,
    stop: Arc<AtomicBool>,
    fail_budget: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl MockVlmServer {
    /// Bind 127.0.0.1:`port` (0 picks an ephemeral port) and serve until
    /// dropped.
    pub fn spawn(policy: MockPolicy, port: u16) -> Result<Self, MockServerError> {
        let listener = TcpListener::bind(("127.0.0.1", port))
            .map_err(|source| MockServerError::BindFailure { port, source })?;
        let bound = listener.local_addr().expect("bound address").port();
        let stop = Arc::new(AtomicBool::new(false));
        let fail_budget = Arc::new(AtomicUsize::new(0));
        let handle = {
            let stop = Arc::clone(&stop);
            let fail_budget = Arc::clone(&fail_budget);
            std::thread::spawn(move || accept_loop(listener, policy, stop, fail_budget))
        };
        Ok(MockVlmServer { port: bound, stop, fail_budget, handle: Some(handle) })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// Make the next `n` requests fail with HTTP 500 (for retry tests).
    pub fn fail_next(&self, n: usize) {
        self.fail_budget.store(n, Ordering::SeqCst);
    }

    /// Serve until the process ends (used by the CLI subcommand).
    pub fn join(mut self) {
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockVlmServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept
        let _ = TcpStream::connect(("127.0.0.1", self.port));
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    policy: MockPolicy,
    stop: Arc<AtomicBool>,
    fail_budget: Arc<AtomicUsize>,
) {
    let mut workers = Vec::new();
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let policy = policy.clone();
        let fail_budget = Arc::clone(&fail_budget);
        workers.push(std::thread::spawn(move || {
            let _ = handle_connection(stream, &policy, &fail_budget);
        }));
    }
    for worker in workers {
        let _ = worker.join();
    }
}

fn handle_connection(
    mut stream: TcpStream,
    policy: &MockPolicy,
    fail_budget: &AtomicUsize,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(std::time::Duration::from_secs(10)))?;
    let body = read_request_body(&mut stream)?;

    let injected_failure = fail_budget
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    if injected_failure {
        return write_response(&mut stream, 500, b"{\"error\":\"injected failure\"}");
    }

    let reply_text = match serde_json::from_slice::<ChatRequest>(&body) {
        Ok(request) => reply_for(&request, policy),
        Err(_) => {
            return write_response(&mut stream, 400, b"{\"error\":\"malformed request\"}");
        }
    };
    let response = ChatResponse::of_text(reply_text);
    let body = serde_json::to_vec(&response).expect("response serialization");
    write_response(&mut stream, 200, &body)
}

fn read_request_body(stream: &mut TcpStream) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos;
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed before headers",
            ));
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
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
        })
        .unwrap_or(0);
    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);
    Ok(body)
}

fn write_response(stream: &mut TcpStream, status: u16, body: &[u8]) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        _ => "Internal Server Error",
    };
    let head = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(body)
}

/// Candidate rows in the user text look like "A: scorer=x score=0.1234".
fn candidate_table(user_text: &str) -> Vec<(char, f64)> {
    let mut out = Vec::new();
    for line in user_text.lines() {
        let Some((head, rest)) = line.split_once(':') else { continue };
        let mut chars = head.trim().chars();
        let (Some(label), None) = (chars.next(), chars.next()) else { continue };
        if !label.is_ascii_uppercase() {
            continue;
        }
        let Some(score_tok) = rest.split_whitespace().find_map(|tok| tok.strip_prefix("score="))
        else {
            continue;
        };
        if let Ok(score) = score_tok.parse::<f64>() {
            out.push((label, score));
        }
    }
    out
}

fn reply_for(request: &ChatRequest, policy: &MockPolicy) -> String {
    let user_text = request
        .messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .map(|m| m.joined_text())
        .unwrap_or_default();

    if user_text.contains("DIRECTIVE") {
        return "DIRECTIVE: Keep, Forward".to_string();
    }

    let table = candidate_table(&user_text);
    let label = match policy {
        MockPolicy::First => table.first().map(|&(l, _)| l).unwrap_or('A'),
        MockPolicy::Fixed(l) => *l,
        MockPolicy::RuleHighestListedScore => {
            let mut best = table.first().copied().unwrap_or(('A', f64::NEG_INFINITY));
            for &(l, s) in table.iter().skip(1) {
                if s > best.1 {
                    best = (l, s);
                }
            }
            best.0
        }
    };
    format!("SELECTION: {label}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ChatMessage;

    fn selection_request(rows: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            temperature: 0.0,
            messages: vec![ChatMessage::text(
                "user",
                format!("Candidates:\n{rows}\nReply with exactly: SELECTION: <letter>"),
            )],
        }
    }

    #[test]
    fn policy_first_and_fixed() {
        let req = selection_request("A: scorer=x score=0.2\nB: scorer=y score=0.9");
        assert_eq!(reply_for(&req, &MockPolicy::First), "SELECTION: A");
        assert_eq!(reply_for(&req, &MockPolicy::Fixed('C')), "SELECTION: C");
    }

    #[test]
    fn policy_rule_picks_highest() {
        let req = selection_request("A: scorer=x score=0.2\nB: scorer=y score=0.9");
        assert_eq!(
            reply_for(&req, &MockPolicy::RuleHighestListedScore),
            "SELECTION: B"
        );
    }

    #[test]
    fn directive_prompts_get_directive_replies() {
        let req = ChatRequest {
            model: "m".into(),
            temperature: 0.0,
            messages: vec![ChatMessage::text(
                "user",
                "Reply with exactly: DIRECTIVE: <longitudinal>, <lateral>",
            )],
        };
        assert_eq!(reply_for(&req, &MockPolicy::First), "DIRECTIVE: Keep, Forward");
    }

    #[test]
    fn policy_parse() {
        assert_eq!("first".parse::<MockPolicy>().unwrap(), MockPolicy::First);
        assert_eq!("fixed:b".parse::<MockPolicy>().unwrap(), MockPolicy::Fixed('B'));
        assert_eq!(
            "rule".parse::<MockPolicy>().unwrap(),
            MockPolicy::RuleHighestListedScore
        );
        assert!("fixed:".parse::<MockPolicy>().is_err());
        assert!("bogus".parse::<MockPolicy>().is_err());
    }
}
