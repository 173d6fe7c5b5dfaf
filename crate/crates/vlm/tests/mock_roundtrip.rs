//! Client/server integration: policies, retry behavior, auth header,
//! truncated bodies, and bit-exact wire fixtures in both directions.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;
use vsf_core::scenario::{Command, Pose2D};
use vsf_core::EgoState;
use vsf_vlm::protocol::{ChatRequest, ChatResponse};
use vsf_vlm::{
    build_selection_prompt, label_for, parse_selection, query_vlm, CandidateInfo, MockPolicy,
    MockVlmServer, VlmEndpointConfig,
};

fn ego() -> EgoState {
    EgoState {
        pose: Pose2D::new(0.0, 0.0, 0.0),
        speed: 8.0,
        accel: -0.5,
        command: Command::Forward,
    }
}

fn candidates() -> Vec<CandidateInfo> {
    vec![
        CandidateInfo { label: label_for(0), scorer_id: "oracle".into(), fused_score: 0.2 },
        CandidateInfo { label: label_for(1), scorer_id: "noisy1".into(), fused_score: 0.9 },
        CandidateInfo { label: label_for(2), scorer_id: "noisy2".into(), fused_score: 0.5 },
    ]
}

fn endpoint(server: &MockVlmServer) -> VlmEndpointConfig {
    let mut cfg = VlmEndpointConfig::new(server.base_url());
    cfg.timeout = Duration::from_secs(5);
    cfg.backoff = Duration::from_millis(5);
    cfg.api_key = None;
    cfg
}

#[test]
fn policies_answer_contractually() {
    let cases = [
        (MockPolicy::First, 'A'),
        (MockPolicy::Fixed('B'), 'B'),
        (MockPolicy::RuleHighestListedScore, 'B'),
    ];
    for (policy, expect) in cases {
        let server = MockVlmServer::spawn(policy.clone(), 0).unwrap();
        let cfg = endpoint(&server);
        let messages = build_selection_prompt(&ego(), &candidates(), &[]);
        let reply = query_vlm(messages, &cfg).unwrap();
        assert_eq!(reply, format!("SELECTION: {expect}"), "policy {policy:?}");
        let parsed = parse_selection(&reply, &['A', 'B', 'C']).unwrap();
        assert_eq!(parsed.chosen_label, expect);
    }
}

#[test]
fn retries_survive_two_injected_failures() {
    let server = MockVlmServer::spawn(MockPolicy::Fixed('C'), 0).unwrap();
    server.fail_next(2);
    let mut cfg = endpoint(&server);
    cfg.max_retries = 2;
    let reply = query_vlm(build_selection_prompt(&ego(), &candidates(), &[]), &cfg).unwrap();
    assert_eq!(reply, "SELECTION: C");

    // with no retries left the same failure surfaces as transport
    server.fail_next(2);
    cfg.max_retries = 1;
    let err = query_vlm(build_selection_prompt(&ego(), &candidates(), &[]), &cfg).unwrap_err();
    assert!(matches!(err, vsf_vlm::VlmError::Transport { attempts: 2, .. }), "{err:?}");
}

#[test]
fn concurrent_requests_are_served() {
    let server = MockVlmServer::spawn(MockPolicy::First, 0).unwrap();
    let url = server.base_url();
    let mut handles = Vec::new();
    for _ in 0..8 {
        let url = url.clone();
        handles.push(std::thread::spawn(move || {
            let mut cfg = VlmEndpointConfig::new(url);
            cfg.api_key = None;
            cfg.backoff = Duration::from_millis(5);
            query_vlm(build_selection_prompt(&ego(), &candidates(), &[]), &cfg).unwrap()
        }));
    }
    for handle in handles {
        assert_eq!(handle.join().unwrap(), "SELECTION: A");
    }
}

/// Read a full HTTP request (headers plus Content-Length body).
fn read_full_request(stream: &mut std::net::TcpStream) -> Vec<u8> {
    let mut raw = Vec::new();
    let mut buf = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = raw.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos;
        }
        let n = stream.read(&mut buf).unwrap();
        assert!(n > 0, "client closed before finishing headers");
        raw.extend_from_slice(&buf[..n]);
    };
    let head = String::from_utf8_lossy(&raw[..header_end]).to_string();
    let content_length: usize = head
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())
                .flatten()
        })
        .unwrap_or(0);
    while raw.len() < header_end + 4 + content_length {
        let n = stream.read(&mut buf).unwrap();
        assert!(n > 0, "client closed before finishing body");
        raw.extend_from_slice(&buf[..n]);
    }
    raw
}

#[test]
fn truncated_body_is_a_protocol_error() {
    // raw responder that advertises more bytes than it sends
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let handle = std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let _ = read_full_request(&mut stream);
        let body = b"{\"choices\":[{\"mess"; // cut mid-record
        let head =
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: 999\r\nConnection: close\r\n\r\n"
                .to_string();
        stream.write_all(head.as_bytes()).unwrap();
        stream.write_all(body).unwrap();
    });
    let mut cfg = VlmEndpointConfig::new(format!("http://127.0.0.1:{port}"));
    cfg.max_retries = 0;
    cfg.api_key = None;
    let err = query_vlm(build_selection_prompt(&ego(), &candidates(), &[]), &cfg).unwrap_err();
    assert!(matches!(err, vsf_vlm::VlmError::Protocol(_)), "{err:?}");
    handle.join().unwrap();
}

#[test]
fn bearer_header_sent_when_key_set() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let handle = std::thread::spawn(move || -> String {
        let (mut stream, _) = listener.accept().unwrap();
        let raw = read_full_request(&mut stream);
        let body = serde_json::to_vec(&ChatResponse::of_text("SELECTION: A")).unwrap();
        let head = format!(
            "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            body.len()
        );
        stream.write_all(head.as_bytes()).unwrap();
        stream.write_all(&body).unwrap();
        String::from_utf8_lossy(&raw).to_string()
    });
    let mut cfg = VlmEndpointConfig::new(format!("http://127.0.0.1:{port}"));
    cfg.api_key = Some("sekrit".into());
    cfg.max_retries = 0;
    let reply = query_vlm(build_selection_prompt(&ego(), &candidates(), &[]), &cfg).unwrap();
    assert_eq!(reply, "SELECTION: A");
    let request_head = handle.join().unwrap();
    assert!(request_head.contains("Authorization: Bearer sekrit"));
    assert!(request_head.contains("POST /v1/chat/completions HTTP/1.1"));
}

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden_check(name: &str, actual: &[u8]) {
    let path = fixture_path(name);
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path)
        .unwrap_or_else(|e| panic!("missing fixture {} ({e}); run with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(
        expected,
        actual,
        "fixture {} drifted; rerun with UPDATE_GOLDEN=1 and review the diff",
        path.display()
    );
}

#[test]
fn request_wire_fixture_is_bit_exact() {
    let messages = build_selection_prompt(&ego(), &candidates(), &[]);
    let request = ChatRequest { model: "mock-vlm".into(), temperature: 0.0, messages };
    let bytes = serde_json::to_vec_pretty(&request).unwrap();
    golden_check("chat_request.json", &bytes);
}

#[test]
fn response_wire_fixture_parses_bit_exact() {
    let response = ChatResponse::of_text("SELECTION: B");
    let bytes = serde_json::to_vec_pretty(&response).unwrap();
    golden_check("chat_response.json", &bytes);
    // and the stored fixture itself must parse back to the same reply
    let stored = std::fs::read(fixture_path("chat_response.json")).unwrap();
    let parsed: ChatResponse = serde_json::from_slice(&stored).unwrap();
    assert_eq!(parsed.choices[0].message.content, "SELECTION: B");
}
