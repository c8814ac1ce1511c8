use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use spectraprompt_core::backend::{
    Backend, BackendError, HttpBackend, HttpConfig, ModelClient, ModelRequest, ResponseCache, RetryPolicy,
};

struct Captured {
    headers: Vec<String>,
    body: String,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn scripted_server(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/generate", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Captured {
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        retries: 3,
        backoff_base_ms: 1,
        max_backoff_ms: 4,
    }
}

fn request() -> ModelRequest {
    ModelRequest::new("Answer: ", vec![vec![0x89, b'P', b'N', b'G']]).with_tag("S2_patch_1")
}

fn http_client(url: &str, key: Option<&str>) -> ModelClient {
    let mut config = HttpConfig::new(url, "test-model");
    config.api_key = key.map(str::to_string);
    config.timeout_s = 5;
    ModelClient::new(Arc::new(HttpBackend::new(config).unwrap())).with_retry(fast_retry())
}

#[test]
fn three_server_errors_then_success() {
    let (url, seen) = scripted_server(vec![
        (500, "{}"),
        (500, "{}"),
        (500, "{}"),
        (200, r#"{"text": "(37)"}"#),
    ]);
    let resp = http_client(&url, Some("sk-test")).query(&request()).unwrap();
    assert_eq!(resp.text, "(37)");
    assert_eq!(resp.retries, 3);
    assert!(!resp.from_cache);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 4);
    assert!(seen[0].headers.iter().any(|h| h == "authorization: Bearer sk-test"), "{:?}", seen[0].headers);
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    let content = body.pointer("/messages/0/content").unwrap().as_array().unwrap();
    assert!(content[0].get("image").is_some());
    assert_eq!(content[1]["text"], "Answer: ");
}

#[test]
fn retries_exhausted_is_transient() {
    let (url, _) = scripted_server(vec![(503, "{}"); 4]);
    let err = http_client(&url, None).query(&request()).unwrap_err();
    assert_eq!(
        err,
        BackendError::Transient {
            message: "HTTP 503 Service Unavailable".into(),
            attempts: 4
        }
    );
    assert!(!err.is_fatal());
}

#[test]
fn unauthorized_is_fatal_auth() {
    let (url, seen) = scripted_server(vec![(401, r#"{"error": "bad key"}"#), (200, r#"{"text": "(1)"}"#)]);
    let err = http_client(&url, Some("wrong")).query(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)), "{err:?}");
    assert!(err.is_fatal());
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_json_is_protocol() {
    let (url, _) = scripted_server(vec![(200, "not json at all")]);
    let err = http_client(&url, None).query(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");

    let (url, _) = scripted_server(vec![(200, r#"{"unexpected": 1}"#)]);
    let err = http_client(&url, None).query(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
}

#[test]
fn openai_and_gemini_shapes() {
    let (url, _) = scripted_server(vec![
        (200, r#"{"choices": [{"message": {"content": "(2),(5)"}}]}"#),
        (200, r#"{"candidates": [{"content": {"parts": [{"text": "(4)"}, {"text": ",(9)"}]}}]}"#),
    ]);
    let client = http_client(&url, None);
    assert_eq!(client.query(&request()).unwrap().text, "(2),(5)");
    let second = ModelRequest::new("other", vec![vec![1]]);
    assert_eq!(client.query(&second).unwrap().text, "(4),(9)");
}

struct Counting {
    calls: AtomicUsize,
}

impl Backend for Counting {
    fn id(&self) -> &str {
        "counting"
    }
    fn complete(&self, req: &ModelRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(format!("({})", req.prompt_text.len()))
    }
}

#[test]
fn identical_request_hits_cache() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
    let client = ModelClient::new(backend.clone()).with_cache(ResponseCache::open(dir.path()).unwrap());
    let first = client.query(&request()).unwrap();
    let second = client.query(&request()).unwrap();
    assert!(!first.from_cache);
    assert!(second.from_cache);
    assert_eq!(first.text, second.text);
    assert_eq!(first.latency_ms, second.latency_ms);
    assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    assert_eq!((client.backend_calls(), client.cache_hits()), (1, 1));

    // a fresh client over the same directory reuses the entry
    let reopened = ModelClient::new(backend.clone()).with_cache(ResponseCache::open(dir.path()).unwrap());
    assert!(reopened.query(&request()).unwrap().from_cache);
    assert_eq!(backend.calls.load(Ordering::SeqCst), 1);

    let mut changed = request();
    changed.params.max_output_tokens = 64;
    assert!(!client.query(&changed).unwrap().from_cache);
    assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
}

struct Instrumented {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl Backend for Instrumented {
    fn id(&self) -> &str {
        "instrumented"
    }
    fn complete(&self, req: &ModelRequest) -> Result<String, BackendError> {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(3));
        self.current.fetch_sub(1, Ordering::SeqCst);
        Ok(req.prompt_text.clone())
    }
}

#[test]
fn in_flight_requests_never_exceed_limit() {
    for limit in [1usize, 4, 16] {
        let backend = Arc::new(Instrumented {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let client = Arc::new(ModelClient::new(backend.clone()).with_max_in_flight(limit));
        let handles: Vec<_> = (0..32)
            .map(|t| {
                let client = Arc::clone(&client);
                thread::spawn(move || {
                    for i in 0..8 {
                        let text = format!("t{t}-{i}");
                        let resp = client.query(&ModelRequest::new(text.clone(), vec![vec![1]])).unwrap();
                        assert_eq!(resp.text, text);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let peak = backend.peak.load(Ordering::SeqCst);
        assert!(peak <= limit, "limit {limit}, peak {peak}");
        assert!(peak >= 1);
        assert_eq!(client.backend_calls(), 256);
    }
}
